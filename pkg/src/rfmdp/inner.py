"""Inner optimisation over product uncertainty sets.

Given one uncertainty set per factor and a value for every joint successor,
find the product distribution that minimises (``worst``) or maximises
(``best``) the expected successor value. Joint vectors follow the state
encoding: factor 0 is the most significant axis.

Backends:

``vertex``
    exact; enumerates Kronecker products of marginal vertices.
``interval-arithmetic``
    joint box with products of marginal bounds, solved greedily; a
    relaxation, so it is pessimistic for ``worst`` and optimistic for ``best``.
``mccormick``
    linear relaxation of the multilinear product, solved by :func:`solve_lp`.
``l1-radius-sum``
    marginal L1 balls enclosed in one joint ball with summed radii.
``flat``
    a single (joint) set, solved directly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import CapExceededError, ConfigError, DomainError, SolverError
from .lp import LinearProgram, solve_lp
from .uncertainty import BoxSet, L1Set, VertexPolytope, compose_l1_radius_sum, DEFAULT_VERTEX_CAP

WORST, BEST = "worst", "best"
DIRECTIONS = (WORST, BEST)
BACKENDS = ("vertex", "interval-arithmetic", "mccormick", "l1-radius-sum", "flat")
DEFAULT_PRODUCT_CAP = 10**6
MEMBER_TOL = 1e-9
POINT_TOL = 1e-15


@dataclass(frozen=True, eq=False)
class InnerProblem:
    marginal_sets: tuple
    values: np.ndarray
    direction: str = WORST

    def __post_init__(self):
        object.__setattr__(self, "marginal_sets", tuple(self.marginal_sets))
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        if not self.marginal_sets:
            raise DomainError("no marginal sets")
        dims = [s.dim for s in self.marginal_sets]
        if values.shape != (int(np.prod(dims)),):
            raise DomainError(f"values have shape {values.shape}, joint dimension is {int(np.prod(dims))}")
        if not np.all(np.isfinite(values)):
            raise DomainError("values must be finite")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.marginal_sets)


@dataclass(frozen=True, eq=False)
class InnerResult:
    value: float
    witness: np.ndarray
    backend: str
    details: dict = field(default_factory=dict)


def _check_direction(direction):
    if direction not in DIRECTIONS:
        raise ConfigError(f"direction must be one of {DIRECTIONS}, got {direction!r}")


def _order(values, direction):
    """Outcome order for mass pouring; stable, so ties go to the lowest index."""
    key = values if direction == WORST else -values
    return np.argsort(key, kind="stable")


# --- single-set solvers ------------------------------------------------------------


def worst_case_box_greedy(box: BoxSet, values, direction: str = WORST) -> InnerResult:
    """Exact optimum over ``box`` intersected with the simplex.

    Start at the lower bounds and pour the missing mass into outcomes in
    order of value (cheapest first for ``worst``).
    """
    _check_direction(direction)
    values = np.asarray(values, dtype=float)
    order = _order(values, direction)
    room = (box.upper - box.lower)[order]
    remaining = 1.0 - box.lower.sum()
    before = np.concatenate(([0.0], np.cumsum(room)[:-1]))
    add = np.clip(remaining - before, 0.0, room)
    witness = box.lower.copy()
    witness[order] += add
    return InnerResult(float(witness @ values), witness, "greedy")


def box_greedy_batch(lowers, uppers, values, direction: str = WORST):
    """Greedy optimum for many boxes sharing one value vector.

    ``lowers`` and ``uppers`` have one box per row. Returns ``(optima,
    witnesses)`` with the same results as :func:`worst_case_box_greedy` row
    by row.
    """
    _check_direction(direction)
    lowers = np.asarray(lowers, dtype=float)
    uppers = np.asarray(uppers, dtype=float)
    values = np.asarray(values, dtype=float)
    order = _order(values, direction)
    room = (uppers - lowers)[:, order]
    remaining = 1.0 - lowers.sum(axis=1)
    before = np.cumsum(room, axis=1) - room
    add = np.clip(remaining[:, None] - before, 0.0, room)
    witnesses = lowers.copy()
    witnesses[:, order] += add
    return witnesses @ values, witnesses


def worst_case_l1(ball: L1Set, values, direction: str = WORST) -> InnerResult:
    """Exact optimum over an L1 ball intersected with the simplex.

    Up to ``radius / 2`` of mass moves onto the best outcome for the
    adversary, taken from the outcomes that are worst for it.
    """
    _check_direction(direction)
    if ball.norm_p != 1:
        raise DomainError(f"only L1 balls are supported here, got norm {ball.norm_p}")
    values = np.asarray(values, dtype=float)
    sup = np.flatnonzero(ball.support)
    order = sup[_order(values[sup], direction)]
    target = order[0]
    witness = ball.nominal.copy()
    budget = min(ball.radius / 2.0, 1.0 - witness[target])
    donors = order[::-1]
    donors = donors[donors != target]
    avail = witness[donors]
    before = np.concatenate(([0.0], np.cumsum(avail)[:-1]))
    take = np.clip(budget - before, 0.0, avail)
    witness[donors] -= take
    witness[target] += take.sum()
    return InnerResult(float(witness @ values), witness, "l1")


def _vertices(s, cap=DEFAULT_VERTEX_CAP) -> np.ndarray:
    if isinstance(s, VertexPolytope):
        return s.vertices
    if isinstance(s, BoxSet):
        return s.vertex_polytope(cap).vertices
    raise ConfigError(f"{type(s).__name__} has no vertex representation; use the l1-radius-sum backend")


def worst_case_vertex_product(problem: InnerProblem, cap: int = DEFAULT_PRODUCT_CAP) -> InnerResult:
    """Exact optimum by enumerating every product of marginal vertices.

    The value tensor is contracted one factor at a time against that factor's
    vertex matrix, so no joint vertex is ever materialised. Ties go to the
    lexicographically first vertex combination.
    """
    verts = [_vertices(s) for s in problem.marginal_sets]
    count = int(np.prod([v.shape[0] for v in verts], dtype=float))
    if count > cap:
        raise CapExceededError(
            f"{count} product vertices exceed the cap of {cap}; use the mccormick backend instead",
            required=count,
            cap=cap,
        )
    sups = [np.any(v > 0, axis=0) for v in verts]
    W = problem.values.reshape(problem.dims)[np.ix_(*[np.flatnonzero(s) for s in sups])]
    for v, s in zip(verts, sups):
        W = np.tensordot(W, v[:, s], axes=([0], [1]))
    flat = W.reshape(-1)
    pick = int(np.argmin(flat) if problem.direction == WORST else np.argmax(flat))
    choice = np.unravel_index(pick, W.shape)
    witness = reduce(np.kron, [v[c] for v, c in zip(verts, choice)])
    return InnerResult(float(witness @ problem.values), witness, "vertex", {"vertex_count": count})


def interval_arithmetic_product(sets) -> BoxSet:
    """Joint box whose bounds are products of the marginal bounds."""
    sets = list(sets)
    if not sets or not all(isinstance(s, BoxSet) for s in sets):
        raise ConfigError("interval arithmetic needs one or more box sets")
    return BoxSet(reduce(np.kron, [s.lower for s in sets]), reduce(np.kron, [s.upper for s in sets]))


def worst_case_interval_arithmetic(problem: InnerProblem) -> InnerResult:
    box = interval_arithmetic_product(problem.marginal_sets)
    res = worst_case_box_greedy(box, problem.values, problem.direction)
    return InnerResult(res.value, res.witness, "interval-arithmetic", {"joint_box": box})


def worst_case_l1_radius_sum(problem: InnerProblem) -> InnerResult:
    if not all(isinstance(s, L1Set) for s in problem.marginal_sets):
        raise ConfigError("the l1-radius-sum backend needs L1 sets for every factor")
    ball = compose_l1_radius_sum(problem.marginal_sets)
    res = worst_case_l1(ball, problem.values, problem.direction)
    return InnerResult(res.value, res.witness, "l1-radius-sum", {"joint_ball": ball})


# --- McCormick relaxation ------------------------------------------------------------


class _Reduction:
    """Restrict a box problem to supports and fold away point-mass factors.

    A factor whose box is a single point contributes a fixed vector, so it is
    contracted into the value tensor; both the exact problem and the
    relaxation are unchanged by this.
    """

    def __init__(self, boxes, values):
        self.dims = tuple(b.dim for b in boxes)
        self.supports = [np.flatnonzero(b.upper > 0) for b in boxes]
        W = values.reshape(self.dims)[np.ix_(*self.supports)]
        self.lowers = [b.lower[s] for b, s in zip(boxes, self.supports)]
        self.uppers = [b.upper[s] for b, s in zip(boxes, self.supports)]
        self.fixed = {
            k: self.lowers[k]
            for k in range(len(boxes))
            if np.all(self.uppers[k] - self.lowers[k] <= POINT_TOL)
        }
        self.free = [k for k in range(len(boxes)) if k not in self.fixed]
        for k in sorted(self.fixed, reverse=True):
            W = np.tensordot(W, self.fixed[k], axes=([k], [0]))
        self.values = W

    def embed(self, h_free) -> np.ndarray:
        """Joint witness over the full domain from a tensor over free factors."""
        T = np.asarray(h_free, dtype=float).reshape([self.supports[k].size for k in self.free])
        axes = list(self.free)
        for k, vec in self.fixed.items():
            T = np.multiply.outer(T, vec)
            axes.append(k)
        T = np.moveaxis(T, list(range(len(axes))), axes) if axes else T
        full = np.zeros(self.dims)
        full[np.ix_(*self.supports)] = T
        return full.reshape(-1)


def _mccormick_rows(h, u, v, uL, uU, vL, vU):
    """Four envelope rows per product ``h = u * v``, all in ``<=`` form.

    Returns column-index triples, coefficient triples and right-hand sides.
    """
    k = h.shape[0]
    cols = np.stack([h, u, v], axis=1)
    cols = np.concatenate([cols] * 4)
    one = np.ones(k)
    coef = np.concatenate(
        [
            np.stack([-one, vL, uL], axis=1),
            np.stack([-one, vU, uU], axis=1),
            np.stack([one, -vL, -uU], axis=1),
            np.stack([one, -vU, -uL], axis=1),
        ]
    )
    rhs = np.concatenate([uL * vL, uU * vU, -uU * vL, -uL * vU])
    return cols, coef, rhs


def build_mccormick_lp(lowers, uppers, values, direction, formulation="tightened", marginal_simplex=True):
    """Relaxation LP of ``min/max <values, p_1 (x) ... (x) p_n>`` over boxes.

    ``formulation="literal"`` chains partial products along the factor order
    (``h_2 = p_1 p_2``, ``h_k = h_{k-1} p_k``) with interval-propagated
    bounds, envelopes per product, and the global simplex equality.

    ``formulation="tightened"`` introduces a product variable for every
    subset of two or more factors, envelopes it against each way of
    splitting off one factor, and adds marginalisation equalities tying
    every subset product to its sub-products. This is a superset of the
    literal constraints and is the default.

    Returns ``(lp, index)`` where ``index[S]`` gives the variable offsets of
    the product over factor subset ``S`` (C-order over its joint outcomes).
    """
    if formulation not in ("tightened", "literal"):
        raise ConfigError(f"unknown McCormick formulation {formulation!r}")
    n = len(lowers)
    ms = [len(l) for l in lowers]
    if formulation == "literal":
        subsets = [tuple(range(k + 1)) for k in range(n)]
    else:
        subsets = [S for size in range(1, n + 1) for S in itertools.combinations(range(n), size)]
    offsets, lo_parts, hi_parts = {}, [], []
    pos = 0
    for S in subsets:
        size = int(np.prod([ms[k] for k in S]))
        offsets[S] = pos + np.arange(size).reshape([ms[k] for k in S])
        lo_parts.append(reduce(np.multiply.outer, [lowers[k] for k in S]).reshape(-1))
        hi_parts.append(reduce(np.multiply.outer, [uppers[k] for k in S]).reshape(-1))
        pos += size
    if formulation == "literal":
        # the chain only holds prefixes; add the remaining single factors
        for k in range(1, n):
            S = (k,)
            offsets[S] = pos + np.arange(ms[k])
            lo_parts.append(lowers[k])
            hi_parts.append(uppers[k])
            pos += ms[k]
    lo = np.concatenate(lo_parts)
    hi = np.concatenate(hi_parts)
    n_vars = pos

    cols, coefs, rhss = [], [], []
    eq_rows = []  # (column indices, coefficients, rhs)
    for S in subsets:
        if len(S) < 2:
            continue
        if formulation == "literal":
            splits = [len(S) - 1]
        elif len(S) == 2:
            splits = [1]
        else:
            splits = range(len(S))
        H = offsets[S]
        for p in splits:
            k = S[p]
            rest = S[:p] + S[p + 1:]
            U = np.broadcast_to(np.expand_dims(offsets[rest], p), H.shape)
            V = np.broadcast_to(offsets[(k,)].reshape([ms[k] if q == p else 1 for q in range(len(S))]), H.shape)
            h, u, v = H.reshape(-1), U.reshape(-1), V.reshape(-1)
            c, a, r = _mccormick_rows(h, u, v, lo[u], hi[u], lo[v], hi[v])
            cols.append(c)
            coefs.append(a)
            rhss.append(r)
        if formulation == "tightened":
            for p in range(len(S)):
                rest = S[:p] + S[p + 1:]
                moved = np.moveaxis(H, p, -1).reshape(-1, ms[S[p]])
                for row, target in zip(moved, offsets[rest].reshape(-1)):
                    eq_rows.append((np.append(row, target), np.append(np.ones(row.size), -1.0), 0.0))
    full = offsets[tuple(range(n))].reshape(-1)
    eq_rows.append((full, np.ones(full.size), 1.0))
    if marginal_simplex or formulation == "tightened":
        for k in range(n):
            idx = offsets[(k,)]
            eq_rows.append((idx, np.ones(idx.size), 1.0))

    cols = np.concatenate(cols) if cols else np.zeros((0, 3), dtype=np.int64)
    coefs = np.concatenate(coefs) if coefs else np.zeros((0, 3))
    A_in = np.zeros((cols.shape[0], n_vars))
    np.add.at(A_in, (np.repeat(np.arange(cols.shape[0]), 3), cols.reshape(-1)), coefs.reshape(-1))
    A_eq = np.zeros((len(eq_rows), n_vars))
    b_eq = np.zeros(len(eq_rows))
    for q, (idx, a, r) in enumerate(eq_rows):
        np.add.at(A_eq[q], idx, a)
        b_eq[q] = r
    c = np.zeros(n_vars)
    c[full] = np.asarray(values, dtype=float).reshape(-1)
    lp = LinearProgram(
        c,
        lo,
        hi,
        "minimize" if direction == WORST else "maximize",
        A_eq=A_eq,
        b_eq=b_eq,
        A_ineq=A_in,
        b_ineq=np.concatenate(rhss) if rhss else np.zeros(0),
    )
    return lp, offsets


def mccormick_worst_case(
    problem: InnerProblem, formulation: str = "tightened", marginal_simplex: bool = True
) -> InnerResult:
    """McCormick relaxation value of a product-of-boxes inner problem.

    The value bounds the exact optimum from below for ``worst`` and from
    above for ``best``. The witness is the relaxed joint variable, which
    need not factorise.
    """
    if not all(isinstance(s, BoxSet) for s in problem.marginal_sets):
        raise ConfigError("the mccormick backend needs box sets for every factor")
    red = _Reduction(problem.marginal_sets, problem.values)
    if not red.free:
        witness = red.embed(np.ones(()))
        return InnerResult(float(witness @ problem.values), witness, "mccormick", {"lp": None})
    if len(red.free) == 1:
        # no bilinear terms left: the relaxation is the box itself
        k = red.free[0]
        res = worst_case_box_greedy(BoxSet(red.lowers[k], red.uppers[k]), red.values, problem.direction)
        witness = red.embed(res.witness)
        return InnerResult(float(witness @ problem.values), witness, "mccormick", {"lp": None})
    lowers = [red.lowers[k] for k in red.free]
    uppers = [red.uppers[k] for k in red.free]
    lp, offsets = build_mccormick_lp(lowers, uppers, red.values, problem.direction, formulation, marginal_simplex)
    sol = solve_lp(lp)
    if not sol.optimal:
        raise SolverError(f"McCormick LP reported {sol.status} for valid boxes")
    h = sol.values[offsets[tuple(range(len(lowers)))].reshape(-1)]
    return InnerResult(sol.objective_value, red.embed(h), "mccormick", {"lp": lp, "solution": sol})


# --- membership ----------------------------------------------------------------------


def spurious_membership_check(point, sets, tol: float = MEMBER_TOL) -> bool:
    """Is ``point`` a product ``P_1 (x) ... (x) P_n`` with each ``P_k`` in its box?

    Unfolds along the first factor: the point must be the outer product of
    its first-factor marginal and the remaining joint, within ``tol``, and
    the marginal must lie in the first box. Recurses on the remainder.
    """
    sets = list(sets)
    H = np.asarray(point, dtype=float)
    dims = [s.dim for s in sets]
    if H.shape != (int(np.prod(dims)),):
        raise DomainError(f"point has shape {H.shape}, expected ({int(np.prod(dims))},)")
    if abs(H.sum() - 1) > tol or np.any(H < -tol):
        return False
    for k, s in enumerate(sets):
        M = H.reshape(dims[k], -1)
        P = M.sum(axis=1)
        R = M.sum(axis=0)
        if np.max(np.abs(M - np.outer(P, R))) > tol:
            return False
        if not s.contains(P, tol):
            return False
        H = R
    return True


# --- dispatch ------------------------------------------------------------------------


def check_backend(backend: str, sets) -> None:
    """Raise :class:`ConfigError` unless ``backend`` can handle ``sets``."""
    if backend not in BACKENDS:
        raise ConfigError(f"unknown backend {backend!r}; choose from {', '.join(BACKENDS)}")
    kinds = {type(s) for s in sets}
    if backend == "flat":
        if len(sets) != 1:
            raise ConfigError("the flat backend needs a single-factor model; flatten it first")
        return
    allowed = {
        "vertex": {BoxSet, VertexPolytope},
        "interval-arithmetic": {BoxSet},
        "mccormick": {BoxSet},
        "l1-radius-sum": {L1Set},
    }[backend]
    bad = kinds - allowed
    if bad:
        names = ", ".join(sorted(k.__name__ for k in bad))
        raise ConfigError(f"backend {backend!r} cannot handle {names} uncertainty sets")


def solve_inner(problem: InnerProblem, backend: str, **options) -> InnerResult:
    check_backend(backend, problem.marginal_sets)
    if backend == "vertex":
        return worst_case_vertex_product(problem, **options)
    if backend == "interval-arithmetic":
        return worst_case_interval_arithmetic(problem)
    if backend == "mccormick":
        return mccormick_worst_case(problem, **options)
    if backend == "l1-radius-sum":
        return worst_case_l1_radius_sum(problem)
    (s,) = problem.marginal_sets
    if isinstance(s, BoxSet):
        res = worst_case_box_greedy(s, problem.values, problem.direction)
    elif isinstance(s, L1Set):
        res = worst_case_l1(s, problem.values, problem.direction)
    else:
        res = worst_case_vertex_product(problem)
    return InnerResult(res.value, res.witness, "flat")
