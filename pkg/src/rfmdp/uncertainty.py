"""Marginal uncertainty sets over a single factor's simplex.

Three kinds are supported: boxes intersected with the simplex, L1 balls
intersected with the simplex, and explicit vertex lists. Coordinates outside
a set's support (upper bound 0 for a box, masked for an L1 ball) are fixed at
zero, which is how declared supports of learned models are encoded.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import reduce
from typing import Union

import numpy as np
from scipy.special import betainc

from .errors import CapExceededError, DomainError, EmptySetError, NoDataError

SIMPLEX_TOL = 1e-12
BOX_TOL = 1e-10
DEDUP_TOL = 1e-12
SLACK_TOL = 1e-13
DEFAULT_VERTEX_CAP = 10**5


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BoxSet:
    """``{p in simplex : lower <= p <= upper}``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, hi = _frozen(self.lower), _frozen(self.upper)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DomainError(f"bound shapes {lo.shape} and {hi.shape} differ")
        if np.any(lo < -BOX_TOL) or np.any(hi > 1 + BOX_TOL) or np.any(lo > hi + BOX_TOL):
            raise DomainError("bounds must satisfy 0 <= lower <= upper <= 1")
        if lo.sum() > 1 + BOX_TOL or hi.sum() < 1 - BOX_TOL:
            raise EmptySetError(f"box misses the simplex (sum lower {lo.sum():.6g}, sum upper {hi.sum():.6g})")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def point(cls, p) -> "BoxSet":
        return cls(p, p)

    @classmethod
    def full(cls, n: int, support=None) -> "BoxSet":
        upper = np.ones(n) if support is None else np.asarray(support, dtype=float)
        return cls(np.zeros(n), upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def support(self) -> np.ndarray:
        return self.upper > 0

    def contains(self, p, tol: float = 1e-9) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(
            abs(p.sum() - 1) <= tol and np.all(p >= self.lower - tol) and np.all(p <= self.upper + tol)
        )

    def vertex_polytope(self, cap: int = DEFAULT_VERTEX_CAP) -> "VertexPolytope":
        """Memoised :func:`enumerate_box_vertices`."""
        cached = self.__dict__.get("_vertices")
        if cached is None:
            cached = enumerate_box_vertices(self, cap)
            self.__dict__["_vertices"] = cached
        return cached


@dataclass(frozen=True, eq=False)
class L1Set:
    """``{p in simplex : ||p - nominal||_norm_p <= radius, p = 0 off support}``.

    ``unseen`` flags a set built without data (uniform nominal, radius 2).
    """

    nominal: np.ndarray
    radius: float
    norm_p: float = 1.0
    support: np.ndarray | None = None
    unseen: bool = False

    def __post_init__(self):
        nom = _frozen(self.nominal)
        if abs(nom.sum() - 1) > SIMPLEX_TOL or np.any(nom < 0):
            raise DomainError(f"nominal is not a distribution (sum {nom.sum():.15g})")
        if self.radius < 0:
            raise DomainError(f"negative radius {self.radius}")
        if self.norm_p < 1:
            raise DomainError(f"norm_p {self.norm_p} < 1")
        sup = np.ones(nom.shape, dtype=bool) if self.support is None else _frozen(self.support, bool)
        if np.any(nom[~sup] > 0):
            raise DomainError("nominal has mass outside the support")
        object.__setattr__(self, "nominal", nom)
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "norm_p", float(self.norm_p))

    @property
    def dim(self) -> int:
        return self.nominal.shape[0]

    def contains(self, p, tol: float = 1e-9) -> bool:
        p = np.asarray(p, dtype=float)
        if abs(p.sum() - 1) > tol or np.any(p < -tol) or np.any(np.abs(p[~self.support]) > tol):
            return False
        return bool(np.linalg.norm(p - self.nominal, ord=self.norm_p) <= self.radius + tol)


@dataclass(frozen=True, eq=False)
class VertexPolytope:
    """Convex hull of finitely many distributions (one per row)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = _frozen(np.atleast_2d(self.vertices))
        if v.shape[0] == 0:
            raise DomainError("polytope needs at least one vertex")
        if np.any(np.abs(v.sum(axis=1) - 1) > SIMPLEX_TOL) or np.any(v < 0):
            raise DomainError("every vertex must be a distribution")
        object.__setattr__(self, "vertices", v)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def support(self) -> np.ndarray:
        return np.any(self.vertices > 0, axis=0)


MarginalUncertaintySet = Union[BoxSet, L1Set, VertexPolytope]


# --- confidence intervals ----------------------------------------------------


def beta_quantile(q, a, b, tol: float = 1e-10) -> np.ndarray:
    """Quantile of Beta(a, b) by bisection on the regularized incomplete beta.

    Vectorised over broadcastable ``q, a, b``; absolute tolerance ``tol`` on
    the returned abscissa.
    """
    q, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (q, a, b)))
    lo = np.zeros(q.shape)
    hi = np.ones(q.shape)
    for _ in range(int(math.ceil(math.log2(1 / tol))) + 1):
        mid = 0.5 * (lo + hi)
        below = betainc(a, b, mid) < q
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def _cp_bounds(x, n, delta):
    x = np.asarray(x, dtype=float)
    lo = np.zeros(x.shape)
    hi = np.ones(x.shape)
    pos = x > 0
    if np.any(pos):
        lo[pos] = beta_quantile(delta / 2, x[pos], n - x[pos] + 1)
    part = x < n
    if np.any(part):
        hi[part] = beta_quantile(1 - delta / 2, x[part] + 1, n - x[part])
    return lo, hi


def clopper_pearson(x: int, n: int, delta: float) -> tuple[float, float]:
    """Exact two-sided binomial interval at confidence ``1 - delta``."""
    if n == 0:
        raise NoDataError("no trials: use the full simplex instead")
    if not 0 <= x <= n or n < 0:
        raise DomainError(f"need 0 <= x <= n, got x={x}, n={n}")
    if not 0 < delta < 1:
        raise DomainError(f"delta {delta} outside (0, 1)")
    lo, hi = _cp_bounds([x], n, delta)
    return float(lo[0]), float(hi[0])


def weissman_radius(a: int, n: int, delta: float) -> float:
    """L1 concentration radius for an empirical distribution on ``a`` outcomes."""
    if a < 2:
        raise DomainError(f"support size {a} < 2: ln(2^a - 2) is undefined")
    if n < 1:
        raise DomainError(f"sample count {n} < 1")
    if not 0 < delta < 1:
        raise DomainError(f"delta {delta} outside (0, 1)")
    return math.sqrt(2 * (math.log(2**a - 2) - math.log(delta)) / n)


def _count_row(counts, n, support):
    counts = np.asarray(counts)
    if np.any(counts < 0):
        raise DomainError("negative counts")
    total = int(counts.sum())
    if n is None:
        n = total
    if n != total:
        raise DomainError(f"row total {n} differs from sum of counts {total}")
    sup = np.ones(counts.shape, dtype=bool) if support is None else np.asarray(support, dtype=bool)
    if np.any(counts[~sup] > 0):
        raise DomainError("observations outside the declared support")
    return counts, n, sup


def build_box_set(counts, n: int | None = None, delta: float = 0.05, support=None) -> BoxSet:
    """Box from per-outcome Clopper-Pearson intervals; no data -> full simplex."""
    counts, n, sup = _count_row(counts, n, support)
    if n == 0:
        return BoxSet.full(counts.shape[0], sup)
    if not 0 < delta < 1:
        raise DomainError(f"delta {delta} outside (0, 1)")
    lower = np.zeros(counts.shape)
    upper = np.zeros(counts.shape)
    lower[sup], upper[sup] = _cp_bounds(counts[sup], n, delta)
    if sup.sum() == 1:
        lower[sup] = upper[sup] = 1.0
    return BoxSet(lower, upper)


def build_l1_set(counts, n: int | None = None, delta: float = 0.05, support=None) -> L1Set:
    """L1 ball around the empirical distribution with the Weissman radius.

    No data gives a radius-2 ball (the whole simplex) around the uniform
    distribution on the support. A single-outcome support is known exactly
    and gets radius 0.
    """
    counts, n, sup = _count_row(counts, n, support)
    k = int(sup.sum())
    if n == 0:
        return L1Set(np.where(sup, 1.0 / k, 0.0), 2.0, support=sup, unseen=True)
    nominal = counts / n
    radius = 0.0 if k == 1 else weissman_radius(k, n, delta)
    return L1Set(nominal, radius, support=sup)


# --- geometry ------------------------------------------------------------------


def estimate_box_vertex_count(box: BoxSet) -> int:
    free = int(np.sum(box.upper - box.lower > DEDUP_TOL))
    return max(1, free * 2 ** max(free - 1, 0))


def enumerate_box_vertices(box: BoxSet, cap: int = DEFAULT_VERTEX_CAP) -> VertexPolytope:
    """Vertices of ``box`` intersected with the simplex.

    Every vertex has all coordinates but at most one at a bound; the free
    coordinate absorbs the slack. Candidates are generated per free position
    in ascending order, so duplicates are attributed to the lowest index.
    """
    est = estimate_box_vertex_count(box)
    if est > cap:
        raise CapExceededError(
            f"box may have up to {est} vertices (cap {cap}); use a relaxation backend such as mccormick",
            required=est,
            cap=cap,
        )
    lo, hi = box.lower, box.upper
    movable = np.flatnonzero(hi - lo > DEDUP_TOL)
    base = lo.copy()
    if movable.size == 0:
        return VertexPolytope(base[None, :] / base.sum())
    found = []
    k = movable.size
    bits = np.array(list(itertools.product((0, 1), repeat=k - 1)), dtype=bool).reshape(-1, k - 1)
    for pos in range(k):
        f = movable[pos]
        others = np.delete(movable, pos)
        cand = np.tile(base, (bits.shape[0], 1))
        cand[:, others] = np.where(bits, hi[others], lo[others])
        cand[:, f] = 0.0
        slack = 1.0 - cand.sum(axis=1)
        # the clip below moves the sum, so only round-off may be absorbed
        ok = (slack >= lo[f] - SLACK_TOL) & (slack <= hi[f] + SLACK_TOL)
        cand[:, f] = np.clip(slack, lo[f], hi[f])
        found.append(cand[ok])
    cand = np.concatenate(found)
    kept: list[np.ndarray] = []
    for row in cand:
        if kept and np.min(np.max(np.abs(np.asarray(kept) - row), axis=1)) <= DEDUP_TOL:
            continue
        kept.append(row)
    return VertexPolytope(np.asarray(kept))


def compose_l1_radius_sum(sets) -> L1Set:
    """Enclose a product of L_p balls in one ball with summed radii.

    The nominal is the Kronecker product of the nominals, folded left to
    right, so coordinates follow the joint state encoding.
    """
    sets = list(sets)
    if len(sets) < 1:
        raise DomainError("need at least one set")
    norms = {s.norm_p for s in sets}
    if len(norms) > 1:
        raise DomainError(f"mixed norms {sorted(norms)}")
    nominal = reduce(np.kron, [s.nominal for s in sets])
    support = reduce(np.kron, [s.support.astype(np.uint8) for s in sets]).astype(bool)
    nominal = nominal / nominal.sum()
    return L1Set(
        nominal,
        sum(s.radius for s in sets),
        norm_p=sets[0].norm_p,
        support=support,
        unseen=any(s.unseen for s in sets),
    )


def box_hull_of_l1(s: L1Set) -> BoxSet:
    """Smallest box containing an L1 ball: nominal +- radius/2, clipped."""
    if s.norm_p != 1:
        raise DomainError("box hull is only defined here for L1 balls")
    half = s.radius / 2
    lower = np.where(s.support, np.maximum(0.0, s.nominal - half), 0.0)
    upper = np.where(s.support, np.minimum(1.0, s.nominal + half), 0.0)
    return BoxSet(lower, upper)


def perturb_row(p, epsilon: float) -> BoxSet:
    """L-infinity box of radius ``epsilon`` around a distribution."""
    p = np.asarray(p, dtype=float)
    return BoxSet(np.maximum(0.0, p - epsilon), np.minimum(1.0, p + epsilon))
