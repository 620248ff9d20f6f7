"""Dense bounded-variable primal simplex.

Variables carry their own ``[lower, upper]`` bounds (upper may be infinite)
so box constraints never become rows. Inequalities get slack variables; rows
without a usable slack get an artificial for phase 1. The tableau is kept in
condensed form (one column per nonbasic variable), which matters because the
relaxation programs are dominated by inequality rows. Pricing is Dantzig's
rule until too many degenerate pivots accumulate, after which Bland's rule
takes over for the rest of the solve. Ratio-test ties go to the lowest
variable index, so the pivot sequence is a pure function of the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapExceededError, ConfigError, SolverError

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-12
# pivots below this magnitude trigger an immediate refactorisation
SMALL_PIVOT = 1e-3
# direction entries below this never block a step: at that size they are
# usually update noise, and pivoting on noise makes the basis singular
RATIO_TOL = 1e-7
DEFAULT_VARIABLE_CAP = 10**5
MAX_SMALL_PIVOTS = 3
REFACTOR_EVERY = 50
# smallest pivot accepted when removing a zero-level artificial from the basis
DRIVE_OUT_TOL = 1e-7

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """``min/max c.x`` s.t. ``A_eq x = b_eq``, ``A_ineq x (<=|>=) b_ineq``, bounds."""

    objective: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    direction: str = "minimize"
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ineq: np.ndarray | None = None
    b_ineq: np.ndarray | None = None
    senses: tuple[str, ...] | None = None

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float)
        n = c.shape[0]
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if self.direction not in ("minimize", "maximize"):
            raise ConfigError(f"unknown direction {self.direction!r}")
        if not np.all(np.isfinite(lo)):
            raise ConfigError("lower bounds must be finite")
        if np.any(lo > hi):
            raise ConfigError("inconsistent variable bounds")

        def rows(A, b):
            if A is None:
                return np.zeros((0, n)), np.zeros(0)
            A = np.atleast_2d(np.asarray(A, dtype=float))
            b = np.asarray(b, dtype=float).reshape(-1)
            if A.shape[1] != n or A.shape[0] != b.shape[0]:
                raise ConfigError(f"constraint block shape {A.shape} incompatible with {n} variables / {b.shape[0]} rhs")
            return A, b

        A_eq, b_eq = rows(self.A_eq, self.b_eq)
        A_in, b_in = rows(self.A_ineq, self.b_ineq)
        senses = tuple(self.senses) if self.senses is not None else ("<=",) * A_in.shape[0]
        if len(senses) != A_in.shape[0] or any(s not in ("<=", ">=") for s in senses):
            raise ConfigError("one sense ('<=' or '>=') per inequality row required")
        for name, val in (("objective", c), ("lower", lo), ("upper", hi), ("A_eq", A_eq), ("b_eq", b_eq),
                          ("A_ineq", A_in), ("b_ineq", b_in), ("senses", senses)):
            object.__setattr__(self, name, val)

    @property
    def n_vars(self) -> int:
        return self.objective.shape[0]

    def violation(self, x) -> float:
        """Largest constraint or bound violation of ``x``."""
        x = np.asarray(x, dtype=float)
        worst = max(0.0, float(np.max(self.lower - x, initial=0)), float(np.max(x - self.upper, initial=0)))
        if self.A_eq.shape[0]:
            worst = max(worst, float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        if self.A_ineq.shape[0]:
            r = self.A_ineq @ x - self.b_ineq
            sign = np.where(np.asarray(self.senses) == "<=", 1.0, -1.0)
            worst = max(worst, float(np.max(sign * r, initial=0)))
        return worst


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: str
    values: np.ndarray | None = None
    objective_value: float | None = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    """Condensed tableau ``x_B = const - T x_N`` in shifted variables.

    Working state of one solve; never shared.
    """

    def __init__(self, full, b, basis, nonbasic, upper, limit, n_structural, refactor_every=REFACTOR_EVERY):
        self.full = full
        self.b = b
        self.n_structural = n_structural
        # every non-structural column is a signed unit vector
        extra = full[:, n_structural:]
        self.unit_row = np.full(full.shape[1], -1, dtype=np.int64)
        self.unit_coef = np.zeros(full.shape[1])
        if extra.size:
            rows = np.argmax(np.abs(extra), axis=0)
            self.unit_row[n_structural:] = rows
            self.unit_coef[n_structural:] = extra[rows, np.arange(extra.shape[1])]
        self.T = full[:, nonbasic].copy()
        self.xB = b.copy()
        self.basis = basis
        self.nonbasic = nonbasic
        self.upper = upper
        self.at_upper = np.zeros(nonbasic.shape[0], dtype=bool)
        self.iterations = 0
        self.degenerate = 0
        self.small_pivots = 0
        self.bland = False
        self.degenerate_limit = limit
        self.refactor_every = refactor_every

    def basis_solve(self, Y):
        """Solve ``B X = Y`` for the current basis matrix ``B``.

        Slack and artificial columns are signed unit vectors, so only the
        block of structural basic columns against the rows not covered by a
        unit column needs a dense solve.
        """
        basis = self.basis
        unit = basis >= self.n_structural
        rows_u = self.unit_row[basis[unit]]
        covered = np.zeros(self.full.shape[0], dtype=bool)
        covered[rows_u] = True
        rows_r = np.flatnonzero(~covered)
        cols_j = basis[~unit]
        X = np.empty((basis.shape[0],) + Y.shape[1:])
        try:
            XJ = np.linalg.solve(self.full[np.ix_(rows_r, cols_j)], Y[rows_r]) if cols_j.size else Y[rows_r]
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular basis during refactorisation: {exc}") from exc
        X[~unit] = XJ
        if cols_j.size:
            X[unit] = (Y[rows_u] - self.full[np.ix_(rows_u, cols_j)] @ XJ) / self.unit_coef[basis[unit]].reshape(
                (-1,) + (1,) * (Y.ndim - 1)
            )
        else:
            X[unit] = Y[rows_u] / self.unit_coef[basis[unit]].reshape((-1,) + (1,) * (Y.ndim - 1))
        return X

    def refresh(self):
        """Recompute ``T`` and the basic values from the original columns."""
        if not self.basis.size:
            return
        xN = np.where(self.at_upper, self.upper[self.nonbasic], 0.0)
        N = self.full[:, self.nonbasic]
        self.T = self.basis_solve(N)
        self.xB = self.basis_solve(self.b - N @ xN)

    def reduced_costs(self, cost):
        return cost[self.nonbasic] - cost[self.basis] @ self.T

    def pivot(self, r, k, d=None):
        T = self.T
        a = T[r, k]
        if abs(a) < PIVOT_TOL:
            self.small_pivots += 1
            if self.small_pivots >= MAX_SMALL_PIVOTS:
                raise SolverError(
                    f"numerical breakdown: pivot {a:.3e} at row {r}, variable {self.nonbasic[k]}"
                )
        col = T[:, k].copy()
        row = T[r] / a
        T -= np.outer(col, row)
        T[:, k] = -col / a
        row[k] = 1.0 / a
        T[r] = row
        if d is not None:
            dk = d[k]
            d -= dk * row
            d[k] = -dk / a
        self.basis[r], self.nonbasic[k] = self.nonbasic[k], self.basis[r]

    def ratio_test(self, dirv, theta):
        """Leaving row for direction ``dirv``; ``-1`` means a bound flip.

        Outside Bland mode this is a two-pass Harris test: bounds are relaxed
        by the feasibility tolerance to find the step limit, then the row
        with the largest pivot magnitude among those blocking within that
        limit leaves. Bland mode uses the textbook minimum ratio. Remaining
        ties go to the lowest basic variable index.
        """
        dec = dirv > RATIO_TOL
        inc = dirv < -RATIO_TOL
        room_dec = np.maximum(self.xB, 0.0)
        room_inc = np.maximum(self.upper[self.basis] - self.xB, 0.0)
        ratios = np.full(dirv.shape, np.inf)
        ratios[dec] = room_dec[dec] / dirv[dec]
        ratios[inc] = room_inc[inc] / (-dirv[inc])
        if self.bland:
            best = ratios.min()
            if not best < theta:
                return -1, theta, False
            ties = np.flatnonzero(ratios <= best + PIVOT_TOL)
        else:
            relaxed = np.full(dirv.shape, np.inf)
            relaxed[dec] = (room_dec[dec] + FEAS_TOL) / dirv[dec]
            relaxed[inc] = (room_inc[inc] + FEAS_TOL) / (-dirv[inc])
            limit = relaxed.min()
            if not limit < theta:
                return -1, theta, False
            within = np.flatnonzero(ratios <= limit)
            mags = np.abs(dirv[within])
            ties = within[mags >= mags.max()]
        r = int(ties[np.argmin(self.basis[ties])])
        return r, float(ratios[r]), bool(inc[r])

    def run(self, cost):
        """Primal simplex from the current basis; returns OPTIMAL or UNBOUNDED."""
        d = self.reduced_costs(cost)
        while True:
            span = self.upper[self.nonbasic]
            cand = (span > 0) & (((~self.at_upper) & (d < -OPT_TOL)) | (self.at_upper & (d > OPT_TOL)))
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                return OPTIMAL
            if self.bland:
                k = int(idx[np.argmin(self.nonbasic[idx])])
            else:
                k = int(idx[np.argmax(np.abs(d[idx]))])
            increasing = not self.at_upper[k]
            dirv = self.T[:, k] if increasing else -self.T[:, k]
            theta = span[k]
            r = -1
            to_upper = False
            if dirv.size:
                r, theta, to_upper = self.ratio_test(dirv, theta)
            if not np.isfinite(theta):
                return UNBOUNDED
            self.iterations += 1
            if theta <= FEAS_TOL:
                self.degenerate += 1
                if self.degenerate >= self.degenerate_limit:
                    self.bland = True
            self.xB -= theta * dirv
            if r < 0:
                self.at_upper[k] = increasing
                continue
            self.xB[r] = theta if increasing else span[k] - theta
            small = abs(self.T[r, k]) < SMALL_PIVOT
            self.pivot(r, k, d)
            self.at_upper[k] = to_upper
            if small or self.iterations % self.refactor_every == 0:
                self.refresh()
                d = self.reduced_costs(cost)


def solve_lp(lp: LinearProgram, cap: int = DEFAULT_VARIABLE_CAP) -> LpSolution:
    """Solve ``lp``; infeasible and unbounded outcomes are reported in ``status``.

    The tableau is refactorised periodically and after small pivots. If the
    basis still turns singular the solve restarts with a refactorisation
    after every pivot, which is slower but keeps the tableau exact.
    """
    n = lp.n_vars
    if n > cap:
        raise CapExceededError(f"LP has {n} variables, cap is {cap}", required=n, cap=cap)
    try:
        return _solve(lp, REFACTOR_EVERY)
    except SolverError:
        return _solve(lp, 1)


def _solve(lp: LinearProgram, refactor_every: int) -> LpSolution:
    n = lp.n_vars
    m_eq, m_in = lp.A_eq.shape[0], lp.A_ineq.shape[0]
    m = m_eq + m_in
    lo = lp.lower
    cost = lp.objective if lp.direction == "minimize" else -lp.objective

    # shifted system over [x' | slacks | artificials]: A x' + S s + I a = b - A lo
    A = np.zeros((m, n + m_in))
    A[:m_eq, :n] = lp.A_eq
    A[m_eq:, :n] = lp.A_ineq
    if m_in:
        sense = np.where(np.asarray(lp.senses) == "<=", 1.0, -1.0)
        A[m_eq + np.arange(m_in), n + np.arange(m_in)] = sense
    b = np.concatenate([lp.b_eq, lp.b_ineq]) - A[:, :n] @ lo
    flip = b < 0
    A[flip] *= -1
    b[flip] *= -1

    basis = np.full(m, -1, dtype=np.int64)
    slack_rows = m_eq + np.arange(m_in)
    usable = A[slack_rows, n + np.arange(m_in)] > 0
    basis[slack_rows[usable]] = n + np.arange(m_in)[usable]
    art_rows = np.flatnonzero(basis < 0)
    n_art = art_rows.size
    width = n + m_in + n_art
    full = np.zeros((m, width))
    full[:, : n + m_in] = A
    full[art_rows, n + m_in + np.arange(n_art)] = 1.0
    basis[art_rows] = n + m_in + np.arange(n_art)
    is_basic = np.zeros(width, dtype=bool)
    is_basic[basis] = True
    nonbasic = np.flatnonzero(~is_basic).astype(np.int64)
    upper = np.concatenate([lp.upper - lo, np.full(m_in + n_art, np.inf)])
    tab = _Tableau(full, b, basis, nonbasic, upper, 10 * (m + width), n, refactor_every)

    if n_art:
        phase1 = np.zeros(width)
        phase1[n + m_in:] = 1.0
        tab.run(phase1)
        tab.refresh()
        infeas = float(phase1[tab.basis] @ tab.xB)
        if infeas > FEAS_TOL * max(1.0, float(b.max(initial=0))):
            return LpSolution(INFEASIBLE, iterations=tab.iterations)
        tab.upper[n + m_in:] = 0.0
        # pivot zero-level artificials out of the basis where possible; rows
        # where that is impossible are redundant and keep their artificial at 0
        for r in range(m):
            if tab.basis[r] < n + m_in:
                continue
            row = np.abs(tab.T[r])
            row[tab.nonbasic >= n + m_in] = 0.0
            k = int(np.argmax(row)) if row.size else -1
            if k >= 0 and row[k] > DRIVE_OUT_TOL:
                tab.xB[r] = tab.upper[tab.nonbasic[k]] if tab.at_upper[k] else 0.0
                tab.pivot(r, k)
                tab.at_upper[k] = False
    status = tab.run(np.concatenate([cost, np.zeros(m_in + n_art)]))
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, iterations=tab.iterations)

    # recompute basic values from the original columns for accuracy
    x = np.zeros(width)
    x[tab.nonbasic[tab.at_upper]] = tab.upper[tab.nonbasic[tab.at_upper]]
    if m:
        x[tab.basis] = tab.basis_solve(b - full @ x)
    values = np.clip(lo + x[:n], lp.lower, lp.upper)
    return LpSolution(OPTIMAL, values, float(lp.objective @ values), tab.iterations)
