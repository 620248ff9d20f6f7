"""Model-based robust learning with high-confidence uncertainty sets.

The learner knows the factored structure (dependency function, supports and
rewards) but not the marginals. It samples fixed-length trajectories from
the hidden model under an optimistic policy, counts marginal outcomes,
inflates the counts into confidence sets and solves the resulting rf-MDP
for a robust policy whose robust value is a high-probability bound on its
true value.
"""

from __future__ import annotations

import io
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, StateRangeError
from .model import FactoredMdp, flat_structure, flatten
from .solver import RfMdp, evaluate_policy_nominal, evaluate_policy_robust, solve_rfmdp
from .uncertainty import build_box_set, build_l1_set

SCHEMES = ("box", "l1")
METHODS = {
    # method name -> (scheme, backend, learns on the flattened state space)
    "mccormick": ("box", "mccormick", False),
    "interval-arithmetic": ("box", "interval-arithmetic", False),
    "vertex": ("box", "vertex", False),
    "l1-radius-sum": ("l1", "l1-radius-sum", False),
    "flat": ("box", "flat", True),
}
CSV_COLUMNS = ("trajectories", "guarantee", "nominal", "recomputes", "wall_ms", "seed")


def fmt(x) -> str:
    """Numbers in result files: 12 significant digits."""
    return "%.12g" % x


# --- counts -----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TransitionCounts:
    """``realisation[i, j, x]`` and pooled ``component[j]`` counts.

    ``component[j]`` sums over all factors using identifier ``j``, so one
    sample adds as many counts to ``j`` as there are factors reading it.
    """

    realisation: np.ndarray
    component: np.ndarray
    supports: dict

    @classmethod
    def empty(cls, structure: FactoredMdp) -> "TransitionCounts":
        n = structure.n_factors
        J = structure.dependency.identifier_count
        width = max(structure.domain_sizes)
        sup = {key: structure.support(*key) for key in structure.relevant_components}
        return cls(np.zeros((n, J, width), dtype=np.int64), np.zeros(J, dtype=np.int64), sup)

    def samples_for(self, factor: int, ident: int) -> int:
        return int(self.realisation[factor, ident].sum())


def record_transitions(counts: TransitionCounts, structure: FactoredMdp, batch) -> TransitionCounts:
    """New counts with every ``(s, a, s')`` in ``batch`` added."""
    batch = np.asarray(batch, dtype=np.int64).reshape(-1, 3)
    if batch.shape[0] == 0:
        return counts
    s, a, s2 = batch.T
    if s.min() < 0 or s.max() >= structure.n_states or s2.min() < 0 or s2.max() >= structure.n_states:
        raise StateRangeError("sample refers to a state outside the model")
    if a.min() < 0 or a.max() >= structure.n_actions:
        raise StateRangeError("sample refers to an unknown action")
    ids = structure.dependency.table[s, a]  # (k, n)
    values = structure.decode_many(s2)  # (k, n)
    realisation = counts.realisation.copy()
    component = counts.component.copy()
    n = structure.n_factors
    factor = np.broadcast_to(np.arange(n), ids.shape)
    np.add.at(realisation, (factor.ravel(), ids.ravel(), values.ravel()), 1)
    np.add.at(component, ids.ravel(), 1)
    return TransitionCounts(realisation, component, counts.supports)


def _pooled(counts: TransitionCounts, ident: int) -> np.ndarray:
    return counts.realisation[:, ident, :].sum(axis=0)


def empirical_estimates(counts: TransitionCounts, structure: FactoredMdp):
    """``(estimates, unseen)``: relative frequencies and the rows without data."""
    estimates, unseen = {}, []
    for i, j in sorted(counts.supports):
        n = int(counts.component[j])
        if n == 0:
            unseen.append((i, j))
            continue
        dom = structure.factors[i].domain_size
        estimates[(i, j)] = _pooled(counts, j)[:dom] / n
    return estimates, unseen


# --- confidence budget -------------------------------------------------------------------


@dataclass(frozen=True)
class ConfidenceBudget:
    beta: float
    scheme: str
    unknown_count: int
    component_count: int
    delta: float

    @property
    def statement(self) -> str:
        return f"with probability >= {1 - self.beta:.12g}, true value >= guarantee"


def split_confidence(beta: float, structure: FactoredMdp, scheme: str) -> ConfidenceBudget:
    """Union-bound split of ``beta`` over all unknown probabilities (box) or rows (l1)."""
    if not 0 < beta < 1:
        raise DomainError(f"beta {beta} outside (0, 1)")
    if scheme not in SCHEMES:
        raise ConfigError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    comps = structure.relevant_components
    if not comps:
        raise DomainError("no relevant transition components")
    U = int(sum(int(structure.support(i, j).sum()) for i, j in comps))
    Q = len(comps)
    delta = beta / U if scheme == "box" else beta / Q
    return ConfidenceBudget(beta, scheme, U, Q, delta)


def build_learned_rfmdp(
    counts: TransitionCounts, budget: ConfidenceBudget, structure: FactoredMdp, cache: dict | None = None
) -> RfMdp:
    """Confidence set per relevant component; unseen rows get the whole simplex.

    ``cache`` (owned by the caller, one per budget) keeps sets whose
    component count has not changed since they were built.
    """
    build = build_box_set if budget.scheme == "box" else build_l1_set
    sets = {}
    for i, j in structure.relevant_components:
        n = int(counts.component[j])
        hit = cache.get((i, j)) if cache is not None else None
        if hit is not None and hit[0] == n:
            sets[(i, j)] = hit[1]
            continue
        dom = structure.factors[i].domain_size
        sets[(i, j)] = build(_pooled(counts, j)[:dom], n, budget.delta, counts.supports[(i, j)])
        if cache is not None:
            cache[(i, j)] = (n, sets[(i, j)])
    base = structure if not structure.marginals else structure.structure()
    return RfMdp(base, sets)


# --- sampling ---------------------------------------------------------------------------


class ModelSampler:
    """Sampling access to a hidden model.

    Only the structure is exposed; transitions are drawn from the hidden
    marginals and policies can be evaluated on the hidden model for
    validation.
    """

    def __init__(self, model: FactoredMdp):
        model.check()
        self._model = model
        self._cdf = np.cumsum(flatten(model).transitions, axis=2)
        self.structure = model.structure()

    def step(self, s: int, a: int, rng: np.random.Generator) -> int:
        row = self._cdf[s, a]
        return int(min(np.searchsorted(row, rng.random() * row[-1], side="right"), row.shape[0] - 1))

    def trajectory(self, policy: np.ndarray, length: int, rng: np.random.Generator) -> np.ndarray:
        """``(length, 3)`` array of ``(s, a, s')`` starting at the initial state."""
        out = np.empty((length, 3), dtype=np.int64)
        s = self.structure.initial_state
        for t in range(length):
            a = int(policy[min(t, policy.shape[0] - 1), s] if policy.ndim == 2 else policy[s])
            s2 = self.step(s, a, rng)
            out[t] = (s, a, s2)
            s = s2
        return out

    def evaluate(self, policy) -> np.ndarray:
        return evaluate_policy_nominal(self._model, policy)


# --- loop --------------------------------------------------------------------------------


@dataclass(frozen=True)
class LearningConfig:
    method: str = "mccormick"
    beta: float = 1e-4
    trajectory_length: int = 5
    total_trajectories: int = 1000
    checkpoint_interval: int = 100
    seed: int = 0
    scheme: str | None = None

    def resolved(self):
        """``(scheme, backend, flat)`` for this method."""
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        scheme, backend, flat = METHODS[self.method]
        if self.scheme is not None and self.scheme != scheme:
            raise ConfigError(f"method {self.method!r} needs the {scheme!r} scheme, got {self.scheme!r}")
        if self.trajectory_length < 1:
            raise ConfigError("trajectory_length must be >= 1")
        if self.total_trajectories < 0 or self.checkpoint_interval < 1:
            raise ConfigError("total_trajectories must be >= 0 and checkpoint_interval >= 1")
        return scheme, backend, flat


@dataclass(frozen=True)
class Checkpoint:
    trajectories: int
    guarantee: float
    nominal: float
    recomputes: int
    wall_time: float


@dataclass
class LearningTrace:
    checkpoints: list
    seed: int
    config: dict
    maximizing: bool = True
    metadata: dict = field(default_factory=dict)

    @property
    def trajectories(self) -> np.ndarray:
        return np.array([c.trajectories for c in self.checkpoints])

    @property
    def guarantees(self) -> np.ndarray:
        return np.array([c.guarantee for c in self.checkpoints])

    @property
    def nominals(self) -> np.ndarray:
        return np.array([c.nominal for c in self.checkpoints])

    def violations(self, tol: float = 1e-9) -> int:
        """Checkpoints where the guarantee is not on the safe side of the true value."""
        g, v = self.guarantees, self.nominals
        bad = g > v + tol if self.maximizing else g < v - tol
        return int(bad.sum())

    def to_csv(self, timing: bool = False) -> str:
        buf = io.StringIO()
        buf.write(",".join(CSV_COLUMNS) + "\n")
        for c in self.checkpoints:
            wall = fmt(c.wall_time * 1000) if timing else ""
            buf.write(f"{c.trajectories},{fmt(c.guarantee)},{fmt(c.nominal)},{c.recomputes},{wall},{self.seed}\n")
        return buf.getvalue()


def _exploration_policy(rfmdp: RfMdp, backend: str) -> np.ndarray:
    return solve_rfmdp(rfmdp, backend, env_direction="best").policy


def _checkpoint(rfmdp, backend, sampler, k, recomputes, start):
    sol = solve_rfmdp(rfmdp, backend)
    if rfmdp.base.objective.kind == "finite-horizon-reward":
        # backward induction already evaluates its own greedy plan exactly
        robust = sol.values
    else:
        robust = evaluate_policy_robust(rfmdp, sol.policy, backend)
    s0 = rfmdp.base.initial_state
    nominal = sampler.evaluate(sol.policy)
    return Checkpoint(k, float(robust[s0]), float(nominal[s0]), recomputes, time.perf_counter() - start)


def learning_loop(sampler: ModelSampler, config: LearningConfig) -> LearningTrace:
    """Optimistic exploration with doubling-triggered replanning.

    Trajectory ``k`` (counted from 1) draws from its own stream
    ``default_rng([seed, k - 1])`` so traces are reproducible. The exploration policy is recomputed whenever
    some identifier's component count reaches twice its value at the last
    recomputation (or becomes positive for the first time). At every
    checkpoint the learned rf-MDP is rebuilt and solved from scratch.
    """
    scheme, backend, flat = config.resolved()
    if sampler.structure.objective.kind == "expected-steps":
        # with no data the adversary can keep the target out of reach forever
        raise ConfigError("learning needs a reward or reachability objective; expected steps are unbounded without data")
    structure = flat_structure(sampler.structure) if flat else sampler.structure
    budget = split_confidence(config.beta, structure, scheme)
    counts = TransitionCounts.empty(structure)
    start = time.perf_counter()
    recomputes = 0
    cache = {}
    snapshot = counts.component.copy()
    rf = build_learned_rfmdp(counts, budget, structure, cache)
    explore = _exploration_policy(rf, backend)
    checkpoints = [_checkpoint(rf, backend, sampler, 0, recomputes, start)]
    for k in range(1, config.total_trajectories + 1):
        rng = np.random.default_rng([config.seed, k - 1])
        batch = sampler.trajectory(explore, config.trajectory_length, rng)
        counts = record_transitions(counts, structure, batch)
        comp = counts.component
        if np.any(((snapshot == 0) & (comp > 0)) | ((snapshot > 0) & (comp >= 2 * snapshot))):
            rf = build_learned_rfmdp(counts, budget, structure, cache)
            explore = _exploration_policy(rf, backend)
            snapshot = comp.copy()
            recomputes += 1
        if k % config.checkpoint_interval == 0 or k == config.total_trajectories:
            rf = build_learned_rfmdp(counts, budget, structure, cache)
            checkpoints.append(_checkpoint(rf, backend, sampler, k, recomputes, start))
    meta = {
        "scheme": scheme,
        "backend": backend,
        "flat": flat,
        "delta": budget.delta,
        "unknown_count": budget.unknown_count,
        "component_count": budget.component_count,
        "statement": budget.statement,
        "warm_start": False,
        "unseen_l1_nominal": "uniform over support" if scheme == "l1" else None,
    }
    return LearningTrace(checkpoints, config.seed, asdict(config), structure.objective.maximizing, meta)


# --- reporting ---------------------------------------------------------------------------


def pac_report(trace: LearningTrace, budget: ConfidenceBudget | None = None) -> dict:
    """Per-checkpoint rows plus the confidence statement, as text and data."""
    if not trace.checkpoints:
        raise DomainError("empty trace")
    beta = budget.beta if budget is not None else trace.config["beta"]
    relation = ">=" if trace.maximizing else "<="
    statement = f"with probability >= {fmt(1 - beta)}, true value {relation} guarantee"
    rows = [
        {"trajectories": c.trajectories, "guarantee": c.guarantee, "nominal": c.nominal, "beta": beta}
        for c in trace.checkpoints
    ]
    lines = ["trajectories,guarantee,nominal,beta"]
    lines += [f"{r['trajectories']},{fmt(r['guarantee'])},{fmt(r['nominal'])},{fmt(beta)}" for r in rows]
    return {"rows": rows, "statement": statement, "csv": "\n".join(lines) + "\n",
            "text": statement + "\n" + "\n".join(lines[1:])}


def median_trace(traces) -> list[dict]:
    """Median guarantee and nominal value per checkpoint across seeds."""
    traces = list(traces)
    if not traces:
        return []
    ks = traces[0].trajectories
    if any(not np.array_equal(t.trajectories, ks) for t in traces):
        raise ConfigError("traces have different checkpoint schedules")
    g = np.median(np.stack([t.guarantees for t in traces]), axis=0)
    v = np.median(np.stack([t.nominals for t in traces]), axis=0)
    return [{"trajectories": int(k), "guarantee": float(a), "nominal": float(b)} for k, a, b in zip(ks, g, v)]


def trajectories_to_target(trace: LearningTrace, target: float, tol: float = 1e-9) -> float:
    """First checkpoint whose guarantee reaches ``target``; ``inf`` if never."""
    g = trace.guarantees
    hit = g >= target - tol if trace.maximizing else g <= target + tol
    idx = np.flatnonzero(hit)
    return float(trace.trajectories[idx[0]]) if idx.size else float("inf")
