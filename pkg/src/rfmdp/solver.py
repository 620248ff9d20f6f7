"""Robust dynamic programming over factored uncertainty sets.

The environment picks, for every state-action pair independently, one
distribution from each factor's set (rectangularity), so each backup splits
into one inner problem per pair. Pairs with the same identifier tuple share
their sets, so each distinct tuple is solved once per sweep.

Objective semantics:

* discounted-reward: ``Q = r + discount * E[V]``
* finite-horizon-reward: ``horizon`` undiscounted backward sweeps
* reachability: target states are fixed at 1, others get ``E[V]``
* expected-steps: target states are fixed at 0, others ``r + E[V]`` where
  ``r`` is the per-step cost
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError, DivergenceError, DomainError, SolverError, StateRangeError, ValidationError
from .inner import BEST, WORST, InnerProblem, box_greedy_batch, check_backend, solve_inner
from .model import FactoredMdp, Violation, flatten, validate_fmdp
from .uncertainty import BoxSet, L1Set, VertexPolytope

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 10**5
NOMINAL_TOL = 1e-8
DIVERGENCE_LIMIT = 1e9
ENV_DIRECTIONS = ("worst", "best")


@dataclass(frozen=True, eq=False)
class RfMdp:
    """Factored structure plus one uncertainty set per ``(factor, identifier)``."""

    base: FactoredMdp
    sets: dict

    def __post_init__(self):
        object.__setattr__(self, "sets", {(int(i), int(j)): s for (i, j), s in self.sets.items()})

    @cached_property
    def violations(self) -> tuple[Violation, ...]:
        out = list(validate_fmdp(self.base, require_marginals=False))
        if out:
            return tuple(out)
        for i, j in self.base.relevant_components:
            s = self.sets.get((i, j))
            if s is None:
                out.append(Violation("uncertainty", (i, j), "missing set for reachable identifier"))
            elif not isinstance(s, (BoxSet, L1Set, VertexPolytope)):
                out.append(Violation("uncertainty", (i, j), f"unsupported set type {type(s).__name__}"))
            elif s.dim != self.base.factors[i].domain_size:
                out.append(Violation("uncertainty", (i, j), f"set dimension {s.dim} != domain size"))
        return tuple(out)

    def check(self) -> "RfMdp":
        if self.violations:
            raise ValidationError(self.violations)
        return self

    @cached_property
    def _pair_keys(self):
        """Distinct identifier tuples and the tuple index of every ``(s, a)``."""
        table = self.base.dependency.table
        n_s, n_a, n = table.shape
        keys, inverse = np.unique(table.reshape(-1, n), axis=0, return_inverse=True)
        return keys, inverse.reshape(n_s, n_a)

    @cached_property
    def _stacked_boxes(self):
        """``(lowers, uppers)`` per identifier tuple when the model is one
        factor with box sets only, else ``None``."""
        if self.base.n_factors != 1:
            return None
        sets = [self.sets[(0, int(k[0]))] for k in self._pair_keys[0]]
        if not all(isinstance(b, BoxSet) for b in sets):
            return None
        return np.stack([b.lower for b in sets]), np.stack([b.upper for b in sets])

    def sets_for(self, key) -> tuple:
        return tuple(self.sets[(i, int(j))] for i, j in enumerate(key))

    def contains(self, model: FactoredMdp, tol: float = 1e-9) -> bool:
        """Does every marginal of ``model`` lie in its uncertainty set?"""
        for (i, j), s in self.sets.items():
            row = model.marginals.get((i, j))
            if row is None:
                continue
            if isinstance(s, VertexPolytope):
                raise ConfigError("membership in vertex polytopes is not checked here")
            if not s.contains(row, tol):
                return False
        return True


def rfmdp_from_points(model: FactoredMdp) -> RfMdp:
    """Degenerate rf-MDP whose sets are the model's own marginals."""
    model.check()
    sets = {key: BoxSet.point(model.marginals[key]) for key in model.relevant_components}
    return RfMdp(model.structure(), sets)


@dataclass(frozen=True, eq=False)
class RobustSolution:
    """Robust values, greedy policy and the environment's chosen distributions.

    ``policy`` has shape ``(S,)``, or ``(horizon, S)`` for finite-horizon
    objectives where row ``t`` is the action at step ``t``. ``witnesses``
    maps each state to the joint successor distribution chosen for its
    policy action at the first step.
    """

    values: np.ndarray
    policy: np.ndarray
    witnesses: dict
    method: str
    iterations: int
    residual: float
    initial_state: int
    env_direction: str = "worst"
    metadata: dict = field(default_factory=dict)

    @property
    def initial_value(self) -> float:
        return float(self.values[self.initial_state])

    def first_step_policy(self) -> np.ndarray:
        return self.policy if self.policy.ndim == 1 else self.policy[0]


def _inner_direction(maximizing: bool, env_direction: str) -> str:
    if env_direction not in ENV_DIRECTIONS:
        raise ConfigError(f"env_direction must be one of {ENV_DIRECTIONS}, got {env_direction!r}")
    against_agent = env_direction == "worst"
    return WORST if maximizing == against_agent else BEST


def _targets(model: FactoredMdp):
    obj = model.objective
    mask = np.zeros(model.n_states, dtype=bool)
    if obj.kind in ("reachability", "expected-steps"):
        mask[list(obj.target_states)] = True
    fixed = 1.0 if obj.kind == "reachability" else 0.0
    return mask, fixed


def _stage(model: FactoredMdp):
    """``(reward table, continuation weight)`` of one backup."""
    obj = model.objective
    if obj.kind == "discounted-reward":
        return model.rewards, obj.discount
    if obj.kind == "reachability":
        return np.zeros_like(model.rewards), 1.0
    return model.rewards, 1.0


def robust_bellman_backup(
    rfmdp: RfMdp,
    values,
    backend: str,
    agent_direction: str | None = None,
    env_direction: str = "worst",
    policy=None,
    **inner_options,
):
    """One robust backup.

    Returns ``(new_values, actions, witnesses)`` where ``witnesses`` maps each
    non-target state to the joint distribution chosen for its action. With
    ``policy`` given, only that action is backed up (policy evaluation).
    """
    base = rfmdp.base
    values = np.asarray(values, dtype=float)
    if values.shape != (base.n_states,):
        raise StateRangeError(f"value vector has shape {values.shape}, expected ({base.n_states},)")
    if agent_direction is None:
        maximizing = base.objective.maximizing
    elif agent_direction in ("max", "maximize"):
        maximizing = True
    elif agent_direction in ("min", "minimize"):
        maximizing = False
    else:
        raise ConfigError(f"agent_direction must be max or min, got {agent_direction!r}")
    direction = _inner_direction(maximizing, env_direction)
    keys, pair_key = rfmdp._pair_keys
    rewards, weight = _stage(base)
    target, fixed = _targets(base)
    live = np.flatnonzero(~target)
    if policy is not None:
        policy = np.asarray(policy, dtype=np.int64)
        if policy.shape != (base.n_states,) or policy.min(initial=0) < 0 or policy.max(initial=0) >= base.n_actions:
            raise StateRangeError("policy must give one valid action per state")
        needed = np.unique(pair_key[live, policy[live]])
    else:
        needed = np.unique(pair_key[live])
    inner_value = np.zeros(len(keys))
    stacked = rfmdp._stacked_boxes if backend == "flat" else None
    if stacked is not None:
        if not np.all(np.isfinite(values)):
            raise DomainError("values must be finite")
        optima, rows = box_greedy_batch(stacked[0][needed], stacked[1][needed], values, direction)
        inner_value[needed] = optima
        witness_of = dict(zip(needed.tolist(), rows))
    else:
        witness_of = {}
        for q in needed:
            sets = rfmdp.sets_for(keys[q])
            check_backend(backend, sets)
            res = solve_inner(InnerProblem(sets, values, direction), backend, **inner_options)
            inner_value[q] = res.value
            witness_of[int(q)] = res.witness
    new = np.full(base.n_states, fixed)
    actions = np.zeros(base.n_states, dtype=np.int64)
    if policy is not None:
        act = policy[live]
        new[live] = rewards[live, act] + weight * inner_value[pair_key[live, act]]
        actions[live] = act
    elif live.size:
        Q = rewards[live] + weight * inner_value[pair_key[live]]
        act = np.argmax(Q, axis=1) if maximizing else np.argmin(Q, axis=1)
        new[live] = Q[np.arange(live.size), act]
        actions[live] = act
    witnesses = {int(s): witness_of[int(pair_key[s, actions[s]])] for s in live}
    return new, actions, witnesses


def _prepare(rfmdp: RfMdp, backend: str):
    rfmdp.check()
    for key in rfmdp._pair_keys[0]:
        check_backend(backend, rfmdp.sets_for(key))


def _iterate(rfmdp, backend, env_direction, tol, max_iter, policy, initial_values, inner_options):
    base = rfmdp.base
    obj = base.objective
    values = np.zeros(base.n_states) if initial_values is None else np.array(initial_values, dtype=float)
    target, fixed = _targets(base)
    values[target] = fixed
    if obj.kind == "finite-horizon-reward":
        horizon = obj.horizon
        plan = np.zeros((horizon, base.n_states), dtype=np.int64)
        residual = 0.0
        witnesses = {}
        for step in reversed(range(horizon)):
            pol = None
            if policy is not None:
                pol = policy[step] if np.ndim(policy) == 2 else policy
            new, actions, witnesses = robust_bellman_backup(
                rfmdp, values, backend, env_direction=env_direction, policy=pol, **inner_options
            )
            residual = float(np.max(np.abs(new - values)))
            values = new
            plan[step] = actions
        return values, plan, witnesses, horizon, residual
    residual = np.inf
    actions = np.zeros(base.n_states, dtype=np.int64)
    witnesses = {}
    for it in range(1, max_iter + 1):
        new, actions, witnesses = robust_bellman_backup(
            rfmdp, values, backend, env_direction=env_direction, policy=policy, **inner_options
        )
        residual = float(np.max(np.abs(new - values)))
        values = new
        if obj.kind == "expected-steps" and np.max(np.abs(values)) > DIVERGENCE_LIMIT:
            raise DivergenceError(
                f"expected steps exceed {DIVERGENCE_LIMIT:g} after {it} sweeps; "
                "the target may be unreachable under the adversarial model"
            )
        if residual < tol:
            return values, actions, witnesses, it, residual
    hint = " (the target may be unreachable under the adversarial model)" if obj.kind == "expected-steps" else ""
    raise SolverError(f"no convergence within {max_iter} sweeps, residual {residual:.3e}{hint}")


def solve_rfmdp(
    rfmdp: RfMdp,
    backend: str,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    env_direction: str = "worst",
    initial_values=None,
    **inner_options,
) -> RobustSolution:
    """Robust value iteration (or backward induction for finite horizons).

    Starts from the zero vector unless ``initial_values`` is given, which is
    only a warm start and does not change the fixed point for contracting
    objectives.
    """
    _prepare(rfmdp, backend)
    values, policy, witnesses, iterations, residual = _iterate(
        rfmdp, backend, env_direction, tol, max_iter, None, initial_values, inner_options
    )
    return RobustSolution(
        values,
        policy,
        witnesses,
        backend,
        iterations,
        residual,
        rfmdp.base.initial_state,
        env_direction,
        {"objective": rfmdp.base.objective.kind},
    )


def _check_policy(base: FactoredMdp, policy) -> np.ndarray:
    policy = np.asarray(policy, dtype=np.int64)
    ok_shapes = [(base.n_states,)]
    if base.objective.kind == "finite-horizon-reward":
        ok_shapes.append((base.objective.horizon, base.n_states))
    if policy.shape not in ok_shapes:
        raise StateRangeError(f"policy shape {policy.shape} not in {ok_shapes}")
    if policy.size and (policy.min() < 0 or policy.max() >= base.n_actions):
        raise StateRangeError("policy refers to an unknown action")
    return policy


def evaluate_policy_robust(
    rfmdp: RfMdp,
    policy,
    backend: str,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    env_direction: str = "worst",
    **inner_options,
) -> np.ndarray:
    """Values of a fixed policy against the adversarial environment.

    For a maximising objective these are guaranteed lower bounds on the
    policy's value in any model inside the sets; upper bounds when
    minimising.
    """
    _prepare(rfmdp, backend)
    policy = _check_policy(rfmdp.base, policy)
    values, *_ = _iterate(rfmdp, backend, env_direction, tol, max_iter, policy, None, inner_options)
    return values


def evaluate_policy_nominal(model: FactoredMdp, policy, tol: float = NOMINAL_TOL, max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Classical iterative policy evaluation on a concrete model."""
    model.check()
    policy = _check_policy(model, policy)
    flat = flatten(model)
    return _evaluate_flat(flat.transitions, model, policy, tol, max_iter)


def _evaluate_flat(P, model, policy, tol, max_iter):
    obj = model.objective
    rewards, weight = _stage(model)
    target, fixed = _targets(model)
    states = np.arange(model.n_states)
    values = np.where(target, fixed, 0.0)

    def step(values, pol):
        new = rewards[states, pol] + weight * (P[states, pol] @ values)
        return np.where(target, fixed, new)

    if obj.kind == "finite-horizon-reward":
        for t in reversed(range(obj.horizon)):
            values = step(values, policy[t] if policy.ndim == 2 else policy)
        return values
    for _ in range(max_iter):
        new = step(values, policy)
        if obj.kind == "expected-steps" and np.max(np.abs(new)) > DIVERGENCE_LIMIT:
            raise DivergenceError("expected steps diverge under this policy")
        if np.max(np.abs(new - values)) < tol:
            return new
        values = new
    raise SolverError(f"policy evaluation did not converge within {max_iter} sweeps")


def value_iteration_nominal(model: FactoredMdp, tol: float = NOMINAL_TOL, max_iter: int = DEFAULT_MAX_ITER):
    """Classical value iteration on the flattened model: ``(values, policy)``."""
    model.check()
    P = flatten(model).transitions
    obj = model.objective
    rewards, weight = _stage(model)
    target, fixed = _targets(model)
    values = np.where(target, fixed, 0.0)

    def sweep(values):
        Q = rewards + weight * (P @ values)
        act = np.argmax(Q, axis=1) if obj.maximizing else np.argmin(Q, axis=1)
        new = np.where(target, fixed, Q[np.arange(len(values)), act])
        return new, np.where(target, 0, act)

    if obj.kind == "finite-horizon-reward":
        plan = np.zeros((obj.horizon, model.n_states), dtype=np.int64)
        for t in reversed(range(obj.horizon)):
            values, plan[t] = sweep(values)
        return values, plan
    for _ in range(max_iter):
        new, act = sweep(values)
        if np.max(np.abs(new - values)) < tol:
            return new, act
        values = new
    raise SolverError(f"value iteration did not converge within {max_iter} sweeps")
