"""Factored MDP models.

A state is a tuple of factor values ``(x_1, ..., x_n)``; it is stored as a
single integer using big-endian mixed-radix encoding in declared factor
order, so the last factor varies fastest. Joint successor distributions are
Kronecker products of the per-factor marginals in the same order, which makes
a joint distribution vector directly indexable by state index.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property, reduce
from typing import NamedTuple, Sequence

import numpy as np

from .errors import CapExceededError, StateRangeError, ValidationError

ROW_TOL = 1e-12
PRODUCT_TOL = 1e-9
DEFAULT_STATE_CAP = 10**6

OBJECTIVE_KINDS = ("discounted-reward", "finite-horizon-reward", "reachability", "expected-steps")
DIRECTIONS = ("maximize", "minimize")


@dataclass(frozen=True)
class Factor:
    name: str
    domain_size: int


@dataclass(frozen=True, eq=False)
class DependencyFunction:
    """Dense table ``(state, action, factor) -> identifier``."""

    table: np.ndarray
    identifier_count: int

    def __post_init__(self):
        table = np.array(self.table, dtype=np.int64)
        table.setflags(write=False)
        object.__setattr__(self, "table", table)


@dataclass(frozen=True)
class Objective:
    kind: str
    direction: str = "maximize"
    discount: float | None = None
    horizon: int | None = None
    target_states: tuple[int, ...] = ()

    @property
    def maximizing(self) -> bool:
        return self.direction == "maximize"

    def problems(self) -> list[str]:
        out = []
        if self.kind not in OBJECTIVE_KINDS:
            out.append(f"unknown kind {self.kind!r}")
        if self.direction not in DIRECTIONS:
            out.append(f"unknown direction {self.direction!r}")
        if (self.discount is not None) != (self.kind == "discounted-reward"):
            out.append("discount must be given exactly for discounted-reward")
        elif self.discount is not None and not 0 < self.discount < 1:
            out.append(f"discount {self.discount} outside (0, 1)")
        if (self.horizon is not None) != (self.kind == "finite-horizon-reward"):
            out.append("horizon must be given exactly for finite-horizon-reward")
        elif self.horizon is not None and self.horizon < 1:
            out.append(f"horizon {self.horizon} < 1")
        if self.kind in ("reachability", "expected-steps") and not self.target_states:
            out.append(f"{self.kind} needs a non-empty target set")
        return out


class Violation(NamedTuple):
    field: str
    where: tuple
    message: str

    def __str__(self):
        return f"{self.field}{list(self.where)}: {self.message}"


def encode_state(domain_sizes: Sequence[int], assignment: Sequence[int]) -> int:
    if len(assignment) != len(domain_sizes):
        raise StateRangeError(f"assignment has {len(assignment)} values, expected {len(domain_sizes)}")
    index = 0
    for i, (x, m) in enumerate(zip(assignment, domain_sizes)):
        if not 0 <= x < m:
            raise StateRangeError(f"factor {i}: value {x} outside 0..{m - 1}")
        index = index * m + int(x)
    return index


def decode_state(domain_sizes: Sequence[int], index: int) -> tuple[int, ...]:
    total = int(np.prod(domain_sizes, dtype=np.int64))
    if not 0 <= index < total:
        raise StateRangeError(f"state index {index} outside 0..{total - 1}")
    out = []
    for m in reversed(domain_sizes):
        index, x = divmod(index, m)
        out.append(x)
    return tuple(reversed(out))


@dataclass(frozen=True, eq=False)
class FactoredMdp:
    """Ground factored MDP.

    ``marginals`` maps ``(factor, identifier)`` to a probability vector over
    that factor's domain. Identifiers may be shared between factors of equal
    domain size, in which case they denote one shared distribution.
    ``supports`` optionally declares which outcomes of each marginal row can
    occur; it defaults to the non-zero entries of ``marginals``. A structural
    copy (see :meth:`structure`) keeps supports but drops the marginals, which
    is what a learner is allowed to see.
    """

    factors: tuple[Factor, ...]
    actions: tuple[str, ...]
    dependency: DependencyFunction
    marginals: dict
    rewards: np.ndarray
    initial_state: int
    objective: Objective
    supports: dict | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        object.__setattr__(self, "actions", tuple(self.actions))
        rewards = np.array(self.rewards, dtype=float)
        rewards.setflags(write=False)
        object.__setattr__(self, "rewards", rewards)
        rows = {}
        for key, row in self.marginals.items():
            row = np.array(row, dtype=float)
            row.setflags(write=False)
            rows[(int(key[0]), int(key[1]))] = row
        object.__setattr__(self, "marginals", rows)
        if self.supports is not None:
            sup = {}
            for key, mask in self.supports.items():
                mask = np.array(mask, dtype=bool)
                mask.setflags(write=False)
                sup[(int(key[0]), int(key[1]))] = mask
            object.__setattr__(self, "supports", sup)

    # --- shape -------------------------------------------------------------

    @property
    def domain_sizes(self) -> tuple[int, ...]:
        return tuple(f.domain_size for f in self.factors)

    @property
    def n_factors(self) -> int:
        return len(self.factors)

    @property
    def n_states(self) -> int:
        return int(np.prod(self.domain_sizes, dtype=np.int64))

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def encode(self, assignment) -> int:
        return encode_state(self.domain_sizes, assignment)

    def decode(self, index: int) -> tuple[int, ...]:
        return decode_state(self.domain_sizes, index)

    def decode_many(self, indices) -> np.ndarray:
        """Vectorised decode: ``(k,)`` state indices -> ``(k, n)`` values."""
        return np.stack(np.unravel_index(np.asarray(indices), self.domain_sizes), axis=-1)

    # --- structure ---------------------------------------------------------

    @cached_property
    def relevant_components(self) -> tuple[tuple[int, int], ...]:
        """Sorted ``(factor, identifier)`` pairs used by some ``(s, a)``."""
        table = self.dependency.table
        pairs = set()
        for i in range(self.n_factors):
            for j in np.unique(table[:, :, i]):
                pairs.add((i, int(j)))
        return tuple(sorted(pairs))

    def support(self, factor: int, ident: int) -> np.ndarray:
        key = (factor, ident)
        if self.supports is not None and key in self.supports:
            return self.supports[key]
        if key in self.marginals:
            return self.marginals[key] > 0
        return np.ones(self.factors[factor].domain_size, dtype=bool)

    def structure(self) -> "FactoredMdp":
        """Copy without marginals; supports are made explicit."""
        sup = {key: self.support(*key) for key in self.relevant_components}
        return replace(self, marginals={}, supports=sup)

    @cached_property
    def violations(self) -> tuple[Violation, ...]:
        return tuple(validate_fmdp(self))

    def check(self) -> "FactoredMdp":
        if self.violations:
            raise ValidationError(self.violations)
        return self

    @cached_property
    def _dense_transitions(self) -> np.ndarray:
        return _materialize(self)


def validate_fmdp(model: FactoredMdp, require_marginals: bool = True) -> list[Violation]:
    """Report every broken structural invariant; an empty list means valid.

    With ``require_marginals=False`` only the structure is checked, which is
    what robust and learned models need since their base carries no
    marginals.
    """
    out: list[Violation] = []
    names = set()
    for i, f in enumerate(model.factors):
        if f.domain_size < 1:
            out.append(Violation("factors", (i,), f"domain_size {f.domain_size} < 1"))
        if f.name in names:
            out.append(Violation("factors", (i,), f"duplicate name {f.name!r}"))
        names.add(f.name)
    if not model.actions:
        out.append(Violation("actions", (), "no actions"))
    if len(set(model.actions)) != len(model.actions):
        out.append(Violation("actions", (), "duplicate action names"))
    if out:
        return out

    n_s, n_a, n = model.n_states, model.n_actions, model.n_factors
    table = model.dependency.table
    if table.shape != (n_s, n_a, n):
        out.append(Violation("dependency", (), f"table shape {table.shape}, expected {(n_s, n_a, n)}"))
        return out
    if table.size and (table.min() < 0 or table.max() >= model.dependency.identifier_count):
        out.append(Violation("dependency", (), f"identifiers outside 0..{model.dependency.identifier_count - 1}"))
        return out

    used_by: dict[int, list[int]] = {}
    for i, j in model.relevant_components:
        used_by.setdefault(j, []).append(i)
    for j, fs in used_by.items():
        sizes = {model.factors[i].domain_size for i in fs}
        if len(sizes) > 1:
            out.append(Violation("dependency", (j,), f"identifier shared by factors {fs} with unequal domain sizes"))

    for i, j in model.relevant_components:
        row = model.marginals.get((i, j))
        if row is None:
            if require_marginals:
                out.append(Violation("marginals", (i, j), "missing row for reachable identifier"))
            continue
        m = model.factors[i].domain_size
        if row.shape != (m,):
            out.append(Violation("marginals", (i, j), f"length {row.shape[0]}, expected {m}"))
            continue
        if np.any(row < 0) or not np.all(np.isfinite(row)):
            out.append(Violation("marginals", (i, j), "negative or non-finite probability"))
        elif abs(row.sum() - 1.0) > ROW_TOL:
            out.append(Violation("marginals", (i, j), f"sums to {row.sum():.15g}"))
        if model.supports is not None and (i, j) in model.supports:
            mask = model.supports[(i, j)]
            if mask.shape != (m,):
                out.append(Violation("supports", (i, j), "wrong length"))
            elif np.any(row[~mask] > 0):
                out.append(Violation("supports", (i, j), "marginal has mass outside the declared support"))
    for j, fs in used_by.items():
        rows = [model.marginals.get((i, j)) for i in fs]
        rows = [r for r in rows if r is not None]
        if len(rows) > 1 and len({r.shape for r in rows}) == 1:
            if any(np.max(np.abs(r - rows[0])) > ROW_TOL for r in rows[1:]):
                out.append(Violation("marginals", (j,), f"shared identifier has different rows for factors {fs}"))

    if model.rewards.shape != (n_s, n_a):
        out.append(Violation("rewards", (), f"shape {model.rewards.shape}, expected {(n_s, n_a)}"))
    elif not np.all(np.isfinite(model.rewards)):
        out.append(Violation("rewards", (), "non-finite reward"))
    if not 0 <= model.initial_state < n_s:
        out.append(Violation("initial_state", (model.initial_state,), "out of range"))
    for msg in model.objective.problems():
        out.append(Violation("objective", (), msg))
    for s in model.objective.target_states:
        if not 0 <= s < n_s:
            out.append(Violation("objective", (s,), "target state out of range"))
    return out


def _check_sa(model: FactoredMdp, s: int, a: int):
    if not 0 <= s < model.n_states:
        raise StateRangeError(f"state {s} outside 0..{model.n_states - 1}")
    if not 0 <= a < model.n_actions:
        raise StateRangeError(f"action {a} outside 0..{model.n_actions - 1}")


def transition_distribution(model: FactoredMdp, s: int, a: int) -> np.ndarray:
    """Joint successor distribution: Kronecker product of factor marginals."""
    model.check()
    _check_sa(model, s, a)
    ids = model.dependency.table[s, a]
    rows = [model.marginals[(i, int(j))] for i, j in enumerate(ids)]
    return reduce(np.kron, rows)


def _materialize(model: FactoredMdp) -> np.ndarray:
    model.check()
    n_s, n_a = model.n_states, model.n_actions
    out = np.empty((n_s, n_a, n_s))
    cache: dict[tuple, np.ndarray] = {}
    table = model.dependency.table
    for s in range(n_s):
        for a in range(n_a):
            key = tuple(table[s, a])
            row = cache.get(key)
            if row is None:
                row = reduce(np.kron, [model.marginals[(i, int(j))] for i, j in enumerate(key)])
                cache[key] = row
            out[s, a] = row
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class FlatMdp:
    """Explicit MDP with a dense ``(S, A, S)`` transition table."""

    transitions: np.ndarray
    rewards: np.ndarray
    objective: Objective
    initial_state: int
    actions: tuple[str, ...]

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]


def flatten(model: FactoredMdp, cap: int = DEFAULT_STATE_CAP) -> FlatMdp:
    if model.n_states > cap:
        raise CapExceededError(
            f"flattening needs {model.n_states} states, cap is {cap}", required=model.n_states, cap=cap
        )
    return FlatMdp(model._dense_transitions, model.rewards, model.objective, model.initial_state, model.actions)


def flat_structure(model: FactoredMdp) -> FactoredMdp:
    """Re-express a factored model as a single-factor model.

    The single factor is the whole state; identifier ``s * |A| + a`` names
    the successor distribution of ``(s, a)``. Declared supports are products
    of the factor supports. Marginals are carried over when the input has
    them, so this doubles as the flat baseline's ground model.
    """
    n_s, n_a = model.n_states, model.n_actions
    table = np.arange(n_s * n_a, dtype=np.int64).reshape(n_s, n_a, 1)
    has_marginals = bool(model.marginals)
    marginals, supports = {}, {}
    dep = model.dependency.table
    for s in range(n_s):
        for a in range(n_a):
            j = s * n_a + a
            ids = dep[s, a]
            supports[(0, j)] = reduce(np.kron, [model.support(i, int(k)).astype(np.uint8) for i, k in enumerate(ids)]).astype(bool)
            if has_marginals:
                marginals[(0, j)] = model._dense_transitions[s, a]
    return FactoredMdp(
        factors=(Factor("state", n_s),),
        actions=model.actions,
        dependency=DependencyFunction(table, n_s * n_a),
        marginals=marginals,
        rewards=model.rewards,
        initial_state=model.initial_state,
        objective=model.objective,
        supports=supports,
        metadata=dict(model.metadata, flattened=True),
    )
