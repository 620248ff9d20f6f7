"""Benchmark domain generators at desk scale.

Numeric probabilities that the domain descriptions leave open are exposed as
parameters; their defaults are recorded under ``metadata["non_paper_defaults"]``
of every generated model.
"""

from __future__ import annotations

import inspect
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .model import DependencyFunction, Factor, FactoredMdp, Objective
from .solver import RfMdp
from .uncertainty import perturb_row

DOMAINS = ("sysadmin", "chain", "stock", "frozenlake")

RUNNING, FAILED = 1, 0


@dataclass(frozen=True)
class BenchmarkSpec:
    domain: str
    params: dict = field(default_factory=dict)


def _metadata(generator, params, open_names):
    """Generator record; ``open_names`` are parameters without a published value."""
    sig = inspect.signature(generator).parameters
    defaulted = [k for k in open_names if params[k] == sig[k].default]
    return {
        "generator": {"domain": generator.__name__, "params": dict(params)},
        "non_paper_defaults": sorted(defaulted),
    }


def _check_prob(name, p):
    if not (0.0 <= p <= 1.0):
        raise DomainError(f"{name}={p} outside [0, 1]")


def sysadmin(n: int = 3, horizon: int = 5, p_fail_base: float = 0.1, p_fail_neighbor: float = 0.25,
             p_repair: float = 0.95) -> FactoredMdp:
    """Ring of ``n`` machines; value 1 means running.

    A running machine fails with probability
    ``p_fail_base + p_fail_neighbor * (# failed ring neighbours)``, clipped.
    A failed machine stays failed unless repaired. Repairing a machine brings
    it back with probability ``p_repair`` regardless of its state. The reward
    is the number of running machines.

    Identifiers (shared by all machines): 0 repaired, 1 failed and not
    repaired, ``2 + k`` running with ``k`` failed neighbours.
    """
    if n < 1 or horizon < 1:
        raise DomainError("sysadmin needs n >= 1 and horizon >= 1")
    for name, p in (("p_fail_base", p_fail_base), ("p_fail_neighbor", p_fail_neighbor), ("p_repair", p_repair)):
        _check_prob(name, p)
    factors = tuple(Factor(f"machine{i}", 2) for i in range(n))
    actions = tuple(f"repair{i}" for i in range(n)) + ("noop",)
    sizes = (2,) * n
    states = np.stack(np.unravel_index(np.arange(2**n), sizes), axis=-1)
    table = np.zeros((2**n, n + 1, n), dtype=np.int64)
    for i in range(n):
        neighbours = sorted({(i - 1) % n, (i + 1) % n} - {i})
        failed_nb = np.sum(states[:, neighbours] == FAILED, axis=1) if neighbours else np.zeros(2**n, int)
        base_id = np.where(states[:, i] == FAILED, 1, 2 + failed_nb)
        for a in range(n + 1):
            table[:, a, i] = 0 if a == i else base_id
    marginals = {}
    for i in range(n):
        marginals[(i, 0)] = [1 - p_repair, p_repair]
        marginals[(i, 1)] = [1.0, 0.0]
        for k in range(3):
            fail = min(1.0, max(0.0, p_fail_base + p_fail_neighbor * k))
            marginals[(i, 2 + k)] = [fail, 1 - fail]
    used = {(i, int(j)) for i in range(n) for j in np.unique(table[:, :, i])}
    marginals = {k: v for k, v in marginals.items() if k in used}
    rewards = np.repeat(states.sum(axis=1, keepdims=True).astype(float), n + 1, axis=1)
    params = dict(n=n, horizon=horizon, p_fail_base=p_fail_base, p_fail_neighbor=p_fail_neighbor, p_repair=p_repair)
    return FactoredMdp(
        factors,
        actions,
        DependencyFunction(table, 5),
        marginals,
        rewards,
        (2**n) - 1,
        Objective("finite-horizon-reward", "maximize", horizon=horizon),
        metadata=_metadata(sysadmin, params, ("p_fail_base", "p_fail_neighbor", "p_repair")),
    )


def chain(n: int = 2, m: int = 3, p: float = 0.9) -> FactoredMdp:
    """``n`` independent chains over values ``0..m-1`` with one action.

    Below the penultimate value a chain advances with probability ``p`` and
    otherwise resets to 0; from the penultimate value it reaches the end with
    probability ``p`` and otherwise falls back uniformly to ``0..m-3`` (to 0
    when ``m == 2``). The end value is absorbing. The objective is the
    expected number of steps until every chain is at its end.

    The identifier of a factor is its current value, shared across chains.
    """
    if n < 1 or m < 2:
        raise DomainError("chain needs n >= 1 and m >= 2")
    _check_prob("p", p)
    sizes = (m,) * n
    S = m**n
    states = np.stack(np.unravel_index(np.arange(S), sizes), axis=-1)
    table = states.reshape(S, 1, n).astype(np.int64)
    rows = {}
    for v in range(m):
        row = np.zeros(m)
        if v == m - 1:
            row[v] = 1.0
        elif v == m - 2:
            row[m - 1] = p
            earlier = max(m - 2, 1)
            row[:earlier] += (1 - p) / earlier
        else:
            row[v + 1] = p
            row[0] += 1 - p
        rows[v] = row
    marginals = {(i, v): rows[v] for i in range(n) for v in range(m)}
    target = (S - 1,)
    params = dict(n=n, m=m, p=p)
    return FactoredMdp(
        tuple(Factor(f"chain{i}", m) for i in range(n)),
        ("step",),
        DependencyFunction(table, m),
        marginals,
        np.ones((S, 1)),
        0,
        Objective("expected-steps", "minimize", target_states=target),
        metadata=_metadata(chain, params, ("p",)),
    )


def stock(n: int = 2, m: int = 2, horizon: int = 5, p_rise_base: float = 0.25, p_rise_per_rising: float = 0.5) -> FactoredMdp:
    """``n`` sectors of ``m`` stocks each, with a buy and a sell action per sector.

    A sector factor has value ``owned * 2**m + rising_bits`` where bit ``b``
    (most significant first) says whether stock ``b`` is rising. Each stock
    rises next step with probability ``p_rise_base + p_rise_per_rising *
    (# other rising stocks in the sector)``, clipped. Buying or selling a
    sector sets its ownership for the next step; other sectors keep theirs.
    Each owned sector pays ``(# rising) - (# falling)`` in the current state.

    The identifier of a sector is ``next_owned * 2**m + current_bits``,
    shared across sectors.
    """
    if n < 1 or m < 1 or horizon < 1:
        raise DomainError("stock needs n, m, horizon >= 1")
    _check_prob("p_rise_base", p_rise_base)
    _check_prob("p_rise_per_rising", p_rise_per_rising)
    width = 2**m
    dom = 2 * width
    sizes = (dom,) * n
    S = dom**n
    states = np.stack(np.unravel_index(np.arange(S), sizes), axis=-1)
    owned = states // width
    bits = states % width
    actions = tuple(itertools.chain.from_iterable((f"buy{k}", f"sell{k}") for k in range(n)))
    table = np.zeros((S, 2 * n, n), dtype=np.int64)
    for a in range(2 * n):
        sector, sell = divmod(a, 2)
        nxt = owned.copy()
        nxt[:, sector] = 0 if sell else 1
        table[:, a, :] = nxt * width + bits
    bit_values = (np.arange(width)[:, None] >> np.arange(m - 1, -1, -1)[None, :]) & 1  # (width, m)
    marginals = {}
    for cur in range(width):
        rising = bit_values[cur]
        others = rising.sum() - rising
        p_up = np.clip(p_rise_base + p_rise_per_rising * others, 0.0, 1.0)
        probs = np.prod(np.where(bit_values == 1, p_up, 1 - p_up), axis=1)
        for own in (0, 1):
            row = np.zeros(dom)
            row[own * width: (own + 1) * width] = probs
            for k in range(n):
                marginals[(k, own * width + cur)] = row
    up = bit_values.sum(axis=1)[bits]
    per_sector = owned * (2 * up - m)
    rewards = np.repeat(per_sector.sum(axis=1, keepdims=True).astype(float), 2 * n, axis=1)
    params = dict(n=n, m=m, horizon=horizon, p_rise_base=p_rise_base, p_rise_per_rising=p_rise_per_rising)
    return FactoredMdp(
        tuple(Factor(f"sector{k}", dom) for k in range(n)),
        actions,
        DependencyFunction(table, dom),
        marginals,
        rewards,
        0,
        Objective("finite-horizon-reward", "maximize", horizon=horizon),
        metadata=_metadata(stock, params, ("p_rise_base", "p_rise_per_rising")),
    )


MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))  # up, right, down, left
MOVE_NAMES = ("up", "right", "down", "left")


def frozenlake(size: int = 3, p_slip: float = 0.2, holes=((1, 1),), starts=((0, 0), (0, 2)),
               goals=((2, 2), (2, 0))) -> FactoredMdp:
    """Two agents on a ``size x size`` slippery grid; factor ``k`` is agent ``k``'s cell.

    Both agents move at once (16 joint actions). A move goes in the intended
    direction with probability ``1 - p_slip`` and to each perpendicular
    direction with probability ``p_slip / 2``; moving off the grid stays put.
    An agent at its goal stays there. Landing in a hole sends the agent back
    to its start, and two agents found on the same cell (away from their
    goals) are both sent back to their starts on the next step. The objective
    is the expected number of steps until both agents are at their goals.
    """
    if size < 2:
        raise DomainError("frozenlake needs size >= 2")
    _check_prob("p_slip", p_slip)
    cells = size * size
    holes = {tuple(h) for h in holes}
    starts = [tuple(s) for s in starts]
    goals = [tuple(g) for g in goals]
    for c in list(holes) + starts + goals:
        if not (0 <= c[0] < size and 0 <= c[1] < size):
            raise DomainError(f"cell {c} outside the grid")
    if len(starts) != 2 or len(goals) != 2 or holes & (set(starts) | set(goals)):
        raise DomainError("need two starts and two goals, none of them holes")

    def idx(rc):
        return rc[0] * size + rc[1]

    def move(rc, d):
        r, c = rc[0] + MOVES[d][0], rc[1] + MOVES[d][1]
        return (r, c) if 0 <= r < size and 0 <= c < size else rc

    # per agent: identifiers 0..cells*4-1 = (cell, move), then "reset", then "at goal"
    per_agent = cells * 4 + 2
    marginals = {}
    for k in range(2):
        off = k * per_agent
        for cell in range(cells):
            rc = divmod(cell, size)
            for d in range(4):
                row = np.zeros(cells)
                for dd, w in ((d, 1 - p_slip), ((d + 1) % 4, p_slip / 2), ((d + 3) % 4, p_slip / 2)):
                    dest = move(rc, dd)
                    row[idx(starts[k]) if dest in holes else idx(dest)] += w
                marginals[(k, off + cell * 4 + d)] = row
        reset = np.zeros(cells)
        reset[idx(starts[k])] = 1.0
        marginals[(k, off + cells * 4)] = reset
        stay = np.zeros(cells)
        stay[idx(goals[k])] = 1.0
        marginals[(k, off + cells * 4 + 1)] = stay
    S = cells * cells
    states = np.stack(np.unravel_index(np.arange(S), (cells, cells)), axis=-1)
    joint = list(itertools.product(range(4), repeat=2))
    table = np.zeros((S, 16, 2), dtype=np.int64)
    at_goal = np.stack([states[:, k] == idx(goals[k]) for k in range(2)], axis=1)
    clash = (states[:, 0] == states[:, 1]) & ~at_goal.any(axis=1)
    for a, moves in enumerate(joint):
        for k in range(2):
            off = k * per_agent
            ids = off + states[:, k] * 4 + moves[k]
            ids = np.where(clash, off + cells * 4, ids)
            ids = np.where(at_goal[:, k], off + cells * 4 + 1, ids)
            table[:, a, k] = ids
    used = {(k, int(j)) for k in range(2) for j in np.unique(table[:, :, k])}
    marginals = {key: row for key, row in marginals.items() if key in used}
    target = (idx(goals[0]) * cells + idx(goals[1]),)
    params = dict(size=size, p_slip=p_slip, holes=sorted(holes), starts=starts, goals=goals)
    return FactoredMdp(
        (Factor("agent0", cells), Factor("agent1", cells)),
        tuple(f"{MOVE_NAMES[x]}-{MOVE_NAMES[y]}" for x, y in joint),
        DependencyFunction(table, 2 * per_agent),
        marginals,
        np.ones((S, 16)),
        idx(starts[0]) * cells + idx(starts[1]),
        Objective("expected-steps", "minimize", target_states=target),
        metadata=_metadata(frozenlake, params, ("p_slip",)),
    )


_GENERATORS = {"sysadmin": sysadmin, "chain": chain, "stock": stock, "frozenlake": frozenlake}


def generate_benchmark(spec: BenchmarkSpec | str, **params) -> FactoredMdp:
    """Build a benchmark model from a spec or a domain name plus parameters."""
    if isinstance(spec, str):
        spec = BenchmarkSpec(spec, params)
    gen = _GENERATORS.get(spec.domain)
    if gen is None:
        raise DomainError(f"unknown domain {spec.domain!r}; choose from {', '.join(DOMAINS)}")
    try:
        return gen(**spec.params)
    except TypeError as exc:
        raise DomainError(f"bad parameters for {spec.domain}: {exc}") from exc


def perturb_to_rfmdp(model: FactoredMdp, epsilon: float) -> RfMdp:
    """Boxes of L-infinity radius ``epsilon`` around every marginal row."""
    if not 0 <= epsilon < 1:
        raise DomainError(f"epsilon {epsilon} outside [0, 1)")
    model.check()
    sets = {key: perturb_row(model.marginals[key], epsilon) for key in model.relevant_components}
    base = model.structure()
    return RfMdp(base, sets)


def mini_sysadmin(**overrides) -> FactoredMdp:
    return sysadmin(**{"n": 3, "horizon": 5, **overrides})


def mini_chain(**overrides) -> FactoredMdp:
    return chain(**{"n": 2, "m": 3, "p": 0.9, **overrides})


def mini_stock(**overrides) -> FactoredMdp:
    return stock(**{"n": 2, "m": 2, "horizon": 5, **overrides})


def mini_frozenlake(**overrides) -> FactoredMdp:
    return frozenlake(**overrides)


def bundled_environments() -> dict[str, FactoredMdp]:
    """The desk-scale instances used throughout the tests."""
    return {
        "sysadmin": mini_sysadmin(),
        "chain": mini_chain(),
        "stock": mini_stock(),
        "frozenlake": mini_frozenlake(),
    }
