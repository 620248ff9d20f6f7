"""JSON model, uncertainty and solution files.

A model file is one JSON object with the keys ``factors``, ``actions``,
``dependency``, ``marginals``, ``rewards``, ``initial_state`` and
``objective``; an optional ``uncertainty`` list turns it into an rf-MDP and
``metadata`` carries free-form provenance such as generator parameters.

``dependency`` is either an explicit list of ``{state, action, factor, id}``
entries covering every triple, or ``{"generator": name, "params": {...}}``
which rebuilds the table from the named benchmark. States are written as
their integer index (first factor most significant) or as a list of factor
values. Probabilities are plain decimal numbers; floats are written with
``repr`` precision so files round-trip exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, ModelError
from .model import DependencyFunction, Factor, FactoredMdp, Objective, encode_state
from .solver import RfMdp, RobustSolution
from .uncertainty import BoxSet, L1Set, VertexPolytope

DEFAULT_DISCOUNT = 0.95


def _state_index(domains, value) -> int:
    if isinstance(value, (list, tuple)):
        return encode_state(domains, value)
    return int(value)


def _plain(x):
    """JSON-safe copy of nested metadata (numpy scalars and tuples included)."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    return x


# --- model ----------------------------------------------------------------------


def model_to_dict(model: FactoredMdp, explicit_dependency: bool = False) -> dict:
    """Serialisable form; generated models keep their compact dependency."""
    gen = model.metadata.get("generator") if model.metadata else None
    if gen is not None and not explicit_dependency:
        dependency = {"generator": gen["domain"], "params": _plain(gen["params"])}
    else:
        table = model.dependency.table
        dependency = [
            {"state": s, "action": a, "factor": i, "id": int(table[s, a, i])}
            for s in range(model.n_states)
            for a in range(model.n_actions)
            for i in range(model.n_factors)
        ]
    obj = model.objective
    objective = {"kind": obj.kind, "direction": obj.direction}
    if obj.discount is not None:
        objective["discount"] = obj.discount
    if obj.horizon is not None:
        objective["horizon"] = obj.horizon
    if obj.target_states:
        objective["target_states"] = [int(t) for t in obj.target_states]
    out = {
        "factors": [{"name": f.name, "domain_size": f.domain_size} for f in model.factors],
        "actions": list(model.actions),
        "dependency": dependency,
        "marginals": [
            {"factor": i, "id": j, "probs": [float(p) for p in row]} for (i, j), row in sorted(model.marginals.items())
        ],
        "rewards": model.rewards.tolist(),
        "initial_state": int(model.initial_state),
        "objective": objective,
    }
    if not model.marginals and model.supports:
        out["supports"] = [
            {"factor": i, "id": j, "outcomes": np.flatnonzero(mask).tolist()}
            for (i, j), mask in sorted(model.supports.items())
        ]
    if model.metadata:
        out["metadata"] = _plain(model.metadata)
    return out


def _require(doc, key):
    if key not in doc:
        raise ModelError(f"model file lacks the {key!r} key")
    return doc[key]


def _dependency(doc, domains, n_actions, marginals) -> tuple[DependencyFunction, dict]:
    dep = _require(doc, "dependency")
    metadata = {}
    if isinstance(dep, dict):
        from .environments import generate_benchmark

        if "generator" not in dep:
            raise ModelError("dependency object needs a 'generator' name")
        gen = generate_benchmark(dep["generator"], **dep.get("params", {}))
        if gen.domain_sizes != tuple(domains) or gen.n_actions != n_actions:
            raise ModelError("generated dependency does not match the declared factors and actions")
        return gen.dependency, gen.metadata
    n_states = int(np.prod(domains, dtype=np.int64))
    table = np.full((n_states, n_actions, len(domains)), -1, dtype=np.int64)
    for k, e in enumerate(dep):
        try:
            s = _state_index(domains, e["state"])
            a, i, j = int(e["action"]), int(e["factor"]), int(e["id"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"dependency entry {k} is malformed: {exc}") from exc
        if not (0 <= s < n_states and 0 <= a < n_actions and 0 <= i < len(domains)):
            raise ModelError(f"dependency entry {k} refers to a missing state, action or factor")
        table[s, a, i] = j
    if (table < 0).any():
        raise ModelError("dependency list does not cover every (state, action, factor)")
    count = max(int(table.max(initial=-1)), max((j for _, j in marginals), default=-1)) + 1
    return DependencyFunction(table, count), metadata


def model_from_dict(doc: dict) -> FactoredMdp:
    try:
        factors = tuple(Factor(str(f["name"]), int(f["domain_size"])) for f in _require(doc, "factors"))
        actions = tuple(str(a) for a in _require(doc, "actions"))
        domains = [f.domain_size for f in factors]
        marginals = {(int(m["factor"]), int(m["id"])): [float(p) for p in m["probs"]] for m in doc.get("marginals", [])}
        obj = dict(_require(doc, "objective"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed model file: {exc}") from exc
    dependency, gen_meta = _dependency(doc, domains, len(actions), marginals)
    kind = obj.get("kind")
    if kind == "discounted-reward" and obj.get("discount") is None:
        obj["discount"] = DEFAULT_DISCOUNT
    objective = Objective(
        kind=kind,
        direction=obj.get("direction", "maximize"),
        discount=obj.get("discount"),
        horizon=obj.get("horizon"),
        target_states=tuple(_state_index(domains, t) for t in obj.get("target_states", ())),
    )
    supports = None
    if "supports" in doc:
        supports = {}
        for e in doc["supports"]:
            mask = np.zeros(domains[int(e["factor"])], dtype=bool)
            mask[list(e["outcomes"])] = True
            supports[(int(e["factor"]), int(e["id"]))] = mask
    metadata = dict(gen_meta)
    metadata.update(doc.get("metadata", {}))
    return FactoredMdp(
        factors=factors,
        actions=actions,
        dependency=dependency,
        marginals=marginals,
        rewards=np.array(_require(doc, "rewards"), dtype=float),
        initial_state=_state_index(domains, _require(doc, "initial_state")),
        objective=objective,
        supports=supports,
        metadata=metadata,
    )


# --- uncertainty ------------------------------------------------------------------------


def set_to_dict(s) -> dict:
    if isinstance(s, BoxSet):
        return {"type": "box", "lower": s.lower.tolist(), "upper": s.upper.tolist()}
    if isinstance(s, L1Set):
        return {"type": "l1", "nominal": s.nominal.tolist(), "radius": float(s.radius), "norm_p": s.norm_p,
                "support": s.support.tolist(), "unseen": bool(s.unseen)}
    if isinstance(s, VertexPolytope):
        return {"type": "vertices", "vertices": s.vertices.tolist()}
    raise ConfigError(f"cannot serialise {type(s).__name__}")


def set_from_dict(d: dict):
    kind = d.get("type")
    if kind == "box":
        return BoxSet(d["lower"], d["upper"])
    if kind == "l1":
        return L1Set(d["nominal"], d["radius"], d.get("norm_p", 1), d.get("support"), d.get("unseen", False))
    if kind == "vertices":
        return VertexPolytope(d["vertices"])
    raise ModelError(f"unknown uncertainty set type {kind!r}")


def rfmdp_to_dict(rf: RfMdp, nominal: FactoredMdp | None = None) -> dict:
    """rf-MDP document; ``nominal`` supplies marginals to keep alongside the sets."""
    doc = model_to_dict(nominal if nominal is not None else rf.base)
    doc["uncertainty"] = [{"factor": i, "id": j, **set_to_dict(s)} for (i, j), s in sorted(rf.sets.items())]
    return doc


def rfmdp_from_dict(doc: dict) -> RfMdp:
    model = model_from_dict(doc)
    if "uncertainty" not in doc:
        raise ModelError("model file has no 'uncertainty' key")
    try:
        sets = {(int(e["factor"]), int(e["id"])): set_from_dict(e) for e in doc["uncertainty"]}
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed uncertainty entry: {exc}") from exc
    base = model.structure() if model.marginals else model
    return RfMdp(base, sets)


# --- solutions --------------------------------------------------------------------------


def solution_to_dict(sol: RobustSolution) -> dict:
    return {
        "values": sol.values.tolist(),
        "policy": sol.policy.tolist(),
        "method": sol.method,
        "iterations": int(sol.iterations),
        "residual": float(sol.residual),
        "initial_state": int(sol.initial_state),
        "env_direction": sol.env_direction,
    }


def solution_from_dict(doc: dict) -> RobustSolution:
    return RobustSolution(
        values=np.array(doc["values"], dtype=float),
        policy=np.array(doc["policy"], dtype=np.int64),
        witnesses={},
        method=doc["method"],
        iterations=int(doc["iterations"]),
        residual=float(doc["residual"]),
        initial_state=int(doc.get("initial_state", 0)),
        env_direction=doc.get("env_direction", "worst"),
    )


# --- files ------------------------------------------------------------------------------


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: not valid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def write_json(path, doc: dict) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=1) + "\n")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc


def load_model(path) -> FactoredMdp:
    return model_from_dict(read_json(path))


def save_model(path, model: FactoredMdp) -> None:
    write_json(path, model_to_dict(model))


def load_rfmdp(path) -> RfMdp:
    return rfmdp_from_dict(read_json(path))
