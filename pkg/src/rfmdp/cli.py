"""Command-line front end: ``rfmdp generate|solve|learn|compare``.

Result CSVs are deterministic for a fixed configuration and seed; wall
times go to a ``*.meta.json`` file next to them. On failure a JSON error
record is written to stderr and the exit status encodes the error class:
2 configuration, 3 model, 4 solver, 5 cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path

from .environments import DOMAINS, generate_benchmark, perturb_to_rfmdp
from .errors import ConfigError, RfmdpError
from .inner import BACKENDS, interval_arithmetic_product
from .learner import LearningConfig, ModelSampler, fmt, learning_loop, median_trace, pac_report
from .model import flat_structure
from .modelio import (
    load_model,
    model_from_dict,
    model_to_dict,
    read_json,
    rfmdp_from_dict,
    rfmdp_to_dict,
    solution_to_dict,
    write_json,
)
from .solver import DEFAULT_TOL, RfMdp, solve_rfmdp

COMPARE_BACKENDS = ("vertex", "interval-arithmetic", "mccormick")


def thread_limit() -> int:
    raw = os.environ.get("RFMDP_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"RFMDP_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"RFMDP_THREADS must be a positive integer, got {raw!r}")
    return n


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _params(pairs) -> dict:
    out = {}
    for item in pairs or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        out[key] = _parse_value(value)
    return out


def _seeds(text: str) -> list[int]:
    try:
        if "-" in text and "," not in text:
            lo, hi = text.split("-")
            return list(range(int(lo), int(hi) + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--seeds expects e.g. 0,1,2 or 0-9, got {text!r}") from None


def _load_rfmdp(path, epsilon: float | None) -> tuple[RfMdp, object]:
    """rf-MDP from a file's ``uncertainty`` key, or by perturbing its marginals."""
    doc = read_json(path)
    if "uncertainty" in doc and epsilon is None:
        return rfmdp_from_dict(doc), None
    model = model_from_dict(doc)
    return perturb_to_rfmdp(model, 0.0 if epsilon is None else epsilon), model


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create {out}: {exc}") from exc
    return out


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc


# --- commands ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    model = generate_benchmark(args.domain, **_params(args.param))
    out = Path(args.out)
    if out.suffix != ".json":
        out = _out_dir(args) / f"{args.domain}.json"
    if args.epsilon is not None:
        write_json(out, rfmdp_to_dict(perturb_to_rfmdp(model, args.epsilon), model))
    else:
        write_json(out, model_to_dict(model))
    print(out)
    return 0


def cmd_solve(args) -> int:
    rf, _ = _load_rfmdp(args.model, args.epsilon)
    backend = args.backend or "mccormick"
    if backend == "flat" and rf.base.n_factors > 1:
        rf = _flatten_rfmdp(rf)
    start = time.perf_counter()
    sol = solve_rfmdp(rf, backend, tol=args.tolerance)
    wall = time.perf_counter() - start
    out = _out_dir(args)
    write_json(out / "solution.json", solution_to_dict(sol))
    _write(out / "summary.csv", "backend,value,iterations,wall_ms\n" + f"{backend},{fmt(sol.initial_value)},{sol.iterations},\n")
    write_json(out / "summary.meta.json", {"wall_ms": wall * 1000, "backend": backend})
    print(f"{backend}: value {fmt(sol.initial_value)} after {sol.iterations} iterations")
    return 0


def _flatten_rfmdp(rf: RfMdp) -> RfMdp:
    """Box hull of the joint set per state-action pair, on the flattened state."""
    flat = flat_structure(rf.base)
    keys, pair_key = rf._pair_keys
    sets = {}
    for s in range(rf.base.n_states):
        for a in range(rf.base.n_actions):
            sets[(0, s * rf.base.n_actions + a)] = interval_arithmetic_product(rf.sets_for(keys[pair_key[s, a]]))
    return RfMdp(flat, sets)


def _compare_rows(rf: RfMdp, backends, tol):
    values, walls = {}, {}
    for b in backends:
        start = time.perf_counter()
        values[b] = solve_rfmdp(rf, b, tol=tol).initial_value
        walls[b] = (time.perf_counter() - start) * 1000
    return values, walls


def rel_gap(reference: float, value: float) -> float:
    """``|reference - value| / |value|``; zero when both vanish."""
    diff = abs(reference - value)
    if diff == 0:
        return 0.0
    return diff / abs(value) if value != 0 else float("inf")


def cmd_compare(args) -> int:
    rf, _ = _load_rfmdp(args.model, args.epsilon)
    backends = args.backend.split(",") if args.backend else list(COMPARE_BACKENDS)
    for b in backends:
        if b not in BACKENDS:
            raise ConfigError(f"unknown backend {b!r}; choose from {', '.join(BACKENDS)}")
    if "vertex" not in backends:
        backends = ["vertex"] + backends
    values, walls = _compare_rows(rf, backends, args.tolerance)
    ref = values["vertex"]
    lines = ["backend,value,rel_gap_vs_vertex,wall_ms"]
    lines += [f"{b},{fmt(values[b])},{fmt(rel_gap(ref, values[b]))}," for b in backends]
    out = _out_dir(args)
    _write(out / "compare.csv", "\n".join(lines) + "\n")
    write_json(out / "compare.meta.json", {"wall_ms": walls, "epsilon": args.epsilon})
    print("\n".join(lines))
    return 0


def _learn_one(job):
    model, cfg = job
    return learning_loop(ModelSampler(model), cfg)


def _learning_config(args) -> dict:
    cfg = {}
    if args.config:
        cfg = read_json(args.config)
        known = {f.name for f in fields(LearningConfig)} | {"seeds"}
        extra = set(cfg) - known
        if extra:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(extra))}")
    flags = {
        "method": args.backend,
        "beta": args.beta,
        "scheme": args.scheme,
        "trajectory_length": args.trajectory_length,
        "total_trajectories": args.total_trajectories,
        "checkpoint_interval": args.checkpoint_interval,
    }
    cfg.update({k: v for k, v in flags.items() if v is not None})
    return cfg


def cmd_learn(args) -> int:
    model = load_model(args.model).check()
    cfg = _learning_config(args)
    seeds = _seeds(args.seeds) if args.seeds else list(cfg.pop("seeds", [0]))
    cfg.pop("seeds", None)
    cfg.pop("seed", None)
    if "trajectory_length" not in cfg and model.objective.horizon is not None:
        cfg["trajectory_length"] = model.objective.horizon
    configs = [LearningConfig(seed=s, **cfg) for s in seeds]
    for c in configs:
        c.resolved()
    jobs = [(model, c) for c in configs]
    workers = min(thread_limit(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(_learn_one, jobs))
    else:
        traces = [_learn_one(j) for j in jobs]
    out = _out_dir(args)
    write_json(out / "config.json", {**asdict(configs[0]), "seeds": seeds})
    meta = {"statement": pac_report(traces[0])["statement"], "seeds": {}}
    for t in traces:
        _write(out / f"trace_seed{t.seed}.csv", t.to_csv())
        meta["seeds"][str(t.seed)] = {
            "wall_ms": [c.wall_time * 1000 for c in t.checkpoints],
            **{k: v for k, v in t.metadata.items()},
        }
    rows = median_trace(traces)
    lines = ["trajectories,guarantee,nominal,seeds"]
    lines += [f"{r['trajectories']},{fmt(r['guarantee'])},{fmt(r['nominal'])},{len(traces)}" for r in rows]
    _write(out / "trace_median.csv", "\n".join(lines) + "\n")
    write_json(out / "learn.meta.json", meta)
    last = rows[-1]
    print(f"{meta['statement']}; median guarantee {fmt(last['guarantee'])} after {last['trajectories']} trajectories")
    return 0


# --- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rfmdp", description="Robust factored MDP solving and learning.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a benchmark model file")
    g.add_argument("domain", choices=DOMAINS)
    g.add_argument("--param", action="append", metavar="KEY=VALUE", help="generator parameter (JSON value)")
    g.add_argument("--epsilon", type=float, help="also write box uncertainty of this radius")
    g.add_argument("--out", default=".", help="output file (.json) or directory")

    def common(sp, model_help):
        sp.add_argument("--model", required=True, help=model_help)
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--tolerance", type=float, default=DEFAULT_TOL, help="value iteration tolerance")

    s = sub.add_parser("solve", help="robust solve with one backend")
    common(s, "model file (uses its uncertainty key unless --epsilon is given)")
    s.add_argument("--backend", choices=BACKENDS, default="mccormick")
    s.add_argument("--epsilon", type=float, help="box radius around the model's marginals")

    c = sub.add_parser("compare", help="solve with several backends and report gaps to vertex enumeration")
    common(c, "model file (uses its uncertainty key unless --epsilon is given)")
    c.add_argument("--backend", help="comma-separated backends (default: vertex,interval-arithmetic,mccormick)")
    c.add_argument("--epsilon", type=float, help="box radius around the model's marginals")

    le = sub.add_parser("learn", help="PAC learning runs on a hidden model")
    common(le, "hidden model file with marginals")
    le.add_argument("--backend", help="learning method: " + ", ".join(BACKENDS))
    le.add_argument("--beta", type=float)
    le.add_argument("--scheme", choices=("box", "l1"))
    le.add_argument("--seeds", help="e.g. 0,1,2 or 0-9")
    le.add_argument("--trajectory-length", type=int)
    le.add_argument("--total-trajectories", type=int)
    le.add_argument("--checkpoint-interval", type=int)
    le.add_argument("--config", help="JSON file with learning config fields")
    return p


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "compare": cmd_compare, "learn": cmd_learn}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        thread_limit()
        return COMMANDS[args.command](args)
    except RfmdpError as exc:
        record = {"error": exc.code, "type": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        print(json.dumps(record), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
