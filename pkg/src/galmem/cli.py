"""Command-line front end: every run writes CSV/JSON plus a replayable manifest."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import warnings
from pathlib import Path

from . import __version__
from .counterfactual import Scaffold, ScaffoldRole, run_query
from .dag import (RelationStore, cr2_by_depth, decay_fit, effective_branching, inject_abstentions,
                  load_edges, parse_edges, synthetic_dag, traverse)
from .errors import ConfigInvalid, DegenerateFit, GalmemError, NotFound
from .gf2 import Generator, builtin
from .hdc import Hypervector, bind, sentence_demo, unbind
from .memory import BlockMemory, MemoryConfig, RRMode, Schedule
from .qod import (binomial_conditioned_counts, compare_worst_case, concentration_check,
                  qod_exhaustive, rsp_expected_distance, rsp_monte_carlo_distance,
                  rsp_parity_expected_distance)
from ._rng import make_rng

EXIT_OK, EXIT_INVARIANT, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _json(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2) + "\n").encode()


def _csv(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue().encode()


def _int_range(text: str) -> list[int]:
    """'3', '1..6' or '1,2,5'."""
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer range: {text!r}") from None


def _generator(args) -> Generator:
    if args.G:
        try:
            return Generator.parse(args.G)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if args.m is None:
        raise UsageError("one of --m or --G is required")
    return builtin(args.m)


# -- subcommands -------------------------------------------------------------
# Each returns (files: name -> bytes, summary dict, ok).


def cmd_qod(args, inputs):
    G = _generator(args)
    m = G.degree
    if args.exhaustive or args.L is None:
        report = qod_exhaustive(G, args.epsilon)
        ok = list(report.histogram.counts) == list(binomial_conditioned_counts(m))
    else:
        report = concentration_check(G, args.L, args.epsilon, args.samples, args.seed)
        ok = report.within_bound
    data = report.to_dict()
    data["generator"] = G.serialize()
    data["binomial_law_holds"] = ok if report.exhaustive else None
    hist = _csv(["weight", "count"], enumerate(report.histogram.counts))
    return {"report.json": _json(data), "histogram.csv": hist}, data, ok


def cmd_rsp_compare(args, inputs):
    G = _generator(args)
    m = G.degree
    L = args.L or (1 << m) - 1
    cmp = compare_worst_case(G, args.k, L, args.trials, args.seed)
    summary = cmp.summary()
    summary["rsp_within_k"] = summary["rsp_max"] <= args.k
    grid = []
    for d in sorted({1, L // 5, L}):
        mc, se = rsp_monte_carlo_distance(m, L, args.k, d, args.mc_trials, args.seed)
        grid.append((d, rsp_expected_distance(m, L, args.k, d),
                     rsp_parity_expected_distance(m, L, args.k, d), mc, se))
    summary["grid"] = [dict(zip(("d", "formula", "exact_parity", "monte_carlo", "stderr"), g))
                       for g in grid]
    files = {
        "single_bit.csv": _csv(["j", "psi_weight", "rsp_max_distance"], cmp.rows),
        "grid.csv": _csv(["d", "formula", "exact_parity", "monte_carlo", "stderr"], grid),
        "summary.json": _json(summary),
    }
    return files, summary, summary["psi_min"] >= 1


def _memory_config(args) -> MemoryConfig:
    rr = RRMode.parse(args.rr)
    schedule = Schedule.parse(args.schedule)
    if schedule == Schedule.UNIFIED:
        return MemoryConfig.unified(args.N, args.m, args.q, seed=args.mem_seed, rr_mode=rr)
    return MemoryConfig.gated(args.N, args.m, args.q, rr_mode=rr)


def cmd_bench(args, inputs):
    cfg = _memory_config(args)
    depths = args.depths or [args.depth]
    depth = max(depths)
    store = RelationStore(BlockMemory(cfg))
    roots, edges = synthetic_dag(args.branching, depth, rng_seed=args.seed)
    load = load_edges(store, edges)
    injected = 0
    if args.p is not None:
        if cfg.rr_mode != RRMode.DONT_CARE:
            raise UsageError("--p needs --rr dontcare")
        k = (1 - args.p) * cfg.n_blocks
        if not 0 <= round(k) < cfg.n_blocks or abs(k - round(k)) > 1e-9:
            raise UsageError(f"(1 - p) * N = {k} must be an integer in [0, N)")
        injected += inject_abstentions(store, edges, per_edge=round(k), rng_seed=args.seed)
    if args.inject_rate:
        if cfg.rr_mode != RRMode.DONT_CARE:
            raise UsageError("--inject-rate needs --rr dontcare")
        injected += inject_abstentions(store, edges, rate=args.inject_rate, rng_seed=args.seed + 1)
    labels = list(range(args.branching))
    ranking = traverse(store, roots[0], [labels] * depth, args.fs)
    by_depth = {n: v for n, v in cr2_by_depth(ranking).items() if n in depths}
    fit = None
    try:
        fit = decay_fit(by_depth)
    except DegenerateFit as exc:
        warnings.warn(str(exc))
    rows = [(n, sum(v) / len(v), math.log(sum(v) / len(v)), len(v))
            for n, v in sorted(by_depth.items())]
    result = {
        "config": cfg.to_dict(),
        "load": load.to_dict(),
        "injected": injected,
        "paths": [t.to_dict() for t in ranking],
        "partial": len(ranking.partial),
        "effective_branching": effective_branching(ranking),
        "fit": fit.to_dict() if fit else None,
    }
    ok = True
    if cfg.rr_mode == RRMode.RESCUE:
        ok = all(t.cr2 == 1.0 for t in ranking)
    files = {"decay.csv": _csv(["depth", "mean_cr2", "log_mean_cr2", "n_traces"], rows),
             "ranking.json": _json(result)}
    summary = {"paths": len(ranking), "effective_branching": result["effective_branching"],
               "fit": result["fit"]}
    return files, summary, ok


def cmd_hdc_demo(args, inputs):
    rng = make_rng(args.seed, 0)
    roundtrip = 0
    for _ in range(args.pairs):
        r = Hypervector.random(args.dim, rng)
        f = Hypervector.random(args.dim, rng)
        roundtrip += unbind(bind(r, f), r) == f
    trials = [sentence_demo(args.dim, args.seed + i) for i in range(args.trials)]
    rows = [(t["seed"], t["fractional_hd"], int(t["recovered"])) for t in trials]
    summary = {
        "dim": args.dim,
        "pairs": args.pairs,
        "roundtrip_ok": roundtrip,
        "trials": args.trials,
        "recovered": sum(t["recovered"] for t in trials),
        "min_fractional_hd": min(t["fractional_hd"] for t in trials),
        "mean_fractional_hd": sum(t["fractional_hd"] for t in trials) / len(trials),
    }
    ok = roundtrip == args.pairs and summary["recovered"] == args.trials
    files = {"trials.csv": _csv(["seed", "fractional_hd", "recovered"], rows),
             "summary.json": _json(summary)}
    return files, summary, ok


def _load_query(text: str) -> dict:
    try:
        q = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"query JSON malformed at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(q, dict):
        raise UsageError("query must be a JSON object")
    missing = [k for k in ("worlds", "mechanisms", "evidence", "intervention") if k not in q]
    if missing:
        raise UsageError(f"query lacks {', '.join(missing)}")
    return q


def _mechanism(m):
    if isinstance(m, dict):
        return m["cause"], m["label"], m["effect"]
    cause, label, effect = m
    return cause, label, effect


def cmd_cf(args, inputs):
    q = _load_query(inputs["query"])
    c = q.get("config", {})
    try:
        rr = RRMode.parse(c.get("rr_mode", "rescue"))
        cfg = MemoryConfig.unified(c.get("n_blocks", 10), c.get("m", 10),
                                   c.get("segment_bits", 64), seed=c.get("seed", 0), rr_mode=rr)
        piA = Scaffold(ScaffoldRole.FACTUAL, cfg)
        for w in q["worlds"]:
            piA.add_world(w)
        for m in q["mechanisms"]:
            piA.add_mechanism(*_mechanism(m))
        inject = [(i["cause"], i["label"], i["blocks"]) for i in q.get("inject", [])]
        labels = tuple(q.get("labels", ("f_X", "f_Y")))
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad query: {exc!r}") from None
    before = piA.snapshot()
    res = run_query(piA, q["evidence"], q["intervention"], labels, args.seed, inject)
    out = res.to_dict()
    out["non_interference"] = piA.snapshot() == before
    return {"response.json": _json(out)}, out, out["non_interference"]


def cmd_snapshot(args, inputs):
    cfg = _memory_config(args)
    store = RelationStore(BlockMemory(cfg))
    edges = parse_edges(inputs["edges"].splitlines())
    load = load_edges(store, edges)
    image = store.memory.snapshot()
    ok = BlockMemory.load(image).snapshot() == image
    info = {"config": cfg.to_dict(), "load": load.to_dict(),
            "occupancy": store.memory.occupancy(), "roundtrip": ok,
            "bytes": len(image)}
    return {"memory.gmem": image, "info.json": _json(info)}, info, ok


COMMANDS = {
    "qod": cmd_qod,
    "rsp-compare": cmd_rsp_compare,
    "bench": cmd_bench,
    "hdc-demo": cmd_hdc_demo,
    "cf": cmd_cf,
    "snapshot": cmd_snapshot,
}
# arguments naming input files; their contents go into the manifest
FILE_ARGS = {"cf": ("query",), "snapshot": ("edges",)}


def _memory_flags(p):
    p.add_argument("--N", type=int, default=10, help="number of blocks")
    p.add_argument("--m", type=int, default=16, help="address bits per block")
    p.add_argument("--q", type=int, default=64, help="segment bits per block")
    p.add_argument("--rr", default="rescue", help="rescue or dontcare")
    p.add_argument("--schedule", default="unified", help="unified or gated")
    p.add_argument("--mem-seed", type=int, default=0, help="diffusion seed (unified)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="galmem", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--seed", type=int, default=0, help="64-bit RNG seed")
        return p

    p = add("qod", "weight law and concentration of the diffusion map")
    p.add_argument("--m", type=int)
    p.add_argument("--G", help="generator literal such as g:409")
    p.add_argument("--L", type=int, help="input length for Monte Carlo sampling")
    p.add_argument("--epsilon", type=float, default=0.25)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--exhaustive", action="store_true")

    p = add("rsp-compare", "diffusion against a random sparse projection")
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--G")
    p.add_argument("--L", type=int)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--mc-trials", type=int, default=10_000)

    p = add("bench", "synthetic DAG: load, traverse, fit CR2 decay")
    _memory_flags(p)
    p.add_argument("--branching", type=int, default=2)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--depths", type=_int_range, help="depths to fit, e.g. 1..6")
    p.add_argument("--fs", type=int, default=8)
    p.add_argument("--p", type=float, help="exact per-hop CR1 via injected abstentions")
    p.add_argument("--inject-rate", type=float, default=0.0)

    p = add("hdc-demo", "binding round trip and the sentence swap test")
    p.add_argument("--dim", type=int, default=1024)
    p.add_argument("--pairs", type=int, default=10_000)
    p.add_argument("--trials", type=int, default=100)

    p = add("cf", "counterfactual query from a JSON file")
    p.add_argument("--query", required=True)

    p = add("snapshot", "load an edge file and write a memory image")
    _memory_flags(p)
    p.add_argument("--edges", required=True, help="subject<TAB>relation<TAB>object lines")

    p = sub.add_parser("replay", help="re-run a manifest and compare output digests")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, default=None)
    return parser


def _args_dict(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "command")}


def execute(command: str, params: dict, inputs: dict):
    ns = argparse.Namespace(**params)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        files, summary, ok = COMMANDS[command](ns, inputs)
    notes = sorted({str(w.message) for w in caught})
    if notes:
        summary = dict(summary, warnings=notes)
    return files, summary, ok


def manifest_for(command, params, inputs, files) -> dict:
    return {
        "subcommand": command,
        "config": {k: (str(v) if isinstance(v, Path) else v) for k, v in params.items()},
        "rng_seed": params.get("seed", 0),
        "version": __version__,
        "inputs": inputs,
        "outputs": {name: hashlib.sha256(data).hexdigest() for name, data in sorted(files.items())},
    }


def _write(out: Path | None, files: dict):
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    for name, data in files.items():
        (out / name).write_bytes(data)


def _replay(args) -> int:
    try:
        manifest = json.loads(args.manifest.read_text())
        command, params = manifest["subcommand"], manifest["config"]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read manifest: {exc}") from None
    files, _, ok = execute(command, params, manifest.get("inputs", {}))
    _write(args.out, files)
    now = {n: hashlib.sha256(d).hexdigest() for n, d in sorted(files.items())}
    same = now == manifest["outputs"]
    print(json.dumps({"replayed": command, "identical": same}, sort_keys=True))
    return EXIT_OK if same else EXIT_INVARIANT


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            return _replay(args)
        params = _args_dict(args)
        inputs = {}
        for key in FILE_ARGS.get(args.command, ()):
            try:
                inputs[key] = Path(params[key]).read_text()
            except OSError as exc:
                raise UsageError(f"cannot read --{key}: {exc}") from None
        files, summary, ok = execute(args.command, params, inputs)
    except (UsageError, ConfigInvalid) as exc:
        parser.error(str(exc))
    except (GalmemError, NotFound) as exc:
        print(f"galmem: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    out = args.out or Path(f"galmem-{args.command}")
    files = dict(files)
    manifest = manifest_for(args.command, params, inputs, files)
    files["manifest.json"] = _json(manifest)
    _write(out, files)
    print(json.dumps(summary, sort_keys=True, default=str))
    return EXIT_OK if ok else EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
