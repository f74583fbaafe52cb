"""Command-line entry point: ``snas {search,analyze-variation,sweep-threshold,gen-space}``.

Settings resolve as defaults < ``--config`` JSON (a previous manifest works)
< explicit flags. Every command writes a ``manifest.json`` next to its CSVs.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

from . import __version__
from .analysis import (GridCell, cv_accuracy_correlation, cv_mean_correlation, run_experiment,
                       summarize, threshold_sweep, variation_metric)
from .benchgen import (BUILTIN_SPACES, AccuracyModel, generate_benchmark,
                       load_accuracy_model)
from .oracle import (EnsembleOracle, Oracle, ReplayOracle, SyntheticOracle, resolve_profile)
from .search import ALGORITHMS, SearchConfig
from .space import NB201_OPS, SpaceSpec, TabularBenchmark, canonical_string, infer_spec, load_tabular, write_tabular

log = logging.getLogger("snas")

RESULT_FIELDS = ["space", "algorithm", "evaluator", "oracle_profile", "run", "seed",
                 "selected_encoding", "accuracy", "cycles", "fresh_draws"]
SUMMARY_FIELDS = ["space", "algorithm", "oracle_profile", "mean_avg", "std_avg",
                  "mean_stat", "std_stat", "p_value"]
VARIATION_FIELDS = ["encoding", "accuracy", "mean_score", "cv"]

SEARCH_KEYS = [f.name for f in fields(SearchConfig) if f.name not in ("algorithm", "evaluator", "seed")]

DEFAULTS = {
    "space": None,
    "ops": ",".join(NB201_OPS),
    "strict": True,
    "oracle": None,
    "oracle_seed": 0,
    "ensemble_normalization": "running",
    "algorithm": "random",
    "evaluator": "both",
    "repeats": None,
    "jobs": 1,
    **{k: getattr(SearchConfig(), k) for k in SEARCH_KEYS},
}


class UsageError(Exception):
    pass


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Inputs:
    """Tracks every input file read so the manifest can record digests."""

    def __init__(self):
        self.files: dict[str, str] = {}

    def note(self, path) -> Path:
        p = Path(path)
        self.files[str(p)] = _digest(p)
        return p


def load_space(ref: str, ops: str, strict: bool, inputs: Inputs) -> tuple[str, TabularBenchmark]:
    if ref.startswith("builtin:"):
        name = ref.split(":", 1)[1]
        if name not in BUILTIN_SPACES:
            raise UsageError(f"unknown builtin space {name!r}; choose from {sorted(BUILTIN_SPACES)}")
        return name, BUILTIN_SPACES[name]()
    path = inputs.note(ref)
    with path.open(encoding="utf-8") as fh:
        fh.readline()
        first = fh.readline().split(",")[0]
    spec = infer_spec([first], tuple(o.strip() for o in ops.split(",")))
    return path.stem, load_tabular(path, spec, strict=strict)


def build_oracle(ref: str, bench: TabularBenchmark, seed: int, normalization: str,
                 inputs: Inputs, base: Path | None = None) -> tuple[str, Oracle]:
    kind, _, arg = ref.partition(":")
    if not arg:
        raise UsageError(f"oracle {ref!r} must look like kind:argument")
    if base is not None and kind != "synthetic" and not Path(arg).is_absolute():
        arg = str(base / arg)
    if kind == "synthetic":
        cand = Path(arg) if base is None or Path(arg).is_absolute() else base / arg
        if cand.is_file():
            inputs.note(cand)
            profile = resolve_profile(str(cand))
        else:
            try:
                profile = resolve_profile(arg)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
        return profile.name, SyntheticOracle(bench, profile, seed)
    if kind == "replay":
        return Path(arg).stem, ReplayOracle.from_file(inputs.note(arg))
    if kind == "ensemble":
        path = inputs.note(arg)
        members = []
        for i, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
            line = line.split("#", 1)[0].strip()
            if line:
                members.append(build_oracle(line, bench, seed + i, normalization, inputs,
                                            path.parent)[1])
        return path.stem, EnsembleOracle(members, normalization)
    raise UsageError(f"unknown oracle kind {kind!r} (synthetic, replay, ensemble)")


def _add_common(p: argparse.ArgumentParser, search: bool = True) -> None:
    p.add_argument("--config", help="JSON config or a previous manifest.json")
    p.add_argument("--space", help="tabular CSV file, or builtin:nb201-shape / builtin:tiny")
    p.add_argument("--ops", help="comma-separated op vocabulary for CSV spaces")
    p.add_argument("--sparse", dest="strict", action="store_const", const=False,
                   help="accept benchmark files that do not cover the whole space")
    p.add_argument("--oracle", action="append",
                   help="synthetic:<profile file|name>, replay:<jsonl>, ensemble:<file>; repeatable")
    p.add_argument("--oracle-seed", type=int, help="seed of the synthetic per-architecture bias")
    p.add_argument("--ensemble-normalization", choices=["running", "pool"])
    p.add_argument("--seed", type=int, help="base seed (falls back to $SNAS_SEED, then 0)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, help="parallel worker processes")
    if search:
        p.add_argument("--algorithm", help=f"one or more of {','.join(ALGORITHMS)}")
        p.add_argument("--evaluator", choices=["averaging", "statistical", "both"])
        p.add_argument("--cache", choices=["cached", "on_the_fly", "hybrid"])
        p.add_argument("--repeats", type=int, help="runs per cell (default 100 random, 10 evolutionary)")
        p.add_argument("--N", type=int, help="random-search sample count")
        p.add_argument("--P", type=int, help="population size")
        p.add_argument("--S", type=int, help="tournament size")
        p.add_argument("--C", type=int, help="history budget")
        p.add_argument("--V", "--evals", dest="V", type=int, help="draws per architecture")
        p.add_argument("--threshold", type=float, help="significance level")
        p.add_argument("--hybrid-increment", type=int)
        p.add_argument("--crossover", choices=["uniform", "one_point"])
        p.add_argument("--stat-tie-break", choices=["incumbent", "random"])
        p.add_argument("--free-rea-removal", choices=["after", "before"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snas", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"snas {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="repeated seeded searches -> results.csv + summary.csv")
    _add_common(p)

    p = sub.add_parser("analyze-variation", help="per-architecture CV, Var_SS and Kendall-tau")
    _add_common(p, search=False)
    p.add_argument("--evals", dest="evals", help="draws per architecture; comma list allowed")
    p.add_argument("--cv-convention", choices=["paper", "conventional"])

    p = sub.add_parser("sweep-threshold", help="statistical accuracy across significance levels")
    _add_common(p)
    p.add_argument("--thresholds", required=True, help="comma-separated levels in (0, 1)")

    p = sub.add_parser("gen-space", help="write a synthetic tabular benchmark")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--ops", required=True, help="op count, or comma-separated op tags")
    p.add_argument("--accuracy-model", help="key = value file (see AccuracyModel)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output CSV path")
    return parser


def resolve(args: argparse.Namespace, extra: dict) -> dict:
    """defaults < config file < flags; also materializes the base seed."""
    conf = dict(DEFAULTS)
    conf.update(extra)
    if getattr(args, "config", None):
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        data = data.get("config", data)
        unknown = set(data) - set(conf) - {"seed"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        conf.update(data)
    for k, v in vars(args).items():
        if k in ("command", "config", "out", "verbose") or v is None:
            continue
        conf[k] = v
    if conf.get("seed") is None:
        env = os.environ.get("SNAS_SEED")
        conf["seed"] = int(env) if env else 0
    return conf


def _search_config(conf: dict, algorithm: str, evaluator: str) -> SearchConfig:
    kw = {k: conf[k] for k in SEARCH_KEYS}
    return SearchConfig(algorithm=algorithm, evaluator=evaluator, seed=conf["seed"], **kw)


def _grid(conf: dict, inputs: Inputs, evaluators: list[str]) -> list[GridCell]:
    if not conf.get("space"):
        raise UsageError("--space is required")
    if not conf.get("oracle"):
        raise UsageError("--oracle is required")
    space_name, bench = load_space(conf["space"], conf["ops"], conf["strict"], inputs)
    oracles = [build_oracle(ref, bench, conf["oracle_seed"], conf["ensemble_normalization"], inputs)
               for ref in conf["oracle"]]
    algorithms = [a.strip() for a in str(conf["algorithm"]).split(",")]
    grid = []
    for name, oracle in oracles:
        for alg in algorithms:
            for ev in evaluators:
                try:
                    cfg = _search_config(conf, alg, ev)
                except ValueError as exc:
                    raise UsageError(str(exc)) from None
                grid.append(GridCell(space_name, bench, name, oracle, cfg))
    return grid


def _repeats(conf: dict, grid: list[GridCell]) -> list[int]:
    if conf["repeats"] is not None:
        return [conf["repeats"]] * len(grid)
    return [100 if c.config.algorithm in ("random", "cv_ranker") else 10 for c in grid]


def _manifest(out: Path, command: str, conf: dict, inputs: Inputs) -> None:
    data = {"tool": "snas", "version": __version__, "command": command,
            "base_seed": conf["seed"], "config": conf, "inputs": inputs.files}
    (out / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")


def cmd_search(args) -> int:
    inputs = Inputs()
    conf = resolve(args, {})
    evaluators = ["averaging", "statistical"] if conf["evaluator"] == "both" else [conf["evaluator"]]
    grid = _grid(conf, inputs, evaluators)
    reps = _repeats(conf, grid)
    if any(r < 2 for r in reps):
        raise UsageError("--repeats must be >= 2")
    results = run_experiment(grid, reps, conf["seed"], conf["jobs"])
    results.sort(key=lambda res: res.key)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "results.csv", RESULT_FIELDS,
               ([getattr(r, f) for f in RESULT_FIELDS] for res in results for r in res.runs))
    _write_csv(out / "summary.csv", SUMMARY_FIELDS,
               ([getattr(s, f) for f in SUMMARY_FIELDS] for s in summarize(results)))
    _manifest(out, "search", conf, inputs)
    for s in summarize(results):
        log.info("%s %s %s avg=%s stat=%s p=%s", s.space, s.algorithm, s.oracle_profile,
                 _fmt(s.mean_avg), _fmt(s.mean_stat), _fmt(s.p_value))
    return 0


def cmd_analyze_variation(args) -> int:
    inputs = Inputs()
    conf = resolve(args, {"evals": "10", "cv_convention": "paper"})
    if not conf.get("space"):
        raise UsageError("--space is required")
    if not conf.get("oracle"):
        raise UsageError("--oracle is required")
    try:
        evals = [int(v) for v in str(conf["evals"]).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--evals must be integers, got {conf['evals']!r}") from None
    if not evals or any(v < 2 for v in evals):
        raise UsageError("--evals needs values >= 2")
    space_name, bench = load_space(conf["space"], conf["ops"], conf["strict"], inputs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for ref in conf["oracle"]:
        name, oracle = build_oracle(ref, bench, conf["oracle_seed"],
                                    conf["ensemble_normalization"], inputs)
        for V in evals:
            rep = variation_metric(bench, oracle.fork(conf["seed"]), V, conf["cv_convention"])
            _write_csv(out / f"variation_{name}_V{V}.csv", VARIATION_FIELDS,
                       ([canonical_string(a), bench[a], rep.per_arch_mean[a], cv]
                        for a, cv in rep.per_arch_cv.items()))
            tau_acc = tau_mean = None
            if len(rep.per_arch_cv) >= 2:
                try:
                    tau_acc = cv_accuracy_correlation(bench, oracle, bench, V, report=rep)
                    tau_mean = cv_mean_correlation(bench, oracle, V, report=rep)
                except ValueError as exc:
                    log.warning("kendall tau undefined for %s V=%d: %s", name, V, exc)
            summary.append([space_name, name, rep.batch_size, V, rep.n_archs, len(rep.excluded),
                            rep.var_ss, tau_acc, tau_mean])
    _write_csv(out / "variation_summary.csv",
               ["space", "oracle_profile", "batch_size", "evals", "n_archs", "excluded",
                "var_ss", "tau_cv_accuracy", "tau_cv_mean"], summary)
    _manifest(out, "analyze-variation", conf, inputs)
    return 0


def cmd_sweep_threshold(args) -> int:
    inputs = Inputs()
    conf = resolve(args, {"algorithm": "free_rea", "thresholds": None})
    try:
        ts = [float(t) for t in str(conf["thresholds"]).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"bad --thresholds {conf['thresholds']!r}") from None
    if not ts:
        raise UsageError("--thresholds needs at least one value")
    if any(not 0 < t < 1 for t in ts):
        raise UsageError("thresholds must lie in (0, 1)")
    conf["evaluator"] = "statistical"
    grid = _grid(conf, inputs, ["statistical"])
    reps = _repeats(conf, grid)
    rows = []
    for cell, r in zip(grid, reps):
        for row in threshold_sweep(cell, ts, r, conf["seed"], jobs=conf["jobs"]):
            rows.append([cell.space, cell.config.algorithm, cell.oracle_profile, row.threshold,
                         row.mean_accuracy, row.std_accuracy, row.relative_accuracy, row.runs])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "sweep.csv", ["space", "algorithm", "oracle_profile", "threshold",
                                   "mean_accuracy", "std_accuracy", "relative_accuracy", "runs"], rows)
    _manifest(out, "sweep-threshold", conf, inputs)
    return 0


def _op_vocabulary(ops: str) -> tuple[str, ...]:
    if ops.strip().isdigit():
        k = int(ops)
        base = list(NB201_OPS[:k])
        base += [f"op{i}" for i in range(len(base), k)]
        return tuple(base)
    return tuple(o.strip() for o in ops.split(",") if o.strip())


def cmd_gen_space(args) -> int:
    seed = args.seed if args.seed is not None else int(os.environ.get("SNAS_SEED", 0))
    model = load_accuracy_model(args.accuracy_model) if args.accuracy_model else AccuracyModel()
    try:
        spec = SpaceSpec(args.nodes, _op_vocabulary(args.ops))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    bench = generate_benchmark(spec, model, seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_tabular(bench, out)
    conf = {"nodes": args.nodes, "ops": list(spec.ops), "seed": seed, "accuracy_model": asdict(model)}
    inputs = Inputs()
    if args.accuracy_model:
        inputs.note(args.accuracy_model)
    data = {"tool": "snas", "version": __version__, "command": "gen-space",
            "base_seed": seed, "config": conf, "inputs": inputs.files}
    out.with_name(out.stem + ".manifest.json").write_text(
        json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return 0


COMMANDS = {
    "search": cmd_search,
    "analyze-variation": cmd_analyze_variation,
    "sweep-threshold": cmd_sweep_threshold,
    "gen-space": cmd_gen_space,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"snas: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure: diagnostic + exit 1
        print(f"snas: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1


if __name__ == "__main__":
    sys.exit(main())
