"""Command-line entry point: ``mfhpo {gen-bench,run,analyze,compare}``.

Run settings resolve as flag > ``--config`` file > built-in default. All
randomness derives from ``--seed``, falling back to ``$MFHPO_SEED``.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from mfhpo import analysis
from mfhpo.benchmark import (
    BenchSpec,
    CurveTableError,
    SyntheticBenchmark,
    default_space,
    export_curve_table,
    load_curve_table,
    sample_config,
)
from mfhpo.engine import ExperimentError, RunConfig, read_events, read_run_config, run_experiment
from mfhpo.policies import POLICIES

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_RUNTIME = 5

# flag name -> RunConfig key, where they differ
FLAG_ALIASES = {
    "topk": "top_k",
    "zmax": "z_max",
    "noise": "noise_sigma",
    "bench": "bench_path",
}


class CliError(Exception):
    def __init__(self, category: str, message: str, code: int):
        super().__init__(message)
        self.category = category
        self.code = code


def _env_seed() -> int | None:
    value = os.environ.get("MFHPO_SEED")
    if value is None:
        return None
    try:
        return int(value)
    except ValueError:
        raise CliError("config", f"MFHPO_SEED is not an integer: {value!r}", EXIT_CONFIG) from None


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    defaults = RunConfig()
    help_text = RunConfig.help()
    reverse = {v: k for k, v in FLAG_ALIASES.items()}
    p.add_argument("--config", metavar="FILE", help="run-config file of 'key = value' lines")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + reverse.get(f.name, f.name).replace("_", "-")
        default = getattr(defaults, f.name)
        text = f"{help_text[f.name]} (key {f.name}, default: {default})"
        kwargs = dict(dest=f.name, default=None, help=text)
        if f.type.startswith("bool"):
            kwargs["action"] = argparse.BooleanOptionalAction
        elif f.type.startswith("int"):
            kwargs["type"] = int
        elif f.type.startswith("float"):
            kwargs["type"] = float
        if f.name == "policy":
            kwargs["choices"] = POLICIES
        p.add_argument(flag, **kwargs)


def _run_config(args) -> RunConfig:
    try:
        cfg = read_run_config(args.config) if args.config else RunConfig()
    except OSError as exc:
        raise CliError("io", f"cannot read run config: {exc}", EXIT_IO) from None
    except ValueError as exc:
        raise CliError("config", str(exc), EXIT_CONFIG) from None
    overrides = {
        f.name: getattr(args, f.name)
        for f in dataclasses.fields(RunConfig)
        if getattr(args, f.name, None) is not None
    }
    if "seed" not in overrides and not (args.config and "seed" in _file_keys(args.config)):
        env = _env_seed()
        if env is not None:
            overrides["seed"] = env
    if overrides.get("bench_path") and overrides.get("regime", "file") != "file":
        raise CliError("config", "--bench conflicts with a synthetic --regime", EXIT_CONFIG)
    if overrides.get("bench_path"):
        overrides["regime"] = "file"
    try:
        cfg = cfg.replace(**overrides)
        if cfg.regime == "file" and not cfg.bench_path:
            raise ValueError("regime 'file' needs --bench")
        return cfg
    except ValueError as exc:
        raise CliError("config", str(exc), EXIT_CONFIG) from None


def _file_keys(path) -> set[str]:
    keys = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0]
        if "=" in line:
            keys.add(line.split("=", 1)[0].strip())
    return keys


def _run(cfg: RunConfig):
    try:
        return run_experiment(cfg)
    except (CurveTableError, FileNotFoundError) as exc:
        raise CliError("benchmark", str(exc), EXIT_IO) from None
    except ExperimentError as exc:
        raise CliError("runtime", str(exc), EXIT_RUNTIME) from None
    except ValueError as exc:
        raise CliError("config", str(exc), EXIT_CONFIG) from None


def cmd_gen_bench(args) -> int:
    seed = args.seed if args.seed is not None else _env_seed()
    seed = 0 if seed is None else seed
    try:
        spec = BenchSpec(args.regime, args.zmax, args.noise, args.n_seeds, seed)
    except ValueError as exc:
        raise CliError("config", str(exc), EXIT_CONFIG) from None
    bench = SyntheticBenchmark(spec, default_space())
    if args.configs > bench.space.size:
        raise CliError("config", f"--configs exceeds the space size {bench.space.size}", EXIT_CONFIG)
    configs = _distinct_configs(bench.space, args.configs, seed)
    try:
        n_rows = export_curve_table(bench, configs, args.out)
    except OSError as exc:
        raise CliError("io", f"cannot write {args.out}: {exc}", EXIT_IO) from None
    print(f"master_seed={seed} rows={n_rows} path={args.out}")
    return EXIT_OK


def _distinct_configs(space, n: int, seed: int):
    rng = np.random.default_rng(seed)
    seen, configs = set(), []
    while len(configs) < n:
        c = sample_config(space, rng)
        if c not in seen:
            seen.add(c)
            configs.append(c)
    return configs


def cmd_run(args) -> int:
    cfg = _run_config(args)
    record = _run(cfg)
    if args.out:
        try:
            record.write_events(args.out)
        except OSError as exc:
            raise CliError("io", f"cannot write {args.out}: {exc}", EXIT_IO) from None
    print(record.summary_line())
    return EXIT_OK


def cmd_analyze(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    did_something = False
    if args.events:
        try:
            events = read_events(args.events)
        except OSError as exc:
            raise CliError("io", f"cannot read {args.events}: {exc}", EXIT_IO) from None
        traj = analysis.trajectory(events, policy=args.label, seed=args.seed or 0)
        analysis.write_trajectory_csv([traj], out_dir / "trajectory.csv")
        print(f"events={len(events)} total_epochs={int(traj.cum_epochs[-1])} final_best_test={traj.final!r}")
        did_something = True
    if args.bench or args.regime:
        if args.bench:
            try:
                bench = load_curve_table(args.bench)
            except (OSError, CurveTableError) as exc:
                raise CliError("benchmark", str(exc), EXIT_IO) from None
            configs = [bench.config_for(cid) for cid in bench.ids]
        else:
            seed = args.seed if args.seed is not None else (_env_seed() or 0)
            bench = SyntheticBenchmark(BenchSpec(args.regime, args.zmax, args.noise, 1, seed))
            configs = _distinct_configs(bench.space, args.configs, seed)
        matrix = analysis.rank_matrix(bench, configs, 0)
        analysis.write_rank_matrix_csv(matrix, out_dir / "rank_matrix.csv")
        zs = sorted({1, min(5, matrix.z_max), matrix.z_max})
        stab = " ".join(f"rank_stability@{z}={analysis.rank_stability(matrix, z):.6f}" for z in zs)
        print(f"configs={matrix.n_configs} {stab}")
        did_something = True
    if not did_something:
        raise CliError("usage", "analyze needs --events, --bench or --regime", EXIT_USAGE)
    return EXIT_OK


def cmd_compare(args) -> int:
    base = _run_config(args)
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    unknown = [p for p in policies if p not in POLICIES]
    if not policies or unknown:
        raise CliError("config", f"bad --policies {args.policies!r}", EXIT_CONFIG)
    if args.seeds < 1:
        raise CliError("config", "--seeds must be >= 1", EXIT_CONFIG)
    records = []
    for policy in policies:
        for k in range(args.seeds):
            records.append(_run(base.replace(policy=policy, seed=base.seed + k)))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = analysis.summarize(records)
    analysis.write_summary_csv(rows, out_dir / "summary.csv")
    analysis.write_trajectory_csv((analysis.trajectory(r) for r in records), out_dir / "trajectory.csv")
    for row in rows:
        sp = "" if row["speedup"] is None else f" speedup={row['speedup']:.4g}"
        print(
            f"policy={row['policy']} final_test={row['final_test_mean']:.6f}"
            f"±{row['final_test_stderr']:.6f} total_epochs={row['total_epochs']:.1f}{sp}"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfhpo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-bench", help="write a synthetic curve table as CSV")
    p.add_argument("--regime", choices=("dominant", "crossing"), default="dominant")
    p.add_argument("--configs", type=int, default=1000, help="distinct configurations (default: 1000)")
    p.add_argument("--zmax", type=int, default=100, help="epochs per curve (default: 100)")
    p.add_argument("--noise", type=float, default=0.0, help="noise std (default: 0.0)")
    p.add_argument("--n-seeds", type=int, default=1, help="noise streams (default: 1)")
    p.add_argument("--seed", type=int, default=None, help="master seed (default: $MFHPO_SEED or 0)")
    p.add_argument("--out", default="bench.csv", help="output path (default: bench.csv)")
    p.set_defaults(func=cmd_gen_bench)

    p = sub.add_parser("run", help="run one experiment and write its event log")
    _add_run_flags(p)
    p.add_argument("--out", default="events.jsonl", help="event log path (default: events.jsonl)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="trajectory and rank-matrix CSVs")
    p.add_argument("--events", help="event log written by 'run'")
    p.add_argument("--label", default="", help="policy label for trajectory.csv")
    p.add_argument("--bench", help="curve table for the rank matrix")
    p.add_argument("--regime", choices=("dominant", "crossing"), help="synthetic benchmark for the rank matrix")
    p.add_argument("--configs", type=int, default=1000, help="configurations ranked (default: 1000)")
    p.add_argument("--zmax", type=int, default=100, help="epochs (default: 100)")
    p.add_argument("--noise", type=float, default=0.0, help="noise std (default: 0.0)")
    p.add_argument("--seed", type=int, default=None, help="benchmark master seed")
    p.add_argument("--out-dir", default=".", help="output directory (default: .)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", help="run policies x seeds and aggregate")
    _add_run_flags(p)
    p.add_argument("--policies", default=",".join(POLICIES), help="comma-separated policies")
    p.add_argument("--seeds", type=int, default=1, help="seeds per policy, starting at --seed (default: 1)")
    p.add_argument("--out-dir", default=".", help="output directory (default: .)")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error category={exc.category}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
