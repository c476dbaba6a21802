"""Command-line entry point: ``run``, ``bench``, ``plot`` and ``oracle-check``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .baselines import METHODS
from .benchmarks import TABULAR_CONFIGS, build_tabular_oracle, oracle_eval, read_table
from .harness import BenchConfig, RunConfig, RunFailed, run_bench, run_to_dir
from .plotting import METRICS, plot_svg

# CLI flag -> RunConfig field
RUN_FLAGS = {
    "task": str, "method": str, "seed": int, "rounds": int, "init": int, "p": int,
    "delta": float, "rho_hat": float, "beta": float, "acq": str, "kappa": float,
    "c_p": float, "c_d": float, "theta_lo": float, "theta_hi": float, "noise_std": float,
    "fixed_theta": float, "task_lengthscale": float, "data": str,
}
BOOL_FLAGS = ("literal", "timing", "ard", "no_standardize")


def _field(flag: str) -> str:
    return {"init": "n_init"}.get(flag, flag)


def add_run_flags(p: argparse.ArgumentParser, required: bool):
    # defaults are None so that a config file can supply them
    for flag, typ in RUN_FLAGS.items():
        kw = {"type": typ, "default": None}
        if flag == "method":
            kw["choices"] = METHODS
        if flag == "acq":
            kw["choices"] = ("ucb", "logei")
        if required and flag in ("task", "method"):
            kw["required"] = True
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, **kw)
    for flag in BOOL_FLAGS:
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, action="store_true", default=None)


def overrides(ns: argparse.Namespace) -> dict:
    out = {}
    for flag in list(RUN_FLAGS) + list(BOOL_FLAGS):
        val = getattr(ns, flag, None)
        if val is None:
            continue
        if flag == "no_standardize":
            out["standardize"] = False
        else:
            out[_field(flag)] = val
    return out


def normalize_keys(raw: dict) -> dict:
    out = {}
    for k, v in raw.items():
        k = k.replace("-", "_")
        if k == "no_standardize":
            out["standardize"] = not v
        else:
            out[_field(k)] = v
    return out


def cmd_run(ns) -> int:
    cfg = RunConfig(**overrides(ns))
    try:
        path = run_to_dir(cfg, ns.out)
    except RunFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


def cmd_bench(ns) -> int:
    raw = normalize_keys(json.loads(Path(ns.config).read_text(encoding="utf-8")))
    raw.update(overrides(ns))
    if ns.seeds is not None:
        raw["seeds"] = list(range(ns.seeds))
    if ns.workers is not None:
        raw["workers"] = ns.workers
    bench = BenchConfig.from_dict(raw)
    summary = run_bench(bench, ns.out)
    for row in summary:
        print(f"{row['task']:14s} {row['method']:12s} n={row['n']:<3d} "
              f"simple {row['final_simple_mean']:.4g} +- {row['final_simple_se']:.2g}   "
              f"cum {row['final_cum_mean']:.4g} +- {row['final_cum_se']:.2g}")
    return 0


def cmd_plot(ns) -> int:
    print(plot_svg(ns.runs, ns.metric, ns.out))
    return 0


def cmd_oracle_check(ns) -> int:
    """Ingest a table, report the oracle mode, and check stored designs replay."""
    if ns.task not in TABULAR_CONFIGS:
        print(f"error: {ns.task!r} is not a tabular task ({', '.join(TABULAR_CONFIGS)})",
              file=sys.stderr)
        return 2
    tcfg = TABULAR_CONFIGS[ns.task]
    rows = read_table(ns.data, tcfg.inputs, tcfg.objective)
    task, oracle = build_tabular_oracle(rows, name=ns.task)
    replay = np.array([oracle_eval(oracle, x) for x in oracle.points_raw])
    exact = bool(np.array_equal(replay, oracle.values))
    print(f"task={ns.task} rows={len(rows)} unique={len(oracle.values)} dim={task.dim} "
          f"mode={oracle.mode}")
    for j, ((lo, hi), (rlo, rhi)) in enumerate(zip(task.bounds, tcfg.reference_bounds)):
        flag = "" if math.isclose(lo, rlo, rel_tol=1e-3, abs_tol=1e-3) and \
            math.isclose(hi, rhi, rel_tol=1e-3, abs_tol=1e-3) else f"  (reference [{rlo:g}, {rhi:g}])"
        print(f"  x{j + 1}: [{lo:.6g}, {hi:.6g}]{flag}")
    print(f"f* (table max) = {task.optimum!r}")
    print(f"stored-design replay exact: {exact}")
    return 0 if exact else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oscbo")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="one seeded BO run")
    add_run_flags(run, required=True)
    run.add_argument("--out", required=True)
    run.set_defaults(func=cmd_run)

    bench = sub.add_parser("bench", help="tasks x methods x seeds matrix")
    bench.add_argument("--config", required=True, help="JSON file with RunConfig keys plus "
                       "tasks, methods, seeds or n_seeds, workers")
    bench.add_argument("--out", required=True)
    bench.add_argument("--seeds", type=int, default=None, help="override: use seeds 0..N-1")
    bench.add_argument("--workers", type=int, default=None)
    add_run_flags(bench, required=False)
    bench.set_defaults(func=cmd_bench)

    plot = sub.add_parser("plot", help="SVG curves from run CSVs")
    plot.add_argument("--metric", choices=METRICS, default="simple")
    plot.add_argument("--out", required=True)
    plot.add_argument("runs", nargs="+")
    plot.set_defaults(func=cmd_plot)

    oc = sub.add_parser("oracle-check", help="validate a tabular dataset")
    oc.add_argument("--task", required=True)
    oc.add_argument("--data", required=True)
    oc.set_defaults(func=cmd_oracle_check)
    return ap


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING)
    return ns.func(ns)


if __name__ == "__main__":
    sys.exit(main())
