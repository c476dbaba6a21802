"""BO loop, run logs, benchmark matrices and their summaries."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .acquisition import AcquisitionConfig, AcquisitionSpec, maximize_acquisition
from .baselines import METHODS, make_policy
from .benchmarks import TABULAR_CONFIGS, get_task, latin_hypercube
from .gp import NOISE_VAR, KernelSpec, fit_transforms, gp_fit, gp_predict
from .losses import BetaSchedule, beta_value, function_covered, round_feedback
from .optim import Rng

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    task: str = "hartmann3"
    method: str = "oscbo"
    seed: int = 0
    rounds: int = 100
    n_init: int = 10
    p: int = 2
    delta: float = 0.1
    rho_hat: float = 0.5
    beta: float = 2.0
    acq: str = "ucb"
    theta_lo: float = 0.01
    theta_hi: float = 10.0
    ard: bool = False
    nu: float = 2.5
    c_p: float = 1.0
    c_d: float = 1.0
    kappa: float = 1.0
    literal: bool = False
    noise_std: float = 0.0
    standardize: bool = True
    fixed_theta: Optional[float] = None
    task_lengthscale: float = 0.2
    data: Optional[str] = None
    timing: bool = False

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.acq not in ("ucb", "logei"):
            raise ValueError(f"unknown acquisition {self.acq!r}")

    def run_name(self) -> str:
        return f"{self.task}__{self.method}__seed{self.seed}"


@dataclass
class RoundRecord:
    t: int
    x: list
    y: float
    theta: list
    lam: float
    phase: str
    L_s: float
    L_c: float
    V: float
    V_plus: float
    covered: bool
    ci_width: float
    beta: float
    best_y: float
    simple_regret: float
    cum_regret: float
    wall_ms: float
    # in-memory extras, not part of the run CSV
    latent_var: Optional[float] = None
    f_value: Optional[float] = None
    covered_f: Optional[bool] = None


class RunFailed(RuntimeError):
    def __init__(self, records, cause):
        super().__init__(f"run aborted after {len(records)} rounds: {cause!r}")
        self.records = records
        self.cause = cause


def run_single(cfg: RunConfig) -> list[RoundRecord]:
    """Run one seeded BO trajectory and return its per-round records.

    Random streams (children of ``Rng(cfg.seed)``): ``design`` for the Latin
    hypercube, ``policy`` for FTPL perturbations, ``acq`` for raw acquisition
    samples, ``noise`` for observation noise.
    """
    task = get_task(cfg.task, cfg.data, cfg.seed, cfg.task_lengthscale)
    d = task.dim
    root = Rng(cfg.seed)
    design_rng, policy_rng = root.split("design"), root.split("policy")
    acq_rng, noise_rng = root.split("acq"), root.split("noise")
    q = d if cfg.ard else 1
    domain = (cfg.theta_lo, cfg.theta_hi)
    fixed = cfg.fixed_theta if cfg.fixed_theta is not None else cfg.task_lengthscale
    policy = make_policy(cfg.method, q, domain, p=cfg.p, horizon=cfg.rounds, rho_hat=cfg.rho_hat,
                         delta=cfg.delta, c_p=cfg.c_p, c_d=cfg.c_d, kappa=cfg.kappa,
                         literal=cfg.literal, theta=fixed)
    sched = BetaSchedule("fixed", cfg.beta)

    def observe(raw_x):
        f = task.evaluate(raw_x)
        noise = cfg.noise_std * float(noise_rng.gaussian()) if cfg.noise_std > 0 else 0.0
        return f, f + noise

    X0 = task.bounds[:, 0] + latin_hypercube(design_rng, cfg.n_init, d) * np.ptp(task.bounds, axis=1)
    raw_X = [x for x in X0]
    raw_y = [observe(x)[1] for x in X0]

    records: list[RoundRecord] = []
    V = V_plus = cum = 0.0
    best_f = -math.inf
    best_y = -math.inf
    try:
        for t in range(1, cfg.rounds + 1):
            t0 = time.perf_counter()
            data = fit_transforms(np.array(raw_X), np.array(raw_y), task.bounds, cfg.standardize)
            theta = policy.next_theta(data, t, policy_rng)
            lam = policy.lam
            phase = policy.phase
            post = gp_fit(data, KernelSpec(theta, cfg.nu), NOISE_VAR)
            beta = beta_value(sched, t)
            spec = AcquisitionSpec(cfg.acq, policy.ucb_beta(beta),
                                   float(data.y_std.max()) if cfg.acq == "logei" else None)
            x_unit, _ = maximize_acquisition(post, spec, d, acq_rng, AcquisitionConfig())
            x_raw = data.to_raw(x_unit)
            f_val, y = observe(x_raw)
            mean, var = gp_predict(post, x_unit)
            fb = round_feedback(float(data.standardize_y(y)), mean, var, NOISE_VAR, beta, cfg.p)
            policy.observe(fb.sharpness, fb.calibration, beta)
            V += fb.calibration
            V_plus += max(fb.calibration, 0.0)
            raw_X.append(x_raw)
            raw_y.append(y)
            best_y = max(best_y, y)
            best_f = max(best_f, f_val)
            cum += task.optimum - f_val
            wall = (time.perf_counter() - t0) * 1e3 if cfg.timing else 0.0
            records.append(RoundRecord(
                t, [float(v) for v in x_raw], float(y), [float(v) for v in theta], float(lam),
                phase, fb.sharpness, fb.calibration, V, V_plus, fb.covered, fb.ci_width, beta,
                float(best_y), float(task.optimum - best_f), float(cum), float(wall),
                latent_var=var, f_value=float(f_val),
                covered_f=function_covered(float(data.standardize_y(f_val)), mean, var, beta),
            ))
    except Exception as exc:  # flush what we have
        raise RunFailed(records, exc) from exc
    return records


# --- run CSV -----------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v))


def csv_header(d: int, q: int) -> list[str]:
    return (["t"] + [f"x{i + 1}" for i in range(d)] + ["y"] + [f"theta{i + 1}" for i in range(q)]
            + ["lambda", "phase", "L_s", "L_c", "V", "V_plus", "covered", "ci_width", "beta",
               "best_y", "simple_regret", "cum_regret", "wall_ms"])


def records_to_csv(records: list[RoundRecord]) -> str:
    if not records:
        return ""
    d, q = len(records[0].x), len(records[0].theta)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(d, q))
    for r in records:
        w.writerow([str(r.t), *map(_fmt, r.x), _fmt(r.y), *map(_fmt, r.theta), _fmt(r.lam), r.phase,
                    _fmt(r.L_s), _fmt(r.L_c), _fmt(r.V), _fmt(r.V_plus), "1" if r.covered else "0",
                    _fmt(r.ci_width), _fmt(r.beta), _fmt(r.best_y), _fmt(r.simple_regret),
                    _fmt(r.cum_regret), _fmt(r.wall_ms)])
    return buf.getvalue()


def write_run_csv(records, path):
    Path(path).write_text(records_to_csv(records), encoding="utf-8")


def parse_run_csv(text: str) -> list[RoundRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return []
    header = rows[0]
    d = sum(1 for h in header if h.startswith("x"))
    q = sum(1 for h in header if h.startswith("theta"))
    out = []
    for row in rows[1:]:
        it = iter(row)
        t = int(next(it))
        x = [float(next(it)) for _ in range(d)]
        y = float(next(it))
        theta = [float(next(it)) for _ in range(q)]
        lam = float(next(it))
        phase = next(it)
        L_s, L_c, V, V_plus = (float(next(it)) for _ in range(4))
        covered = next(it) == "1"
        rest = [float(v) for v in it]
        out.append(RoundRecord(t, x, y, theta, lam, phase, L_s, L_c, V, V_plus, covered, *rest))
    return out


def read_run_csv(path) -> list[RoundRecord]:
    return parse_run_csv(Path(path).read_text(encoding="utf-8"))


# --- diagnostics ---------------------------------------------------------------

def diagnostics_emit(records: list[RoundRecord]) -> list[dict]:
    """Running coverage, mean interval width, positive violation, and the
    lengthscale / multiplier trajectories."""
    if not records:
        raise ValueError("no records")
    out = []
    covered = width = v_plus = 0.0
    covered_f = 0
    have_f = all(r.covered_f is not None for r in records)
    for i, r in enumerate(records, start=1):
        covered += r.covered
        width += r.ci_width
        v_plus += max(r.L_c, 0.0)
        row = {"t": r.t, "p_hat": covered / i, "mean_ci_width": width / i, "V_plus": v_plus}
        if have_f:
            covered_f += r.covered_f
            row["p_hat_f"] = covered_f / i
        for j, th in enumerate(r.theta):
            row[f"theta{j + 1}"] = th
        row["lambda"] = r.lam
        out.append(row)
    return out


def write_diagnostics(records, path):
    rows = diagnostics_emit(records)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(rows[0].keys())
    for row in rows:
        w.writerow([str(v) if isinstance(v, int) else _fmt(v) for v in row.values()])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def run_to_dir(cfg: RunConfig, out_dir) -> Path:
    """Run ``cfg`` and write ``<name>.csv`` and ``<name>.diag.csv``.

    On failure the partial log is still written, plus ``<name>.error.json``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{cfg.run_name()}.csv"
    try:
        records = run_single(cfg)
    except RunFailed as exc:
        write_run_csv(exc.records, path)
        (out_dir / f"{cfg.run_name()}.error.json").write_text(
            json.dumps({"rounds_completed": len(exc.records), "error": repr(exc.cause)}),
            encoding="utf-8")
        raise
    write_run_csv(records, path)
    write_diagnostics(records, out_dir / f"{cfg.run_name()}.diag.csv")
    return path


# --- benchmark matrix ------------------------------------------------------------

@dataclass
class BenchConfig:
    tasks: list = field(default_factory=lambda: ["hartmann3"])
    methods: list = field(default_factory=lambda: ["oscbo", "gp-ucb-mll"])
    seeds: list = field(default_factory=lambda: list(range(10)))
    workers: int = 1
    base: RunConfig = field(default_factory=RunConfig)
    # tabular task -> CSV path; tabular tasks without a file are skipped
    data: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "BenchConfig":
        raw = dict(raw)
        data = raw.pop("data", None) or {}
        if isinstance(data, str):
            data = {t: data for t in raw.get("tasks", [])}
        run_keys = {f.name for f in fields(RunConfig)}
        base = RunConfig(**{k.replace("-", "_"): v for k, v in raw.items()
                            if k.replace("-", "_") in run_keys})
        seeds = raw.get("seeds")
        if seeds is None:
            seeds = list(range(int(raw.get("n_seeds", 10))))
        return cls(list(raw.get("tasks", ["hartmann3"])), list(raw.get("methods", METHODS[:5])),
                   [int(s) for s in seeds], int(raw.get("workers", 1)), base, dict(data))


def _run_cell(args):
    cfg, run_dir = args
    try:
        run_to_dir(cfg, run_dir)
        return cfg.run_name(), None
    except Exception as exc:
        return cfg.run_name(), repr(exc)


def run_bench(bench: BenchConfig, out_dir):
    """Run every (task, method, seed) cell, then write ``summary.csv`` and
    ``ranks.csv``.  Failed cells are listed in ``failures.json``."""
    out_dir = Path(out_dir)
    run_dir = out_dir / "runs"
    run_dir.mkdir(parents=True, exist_ok=True)
    tasks = []
    for t in bench.tasks:
        if t in TABULAR_CONFIGS and not (bench.data.get(t) and Path(bench.data[t]).exists()):
            log.warning("skipping %s: no data file", t)
            continue
        tasks.append(t)
    cells = [(replace(bench.base, task=t, method=m, seed=s, data=bench.data.get(t)), run_dir)
             for t in tasks for m in bench.methods for s in bench.seeds]
    if not cells:
        raise ValueError("empty benchmark matrix")
    if bench.workers > 1:
        with ProcessPoolExecutor(bench.workers) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    failures = {name: err for name, err in results if err}
    for name, err in failures.items():
        log.error("cell %s failed: %s", name, err)
    (out_dir / "failures.json").write_text(json.dumps(failures, indent=1, sort_keys=True),
                                           encoding="utf-8")
    summary = summarize_runs(run_dir)
    write_summary(summary, out_dir / "summary.csv")
    write_ranks(method_ranks(summary), out_dir / "ranks.csv")
    return summary


def _split_name(stem: str):
    task, method, seed = stem.split("__")
    return task, method, int(seed[len("seed"):])


def summarize_runs(run_dir) -> list[dict]:
    finals: dict = {}
    for path in sorted(Path(run_dir).glob("*__*__seed*.csv")):
        if path.name.endswith(".diag.csv"):
            continue
        task, method, _ = _split_name(path.stem)
        recs = read_run_csv(path)
        if not recs:
            continue
        finals.setdefault((task, method), []).append((recs[-1].simple_regret, recs[-1].cum_regret))
    rows = []
    for (task, method), vals in sorted(finals.items()):
        a = np.array(vals)
        n = len(a)
        se = (lambda c: float(np.std(c, ddof=1) / math.sqrt(n)) if n > 1 else math.nan)
        rows.append({"task": task, "method": method, "n": n,
                     "final_simple_mean": float(a[:, 0].mean()), "final_simple_se": se(a[:, 0]),
                     "final_cum_mean": float(a[:, 1].mean()), "final_cum_se": se(a[:, 1])})
    return rows


def method_ranks(summary: list[dict]) -> list[dict]:
    """Per-task ranks of mean final regret (ties averaged), averaged over tasks."""
    tasks = sorted({r["task"] for r in summary})
    acc: dict = {}
    for task in tasks:
        rows = [r for r in summary if r["task"] == task]
        for key in ("simple", "cum"):
            ranks = rankdata([r[f"final_{key}_mean"] for r in rows], method="average")
            for r, rk in zip(rows, ranks):
                acc.setdefault(r["method"], {"simple": [], "cum": []})[key].append(float(rk))
    return [{"method": m, "tasks": len(v["simple"]), "mean_rank_simple": float(np.mean(v["simple"])),
             "mean_rank_cum": float(np.mean(v["cum"]))} for m, v in sorted(acc.items())]


def _write_rows(rows, path):
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in r.items()})
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_summary(rows, path):
    _write_rows(rows, path)


def write_ranks(rows, path):
    _write_rows(rows, path)


def config_to_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)
