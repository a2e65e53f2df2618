"""Benchmark suites and convergence traces.

A suite is a grid of cells ``(table, column, seed)``. Each cell
generates its own instance, runs a solver on a fresh operator counter
and returns a metric row. Tables aggregate rows into Average and Max
columns in a fixed ``(table, column, seed)`` order, so the output does
not depend on how cells were scheduled across worker threads.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .apg import NumericalError
from .certify import certified_caltech_like
from .denoise import denoise_solve
from .fal import CapExceeded, FalConfig, fal_solve
from .probgen import ProblemInstance, SignalSpec, generate, sparsity_for
from .storage import sci, write_json

logger = logging.getLogger(__name__)

SUITES = ("scaling-sparse", "scaling-dense", "noisy", "hard", "rate-trace")

SCALING_ROWS = ("N_APG", "rel_l1_gap", "inf_err_plus", "inf_err_zero", "residual",
                "x_sol_l1", "x_true_l1", "N_FAL", "nMat")
NOISY_ROWS = ("rel_l2_error", "N_FAL", "N_APG", "nMat", "residual", "slack_norm",
              "x_sol_l1", "x_true_l1")
HARD_ROWS = ("rel_l1_gap", "inf_err_plus", "inf_err_zero", "residual", "N_FAL", "N_APG",
             "nMat", "seed_used")
TRACE_ROWS = ("N_FAL", "N_APG", "nMat", "rel_l2_error", "inf_err_zero", "log_rate", "r_squared")

HARD_NAMES = ("caltech1", "caltech2", "caltech3", "caltech4")
HARD_GAMMA = 1e-9
RATE_GAMMA = 5e-11


@dataclass
class BenchSuiteSpec:
    suite: str
    sizes: list = field(default_factory=list)
    gammas: list = field(default_factory=list)
    seeds: int = 10
    output_dir: str = "bench"
    base_seed: int = 0
    threads: int = 1
    snrs: list = field(default_factory=lambda: [40.0, 30.0, 20.0])

    def __post_init__(self):
        if self.suite not in SUITES:
            raise ValueError(f"unknown suite {self.suite!r}; choose from {SUITES}")
        if self.seeds < 1:
            raise ValueError("need at least one seed")
        if self.threads < 1:
            raise ValueError("need at least one worker thread")
        if not self.sizes:
            self.sizes = {"scaling-sparse": [1024, 4096], "scaling-dense": [1024, 4096],
                          "noisy": [4096], "hard": [], "rate-trace": [4096]}[self.suite]
        if not self.gammas and self.suite.startswith("scaling"):
            self.gammas = [1.0, 0.1, 0.01]
        if any(n < 4 for n in self.sizes):
            raise ValueError("sizes must be at least 4")
        if any(g <= 0 for g in self.gammas):
            raise ValueError("tolerances must be positive")


@dataclass
class Cell:
    table: str
    column: str
    seed: int
    run: Callable[[], dict]


def _row(report, extra: Optional[dict] = None) -> dict:
    row = {"N_FAL": report.n_fal, "N_APG": report.n_apg, "nMat": report.n_mat,
           "stop_reason": report.stop_reason, "cap_exceeded": report.cap_exceeded,
           **report.metrics}
    row.update(extra or {})
    return row


def scaling_cell(n: int, regime: str, gamma: float, seed: int) -> dict:
    m = n // 4
    inst = generate(SignalSpec("dct-100db", n, m, sparsity_for(m, regime), seed))
    _, rep = fal_solve(inst, FalConfig(gamma=gamma, stop_mode="oracle"))
    return _row(rep)


def noisy_cell(n: int, snr: float, seed: int) -> dict:
    m = n // 4
    inst = generate(SignalSpec("gaussian-noisy", n, m, sparsity_for(m, "dense"), seed,
                               snr_db=snr))
    _, _, rep = denoise_solve(inst)
    return _row(rep)


def hard_cell(name: str, seed: int) -> dict:
    inst, used, _ = certified_caltech_like(name, seed)
    _, rep = fal_solve(inst, FalConfig.hard(gamma=HARD_GAMMA, stop_mode="noiseless"))
    return _row(rep, {"seed_used": used})


def rate_trace(instance: ProblemInstance, config: FalConfig):
    """Solve and record one point per APG iteration.

    Returns ``(rows, report)``; each row is (cumulative APG iteration,
    relative l2 error, relative feasibility, relative optimality).
    Metrics use uncounted applications, so nMat is unaffected.
    """
    x_true = instance.x_true
    if x_true is None:
        raise ValueError("a convergence trace needs the true signal")
    nrm_x = float(np.linalg.norm(x_true))
    l1_true = float(np.abs(x_true).sum())
    nrm_b = float(np.linalg.norm(instance.b))
    rows = []

    def record(k, cum, u):
        feas = float(np.linalg.norm(instance.operator._forward(u) - instance.b)) / nrm_b
        rows.append((cum, float(np.linalg.norm(u - x_true)) / nrm_x, feas,
                     abs(float(np.abs(u).sum()) - l1_true) / l1_true))

    _, rep = fal_solve(instance, config, inner_callback=record)
    return rows, rep


def log_linear_fit(rows) -> tuple[float, float]:
    """Slope and R^2 of ``log10(rel error)`` against cumulative APG iterations."""
    pts = np.array([(r[0], r[1]) for r in rows if r[1] > 0], dtype=np.float64)
    if len(pts) < 3:
        return float("nan"), float("nan")
    x, y = pts[:, 0], np.log10(pts[:, 1])
    slope, icept = np.polyfit(x, y, 1)
    resid = y - (slope * x + icept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else float("nan")
    return float(slope), r2


def rate_trace_instance(n: int, seed: int) -> ProblemInstance:
    m = n // 4
    return generate(SignalSpec("dct-100db", n, m, sparsity_for(m, "dense"), seed))


def _cells(spec: BenchSuiteSpec, out: Path) -> list[Cell]:
    seeds = range(spec.base_seed, spec.base_seed + spec.seeds)
    cells = []
    if spec.suite.startswith("scaling"):
        regime = spec.suite.split("-")[1]
        for g in spec.gammas:
            for n in spec.sizes:
                for s in seeds:
                    cells.append(Cell(f"{regime}_gamma{g:g}", f"n={n}", s,
                                      lambda n=n, g=g, s=s: scaling_cell(n, regime, g, s)))
    elif spec.suite == "noisy":
        for snr in spec.snrs:
            for n in spec.sizes:
                for s in seeds:
                    cells.append(Cell(f"noisy_snr{snr:g}", f"n={n}", s,
                                      lambda n=n, snr=snr, s=s: noisy_cell(n, snr, s)))
    elif spec.suite == "hard":
        for name in HARD_NAMES:
            for s in seeds:
                cells.append(Cell("hard", name, s, lambda name=name, s=s: hard_cell(name, s)))
    else:
        for n in spec.sizes:
            for s in seeds:
                def run(n=n, s=s):
                    rows, rep = rate_trace(rate_trace_instance(n, s),
                                           FalConfig(gamma=RATE_GAMMA, stop_mode="noiseless"))
                    _write_trace(out / f"rate_trace_n{n}_seed{s}.csv", rows)
                    slope, r2 = log_linear_fit(rows)
                    return _row(rep, {"log_rate": slope, "r_squared": r2})
                cells.append(Cell("rate_trace", f"n={n}", s, run))
    return cells


def _write_trace(path: Path, rows) -> None:
    lines = ["apg_iteration,rel_error,rel_feasibility,rel_optimality"]
    lines += [f"{r[0]},{sci(r[1])},{sci(r[2])},{sci(r[3])}" for r in rows]
    path.write_text("\n".join(lines) + "\n")


def _run_cell(cell: Cell) -> tuple[dict, float]:
    t0 = time.perf_counter()
    try:
        row = cell.run()
        row["status"] = "cap-exceeded" if row.get("cap_exceeded") else "ok"
    except (NumericalError, CapExceeded, ValueError, RuntimeError) as exc:
        row = {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}
    return row, time.perf_counter() - t0


def run_suite(spec: BenchSuiteSpec) -> dict:
    """Run every cell, write per-run JSON and one CSV per table.

    Wall times go only to ``bench.log`` so the CSV and JSON outputs are
    byte-identical across reruns. Returns ``{table: {column: [rows]}}``.
    """
    out = Path(spec.output_dir)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    cells = _cells(spec, out)
    if spec.threads > 1:
        with ThreadPoolExecutor(spec.threads) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]

    tables: dict = {}
    log_lines = []
    for cell, (row, wall) in zip(cells, results):
        tables.setdefault(cell.table, {}).setdefault(cell.column, []).append(row)
        tag = f"{cell.table}_{cell.column.replace('=', '')}_seed{cell.seed}"
        write_json(out / "runs" / f"{tag}.json",
                   {"table": cell.table, "column": cell.column, "seed": cell.seed, **row})
        log_lines.append(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {tag} status={row['status']} "
                         f"wall_time={wall:.3f}s")
    with open(out / "bench.log", "a") as log:
        log.write("\n".join(log_lines) + "\n")

    metric_rows = {"scaling-sparse": SCALING_ROWS, "scaling-dense": SCALING_ROWS,
                   "noisy": NOISY_ROWS, "hard": HARD_ROWS, "rate-trace": TRACE_ROWS}[spec.suite]
    for table, columns in tables.items():
        (out / f"{table}.csv").write_text(format_table(columns, metric_rows))
    return tables


def format_table(columns: dict, metric_rows) -> str:
    """Rows are metrics; each column label gets an Average and a Max column."""
    header = ["metric"]
    for label in columns:
        header += [f"{label} avg", f"{label} max"]
    lines = [",".join(header)]
    for metric in metric_rows:
        cells = [metric]
        for rows in columns.values():
            vals = [r[metric] for r in rows if r.get("status") != "failed" and metric in r]
            vals = [float(v) for v in vals if v is not None]
            cells += [sci(np.mean(vals)), sci(np.max(vals))] if vals else ["", ""]
        lines.append(",".join(cells))
    fails = ["failures"]
    for rows in columns.values():
        n_fail = sum(r.get("status") == "failed" for r in rows)
        fails += [str(n_fail), str(n_fail)]
    lines.append(",".join(fails))
    return "\n".join(lines) + "\n"
