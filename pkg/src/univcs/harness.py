"""Sweep engine: phase-diagram grids, fixed-rho MSE curves and paired
AMP / VAMP comparisons, with CSV emission.

Every run draws its matrix, signal and solver seeds from
``SeedSequence([base_seed, i, j, run])`` fed to PCG64, so results depend only
on the configuration and are identical whether cells run serially or in a
process pool.
"""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .amp import CONVERGED, AmpConfig, amp_solve, amp_solve_with_trick
from .denoisers import SignalModel, sample_signal
from .ensembles import build_ensemble
from .phase_lines import optimal_kappa
from .vamp import VampConfig, vamp_solve

SOLVERS = ("vamp", "amp", "amp-trick")
MODES = ("l1", "bayes")
ERROR = "Error"
SUCCESS_MSE = 1e-6


def default_grid(points=20) -> np.ndarray:
    """Cell centres of a uniform partition of (0, 1)."""
    return (np.arange(points) + 0.5) / points


def _check_grid(name, grid):
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ValueError(f"{name} must be a non-empty list")
    if np.any(g <= 0) or np.any(g >= 1) or np.any(np.diff(g) <= 0):
        raise ValueError(f"{name} must be strictly increasing inside (0, 1)")
    return tuple(float(v) for v in g)


@dataclass(frozen=True)
class SweepConfig:
    ensemble: str = "gaussian"
    solver: str = "vamp"
    mode: str = "bayes"
    n: int = 500
    alpha_grid: tuple = tuple(default_grid())
    rho_grid: tuple = tuple(default_grid())
    runs: int = 10
    success_mse: float = SUCCESS_MSE
    base_seed: int = 0
    ensemble_options: dict = field(default_factory=dict)
    solver_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError("n must be an integer >= 2")
        if int(self.runs) != self.runs or self.runs < 1:
            raise ValueError("runs must be a positive integer")
        if not self.success_mse > 0:
            raise ValueError("success_mse must be positive")
        object.__setattr__(self, "alpha_grid", _check_grid("alpha_grid", self.alpha_grid))
        object.__setattr__(self, "rho_grid", _check_grid("rho_grid", self.rho_grid))


def run_seeds(base_seed, i, j, run):
    """``(matrix, signal, solver)`` seeds for one run of cell ``(i, j)``."""
    state = np.random.SeedSequence([base_seed, i, j, run]).generate_state(3)
    return tuple(int(s) for s in state)


@dataclass
class RunRecord:
    mse: float
    iters: int
    status: str
    error: str = ""


def _solve(op, y, x, rho, cfg: SweepConfig, solver_seed):
    opts = dict(cfg.solver_options)
    if cfg.solver == "vamp":
        vc = VampConfig(mode=cfg.mode, rho=rho if cfg.mode == "bayes" else None, seed=solver_seed, **opts)
        return vamp_solve(op, y, vc, truth=x)
    opts.setdefault("threshold_kappa", optimal_kappa(rho))
    ac = AmpConfig(mode=cfg.mode, rho=rho if cfg.mode == "bayes" else None, seed=solver_seed, **opts)
    if cfg.solver == "amp":
        return amp_solve(op, y, ac, truth=x)
    return amp_solve_with_trick(op, y, ac, truth=x)


def measurements(alpha, n) -> int:
    return max(1, int(round(alpha * n)))


def solve_instance(op, alpha, rho, cfg: SweepConfig, seeds) -> RunRecord:
    """Draw a signal, observe it through ``op`` and solve; any exception is
    captured in the record."""
    _, signal_seed, solver_seed = seeds
    try:
        x = sample_signal(SignalModel(cfg.n, rho, signal_seed))
        traj = _solve(op, op.apply(x), x, rho, cfg, solver_seed)
        mse = float(np.mean((traj.final_estimate - x) ** 2))
        return RunRecord(mse, traj.n_iter, traj.status)
    except Exception as exc:  # recorded, never fatal
        return RunRecord(float("nan"), 0, ERROR, f"{type(exc).__name__}: {exc}")


def run_once(cfg: SweepConfig, alpha, rho, seeds) -> RunRecord:
    try:
        op = build_ensemble(cfg.ensemble, measurements(alpha, cfg.n), cfg.n, seeds[0], **cfg.ensemble_options)
    except Exception as exc:
        return RunRecord(float("nan"), 0, ERROR, f"{type(exc).__name__}: {exc}")
    return solve_instance(op, alpha, rho, cfg, seeds)


@dataclass
class CellStats:
    alpha: float
    rho: float
    runs: int
    mean_mse: float
    median_mse: float
    success_fraction: float
    failure_fraction: float
    mean_iterations: float
    errors: int = 0

    @classmethod
    def from_records(cls, alpha, rho, records, success_mse):
        mse = np.array([r.mse for r in records])
        ok = np.isfinite(mse)
        with np.errstate(invalid="ignore"):
            mean = float(np.mean(mse[ok])) if ok.any() else float("nan")
            median = float(np.median(mse[ok])) if ok.any() else float("nan")
        return cls(alpha, rho, len(records), mean, median,
                   float(np.mean(ok & (mse < success_mse))),
                   float(np.mean([r.status != CONVERGED for r in records])),
                   float(np.mean([r.iters for r in records])),
                   int(np.sum(~ok)))


@dataclass
class PhaseGrid:
    """Cell statistics indexed ``[i][j]`` with ``i`` over rho and ``j`` over
    alpha."""

    alphas: tuple
    rhos: tuple
    cells: list

    def field(self, name) -> np.ndarray:
        return np.array([[getattr(c, name) for c in row] for row in self.cells])


def _cell_task(args):
    cfg, i, j = args
    alpha, rho = cfg.alpha_grid[j], cfg.rho_grid[i]
    records = [run_once(cfg, alpha, rho, run_seeds(cfg.base_seed, i, j, k)) for k in range(cfg.runs)]
    return i, j, CellStats.from_records(alpha, rho, records, cfg.success_mse)


def _map(fn, tasks, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    return [fn(t) for t in tasks]


def sweep(cfg: SweepConfig, workers=1, progress=None) -> PhaseGrid:
    """Run every (alpha, rho) cell ``cfg.runs`` times."""
    tasks = [(cfg, i, j) for i in range(len(cfg.rho_grid)) for j in range(len(cfg.alpha_grid))]
    cells = [[None] * len(cfg.alpha_grid) for _ in cfg.rho_grid]
    for i, j, stats in _map(_cell_task, tasks, workers):
        cells[i][j] = stats
        if progress is not None:
            progress(stats)
    return PhaseGrid(cfg.alpha_grid, cfg.rho_grid, cells)


def extract_boundary(grid: PhaseGrid, level=0.5) -> list:
    """Per rho row, the alpha where the success fraction first reaches
    ``level``, interpolated linearly from the cell below.  ``nan`` when no
    cell in the row reaches it."""
    frac = grid.field("success_fraction")
    alphas = np.asarray(grid.alphas)
    out = []
    for i, rho in enumerate(grid.rhos):
        hits = np.flatnonzero(frac[i] >= level)
        if hits.size == 0:
            out.append((rho, float("nan")))
            continue
        j = hits[0]
        if j == 0:
            out.append((rho, float(alphas[0])))
            continue
        f0, f1 = frac[i, j - 1], frac[i, j]
        a = alphas[j - 1] + (level - f0) / (f1 - f0) * (alphas[j] - alphas[j - 1])
        out.append((rho, float(a)))
    return out


def _curve_task(args):
    cfg, ens_index, ensemble, j, run = args
    alpha = cfg.alpha_grid[j]
    seeds = run_seeds(cfg.base_seed, ens_index, j, run)
    try:
        op = build_ensemble(ensemble, measurements(alpha, cfg.n), cfg.n, seeds[0], **cfg.ensemble_options)
    except Exception as exc:
        return [dict(ensemble=ensemble, rho=rho, alpha=alpha, run=run, mse=float("nan"), iters=0,
                     status=ERROR) for rho in cfg.rho_grid], [f"{type(exc).__name__}: {exc}"]
    rows = []
    for rho in cfg.rho_grid:
        rec = solve_instance(op, alpha, rho, cfg, seeds)
        rows.append(dict(ensemble=ensemble, rho=rho, alpha=alpha, run=run, mse=rec.mse,
                         iters=rec.iters, status=rec.status))
    return rows, []


def mse_curve(cfg: SweepConfig, ensembles, workers=1) -> list:
    """Per-run records over ``ensembles x alpha_grid x rho_grid``.

    One matrix is drawn per (ensemble, alpha, run) and shared by every rho.
    ``cfg.ensemble`` is ignored; ``cfg.n`` may be overridden per ensemble by
    passing ``(name, n)`` pairs.
    """
    tasks = []
    for e, spec in enumerate(ensembles):
        name, n = (spec, cfg.n) if isinstance(spec, str) else spec
        sub = replace(cfg, ensemble=name, n=n)
        tasks += [(sub, e, name, j, run) for j in range(len(cfg.alpha_grid)) for run in range(cfg.runs)]
    records = []
    for rows, _ in _map(_curve_task, tasks, workers):
        records += rows
    return records


def curve_means(records) -> dict:
    """Mean MSE keyed by ``(ensemble, rho, alpha)``."""
    groups = {}
    for r in records:
        groups.setdefault((r["ensemble"], r["rho"], r["alpha"]), []).append(r["mse"])
    return {k: float(np.mean(v)) for k, v in groups.items()}


@dataclass
class PairRecord:
    alpha: float
    rho: float
    run: int
    amp: RunRecord
    vamp: RunRecord


@dataclass
class ComparisonReport:
    pairs: list
    success_mse: float

    def verdicts(self):
        amp = np.array([p.amp.mse < self.success_mse for p in self.pairs])
        vamp = np.array([p.vamp.mse < self.success_mse for p in self.pairs])
        return amp, vamp

    def agreement(self, keep=None) -> float:
        """Fraction of pairs with equal success verdicts; ``keep`` filters
        pairs by ``keep(alpha, rho)``."""
        amp, vamp = self.verdicts()
        mask = np.ones(len(self.pairs), bool) if keep is None else np.array(
            [bool(keep(p.alpha, p.rho)) for p in self.pairs])
        if not mask.any():
            return float("nan")
        return float(np.mean(amp[mask] == vamp[mask]))

    def mse_correlation(self) -> float:
        a = np.log10(np.maximum([p.amp.mse for p in self.pairs], 1e-300))
        v = np.log10(np.maximum([p.vamp.mse for p in self.pairs], 1e-300))
        ok = np.isfinite(a) & np.isfinite(v)
        if ok.sum() < 2 or np.std(a[ok]) == 0 or np.std(v[ok]) == 0:
            return float("nan")
        return float(np.corrcoef(a[ok], v[ok])[0, 1])


def _pair_task(args):
    cfg, i, j, run = args
    alpha, rho = cfg.alpha_grid[j], cfg.rho_grid[i]
    seeds = run_seeds(cfg.base_seed, i, j, run)
    try:
        op = build_ensemble(cfg.ensemble, measurements(alpha, cfg.n), cfg.n, seeds[0], **cfg.ensemble_options)
    except Exception as exc:
        bad = RunRecord(float("nan"), 0, ERROR, f"{type(exc).__name__}: {exc}")
        return PairRecord(alpha, rho, run, bad, bad)
    amp = solve_instance(op, alpha, rho, replace(cfg, solver="amp-trick", solver_options={}), seeds)
    vamp = solve_instance(op, alpha, rho, replace(cfg, solver="vamp", solver_options={}), seeds)
    return PairRecord(alpha, rho, run, amp, vamp)


def compare_amp_vamp(cfg: SweepConfig, workers=1) -> ComparisonReport:
    """AMP with the whitening trick and VAMP on identical (matrix, signal)
    pairs for every cell and run."""
    tasks = [(cfg, i, j, run) for i in range(len(cfg.rho_grid))
             for j in range(len(cfg.alpha_grid)) for run in range(cfg.runs)]
    return ComparisonReport(_map(_pair_task, tasks, workers), cfg.success_mse)


def fmt(v) -> str:
    return f"{v:.6g}"


SWEEP_COLUMNS = ["alpha", "rho", "runs", "mean_mse", "median_mse", "success_frac", "fail_frac", "mean_iters"]
CURVE_COLUMNS = ["ensemble", "rho", "alpha", "run", "mse", "iters", "status"]


def write_sweep_csv(grid: PhaseGrid, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for row in grid.cells:
            for c in row:
                w.writerow([fmt(c.alpha), fmt(c.rho), c.runs, fmt(c.mean_mse), fmt(c.median_mse),
                            fmt(c.success_fraction), fmt(c.failure_fraction), fmt(c.mean_iterations)])


def read_sweep_csv(path) -> PhaseGrid:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    alphas = sorted({float(r["alpha"]) for r in rows})
    rhos = sorted({float(r["rho"]) for r in rows})
    cells = [[None] * len(alphas) for _ in rhos]
    for r in rows:
        a, p = float(r["alpha"]), float(r["rho"])
        cells[rhos.index(p)][alphas.index(a)] = CellStats(
            a, p, int(r["runs"]), float(r["mean_mse"]), float(r["median_mse"]),
            float(r["success_frac"]), float(r["fail_frac"]), float(r["mean_iters"]))
    return PhaseGrid(tuple(alphas), tuple(rhos), cells)


def write_curve_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for r in records:
            w.writerow([r["ensemble"], fmt(r["rho"]), fmt(r["alpha"]), r["run"], fmt(r["mse"]),
                        r["iters"], r["status"]])
