"""Approximate message passing with Onsager correction, plus the composition
with the whitening / Gaussianizing transforms."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .denoisers import Denoiser
from .ensembles import MeasurementOperator, gaussianize, whiten

CONVERGED = "Converged"
MAX_ITER = "MaxIter"
DIVERGED = "Diverged"
DIVERGENCE_FACTOR = 1e6
DEFAULT_KAPPA = 1.1403


@dataclass(frozen=True)
class AmpConfig:
    """``mode`` is ``"l1"`` or ``"bayes"``; ``rho`` is the prior sparsity used
    in Bayes mode and ``threshold_kappa`` scales the l1 threshold
    ``kappa * tau_t``."""

    mode: str = "bayes"
    rho: float | None = None
    max_iter: int = 1000
    tol: float = 1e-10
    threshold_kappa: float = DEFAULT_KAPPA
    onsager: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("l1", "bayes"):
            raise ValueError(f"mode must be 'l1' or 'bayes', got {self.mode!r}")
        if self.mode == "bayes" and self.rho is None:
            raise ValueError("bayes mode needs the prior sparsity rho")
        if self.tol <= 0 or self.threshold_kappa <= 0 or self.max_iter < 1:
            raise ValueError("tol, threshold_kappa and max_iter must be positive")

    def denoiser(self) -> Denoiser:
        if self.mode == "bayes":
            return Denoiser.bayes(self.rho)
        return Denoiser.soft_scaled(self.threshold_kappa)


@dataclass
class Trajectory:
    """Per-iteration record of a solve.  Iteration 0 is the initialization."""

    iters: list = field(default_factory=list)
    mse: list = field(default_factory=list)
    residual_norm: list = field(default_factory=list)
    tau2: list = field(default_factory=list)
    status: str = MAX_ITER
    final_estimate: np.ndarray | None = None

    def record(self, t, mse, residual, tau2):
        self.iters.append(t)
        self.mse.append(mse)
        self.residual_norm.append(residual)
        self.tau2.append(tau2)

    @property
    def n_iter(self) -> int:
        return self.iters[-1] if self.iters else 0

    @property
    def final_mse(self) -> float:
        return self.mse[-1] if self.mse else float("nan")

    def diverging(self) -> bool:
        """Non-finite, or grown 1e6-fold over the initial value."""
        for series in (self.mse, self.residual_norm):
            last = series[-1]
            if last is None:
                continue
            if not np.isfinite(last) or (series[0] > 0 and last > DIVERGENCE_FACTOR * series[0]):
                return True
        return False


def _check_problem(op, y, truth):
    y = np.asarray(y, dtype=float)
    if y.shape != (op.m,):
        raise ValueError(f"y has shape {y.shape}, operator expects ({op.m},)")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite values")
    if truth is not None:
        truth = np.asarray(truth, dtype=float)
        if truth.shape != (op.n,):
            raise ValueError(f"truth has shape {truth.shape}, operator expects ({op.n},)")
    return y, truth


def _mse(x, truth):
    return None if truth is None else float(np.mean((x - truth) ** 2))


def amp_solve(op: MeasurementOperator, y, cfg: AmpConfig, truth=None) -> Trajectory:
    """Run AMP on ``y = Phi x``.

    The operator is rescaled internally to unit average column norm, which
    is the normalization the Onsager term and the ``sigma / sqrt(alpha)``
    effective noise presuppose.
    """
    y, truth = _check_problem(op, y, truth)
    m, n = op.m, op.n
    alpha = m / n
    if not 0 < alpha <= 1:
        raise ValueError(f"AMP needs m <= n, got {m}x{n}")
    fro = op.frobenius_sq()
    if fro <= 0:
        raise ValueError("operator is identically zero")
    c = np.sqrt(n / fro)
    yc = c * y
    eta = cfg.denoiser()

    x = np.zeros(n)
    z = yc.copy()
    traj = Trajectory()
    traj.record(0, _mse(x, truth), float(np.linalg.norm(y)), float(z @ z / m))
    for t in range(1, cfg.max_iter + 1):
        tau2 = float(z @ z) / m
        if tau2 == 0.0:
            traj.status = CONVERGED
            break
        r = x + c * op.apply_adjoint(z)
        x_new, deriv = eta(r, tau2)
        residual = y - op.apply(x_new)
        memory = np.mean(deriv) / alpha if cfg.onsager else 0.0
        z = c * residual + memory * z
        traj.record(t, _mse(x_new, truth), float(np.linalg.norm(residual)), tau2)
        change = np.linalg.norm(x_new - x)
        x = x_new
        if traj.diverging():
            traj.status = DIVERGED
            break
        if change <= cfg.tol * np.linalg.norm(x):
            traj.status = CONVERGED
            break
    traj.final_estimate = x
    return traj


def amp_solve_with_trick(op: MeasurementOperator, y, cfg: AmpConfig, truth=None, seed=None) -> Trajectory:
    """Whiten, Gaussianize, then run AMP on ``(Phi', y')``.

    The unknown is unchanged by the transforms, so the trajectory MSE is
    still measured against ``truth``.
    """
    y, truth = _check_problem(op, y, truth)
    wp = gaussianize(whiten(op, y), cfg.seed if seed is None else seed)
    return amp_solve(wp.operator, wp.observations, cfg, truth)
