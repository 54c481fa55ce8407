"""Vector AMP: an LMMSE half-step in the SVD basis alternating with a
separable denoiser half-step, exchanging Gaussian messages ``(u, rho)``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .amp import CONVERGED, DIVERGED, Trajectory, _check_problem, _mse
from .denoisers import Denoiser, se_psi, soft_derivative_mean
from .ensembles import MeasurementOperator, SvdBundle, stieltjes

DELTA_SCALE = 1e-10
TINY_VARIANCE = 1e-300
# averaged divergences rho * var are kept in [DIV_CLIP, 1 - DIV_CLIP]
DIV_CLIP = 1e-6


@dataclass(frozen=True)
class VampConfig:
    """``mode`` is ``"bayes"`` (prior sparsity ``rho``) or ``"l1"`` (MAP with
    penalty ``lam``).  ``delta=None`` picks ``1e-10 * |y|^2 / m``."""

    mode: str = "bayes"
    rho: float | None = None
    lam: float = 1e-4
    max_iter: int = 500
    tol: float = 1e-9
    damping: float = 0.5
    delta: float | None = None
    rho_floor: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("l1", "bayes"):
            raise ValueError(f"mode must be 'l1' or 'bayes', got {self.mode!r}")
        if self.mode == "bayes" and self.rho is None:
            raise ValueError("bayes mode needs the prior sparsity rho")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.delta is not None and self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.rho_floor <= 0 or self.tol <= 0 or self.lam <= 0:
            raise ValueError("rho_floor, tol and lam must be positive")


@dataclass
class VampState:
    u_l: np.ndarray
    u_r: np.ndarray
    rho_l: float
    rho_r: float
    x_hat_l: np.ndarray
    x_hat_r: np.ndarray
    var_l: float
    var_r: float


class LinearChannel:
    """Precomputed pieces of the LMMSE step for one ``(Phi, y)`` pair:
    squared singular values, ``diag(s) U^T y`` and the maps ``x -> Vt x`` and
    ``c -> Vt^T c``."""

    def __init__(self, s2, coef, fwd, adj, n):
        self.s2 = s2
        self.coef = coef
        self._fwd = fwd
        self._adj = adj
        self.n = n

    @classmethod
    def from_svd(cls, svd: SvdBundle, y):
        r = svd.s.size
        coef = svd.s * (svd.U[:, :r].T @ np.asarray(y, dtype=float))
        return cls(svd.s ** 2, coef, svd.Vt.__matmul__, svd.Vt.T.__matmul__, svd.Vt.shape[1])

    @classmethod
    def from_operator(cls, op: MeasurementOperator, y):
        # row-orthonormal operators: unit singular values, Vt is Phi itself
        if op.row_orthonormal and op.m <= op.n:
            return cls(np.ones(op.m), np.asarray(y, dtype=float), op.apply, op.apply_adjoint, op.n)
        return cls.from_svd(op.svd(), y)


def lmmse_step(channel: LinearChannel, u_r, rho_r, delta):
    """``x = (Phi^T Phi + delta rho_r I)^-1 (Phi^T y + delta u_r)`` and the
    averaged posterior variance ``(delta / n) Tr(...)^-1``, both evaluated in
    the SVD basis."""
    c = delta * rho_r
    p = channel._fwd(u_r)
    inner = (channel.coef + delta * p) / (channel.s2 + c) - p / rho_r
    x = u_r / rho_r + channel._adj(inner)
    rank = channel.s2.size
    trace = np.sum(1.0 / (channel.s2 + c)) + max(channel.n - rank, 0) / c
    return x, delta * trace / channel.n


def denoise_step(u_l, rho_l, cfg: VampConfig):
    """Componentwise denoising of ``r = u_l / rho_l`` at noise ``1 / rho_l``."""
    r = u_l / rho_l
    tau2 = 1.0 / rho_l
    if cfg.mode == "bayes":
        x, var = Denoiser.bayes(cfg.rho).posterior(r, tau2)
        return x, float(np.mean(var))
    x, var = Denoiser.soft(cfg.lam / rho_l).posterior(r, tau2)
    return x, float(np.mean(var))


def default_delta(y) -> float:
    y = np.asarray(y, dtype=float)
    energy = float(y @ y) / y.size
    return DELTA_SCALE * (energy if energy > 0 else 1.0)


def _damp(old, new, gamma):
    return new if old is None else (1.0 - gamma) * old + gamma * new


def _clip_divergence(var, rho_in):
    """Keep ``rho_in * var`` inside ``(0, 1)`` so the extrinsic precision
    ``1/var - rho_in`` stays finite and positive."""
    a = min(max(var * rho_in, DIV_CLIP), 1.0 - DIV_CLIP)
    return a / rho_in


def vamp_solve(op: MeasurementOperator, y, cfg: VampConfig, truth=None, return_state=False):
    """Iterate the VAMP fixed-point equations until the denoiser estimate
    stops moving, the iteration budget runs out, or the run diverges."""
    y, truth = _check_problem(op, y, truth)
    n = op.n
    delta = cfg.delta if cfg.delta is not None else default_delta(y)
    channel = LinearChannel.from_operator(op, y)
    floor = cfg.rho_floor
    gamma = cfg.damping

    u_r = np.zeros(n)
    if cfg.mode == "bayes":
        rho_r = 1.0 / cfg.rho
    else:
        rho_r = op.frobenius_sq() / max(float(y @ y), TINY_VARIANCE)
    u_l = rho_l = None
    x_r = np.zeros(n)

    traj = Trajectory()
    traj.record(0, _mse(x_r, truth), float(np.linalg.norm(y)), 1.0 / rho_r)
    state = None
    for t in range(1, cfg.max_iter + 1):
        x_l, var_l = lmmse_step(channel, u_r, rho_r, delta)
        var_l = _clip_divergence(var_l, rho_r)
        rho_l = max(_damp(rho_l, 1.0 / var_l - rho_r, gamma), floor)
        u_l = _damp(u_l, x_l / var_l - u_r, gamma)

        x_new, var_r = denoise_step(u_l, rho_l, cfg)
        var_r = _clip_divergence(var_r, rho_l)
        rho_r = max(_damp(rho_r, 1.0 / var_r - rho_l, gamma), floor)
        u_r = _damp(u_r, x_new / var_r - u_l, gamma)

        residual = float(np.linalg.norm(y - op.apply(x_new)))
        traj.record(t, _mse(x_new, truth), residual, 1.0 / rho_l)
        change = np.linalg.norm(x_new - x_r)
        x_r = x_new
        state = VampState(u_l, u_r, rho_l, rho_r, x_l, x_r, var_l, var_r)
        finite = np.all(np.isfinite(u_l)) and np.all(np.isfinite(u_r))
        if not finite or traj.diverging():
            traj.status = DIVERGED
            break
        if change <= cfg.tol * np.linalg.norm(x_r):
            traj.status = CONVERGED
            break
    traj.final_estimate = x_r
    return (traj, state) if return_state else traj


def _se_sigma(rho_l, denoiser: Denoiser, rho_signal):
    tau2 = 1.0 / rho_l
    if denoiser.kind == "bayes":
        return se_psi(tau2, denoiser, 1.0, rho_signal)
    return float(soft_derivative_mean(tau2, denoiser.threshold(tau2), rho_signal)) * tau2


def _se_epsilon(rho_r, spectrum, delta, n, noiseless, alpha=None):
    lam = np.asarray(spectrum, dtype=float)
    n = lam.size if n is None else n
    if noiseless:
        if alpha is None:
            alpha = np.count_nonzero(lam) / n
        return (1.0 - alpha) / rho_r
    return delta * stieltjes(lam, -delta * rho_r, n)


def vamp_se_step(rho_l, rho_r, spectrum, delta, denoiser: Denoiser, alpha, rho_signal,
                 n=None, noiseless=False):
    """One state-evolution evaluation ``(sigma, epsilon)``.

    ``sigma`` is the denoiser's averaged variance at noise ``1 / rho_l`` (the
    MMSE for a Bayes denoiser).  ``epsilon`` is ``delta * S(-delta rho_r)``
    over the eigenvalues of ``Phi^T Phi``, zero-padded to ``n``; with
    ``noiseless`` set it is the limit ``(1 - alpha) / rho_r``, where ``alpha``
    defaults to the nonzero fraction of the spectrum.
    """
    if rho_l <= 0 or rho_r <= 0:
        raise ValueError("precisions must be positive")
    return (_se_sigma(rho_l, denoiser, rho_signal),
            _se_epsilon(rho_r, spectrum, delta, n, noiseless, alpha))


def vamp_state_evolution(spectrum, delta, rho_signal, n=None, max_iter=500,
                         noiseless=False, tol=1e-13):
    """Iterate the Bayes-optimal VAMP state evolution from ``rho_r = 1/rho``.

    Returns the sequence of predicted MSEs ``sigma_t``.
    """
    den = Denoiser.bayes(rho_signal)
    rho_r = 1.0 / rho_signal
    history = []
    for _ in range(max_iter):
        eps = _se_epsilon(rho_r, spectrum, delta, n, noiseless)
        rho_l = max(1.0 / eps - rho_r, 1e-300)
        sigma = _se_sigma(rho_l, den, rho_signal)
        history.append(sigma)
        if sigma < tol or (len(history) > 1 and abs(history[-2] - sigma) <= 1e-12 * sigma):
            break
        rho_r = max(1.0 / sigma - rho_l, 1e-300)
    return history
