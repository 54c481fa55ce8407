"""Scalar priors, separable denoisers and single-variable state-evolution
expectations.

All denoisers use the channel parametrization ``r = x + tau * z`` with
``z ~ N(0, 1)``.  The natural parameters ``(u, rho)`` of a Gaussian message
map onto it through ``r = u / rho`` and ``tau2 = 1 / rho``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import expit, ndtr

PANEL_NODES = 8
LOG_PANEL_WIDTH = 0.1
LOG_2PI = float(np.log(2 * np.pi))


@dataclass(frozen=True)
class SignalModel:
    """Gauss-Bernoulli sparse signal ``(1 - rho) delta_0 + rho N(0, 1)``."""

    n: int
    rho: float
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"signal dimension must be a positive integer, got {self.n}")
        if not (0.0 < self.rho <= 1.0):
            raise ValueError(f"sparsity rho must lie in (0, 1], got {self.rho}")

    def sample(self) -> np.ndarray:
        return sample_signal(self)


def sample_signal(model: SignalModel, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw one Gauss-Bernoulli vector; deterministic in ``model.seed``.

    A generator may be passed instead to draw from an existing stream.
    """
    if rng is None:
        rng = np.random.default_rng(model.seed)
    support = rng.random(model.n) < model.rho
    values = rng.standard_normal(model.n)
    return np.where(support, values, 0.0)


def soft_threshold(r, theta):
    """Soft thresholding ``sign(r) max(|r| - theta, 0)`` and its derivative."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("threshold must be nonnegative")
    r = np.asarray(r, dtype=float)
    active = np.abs(r) > theta
    estimate = np.where(active, r - np.sign(r) * theta, 0.0)
    return estimate, active.astype(float)


def _log_odds(r, tau2, rho):
    # log P(slab | r) - log P(spike | r)
    if rho >= 1.0:
        return np.full(np.shape(r), np.inf)
    prior = np.log(rho) - np.log1p(-rho)
    return prior - 0.5 * np.log1p(1.0 / tau2) + r * r / (2.0 * tau2 * (1.0 + tau2))


def bayes_gb_denoise(r, tau2, rho):
    """Posterior mean and variance of ``x`` given ``r = x + tau z``.

    The prior is ``(1 - rho) delta_0 + rho N(0, 1)``.  The slab responsibility
    is computed from its log-odds so that ``|r| / tau`` may be arbitrarily
    large.
    """
    tau2 = float(tau2)
    if not tau2 > 0 or not np.isfinite(tau2):
        raise ValueError(f"channel variance must be positive and finite, got {tau2}")
    if not (0.0 < rho <= 1.0):
        raise ValueError(f"prior sparsity must lie in (0, 1], got {rho}")
    r = np.asarray(r, dtype=float)
    shrink = 1.0 / (1.0 + tau2)
    m = r * shrink
    v = tau2 * shrink
    logit = _log_odds(r, tau2, rho)
    p = expit(logit)
    mean = p * m
    var = p * v + p * expit(-logit) * m * m
    return mean, var


@dataclass(frozen=True)
class Denoiser:
    """Separable scalar denoiser.

    ``kind`` is ``"soft"`` or ``"bayes"``.  For ``"soft"``, ``param`` is the
    threshold, or the threshold in units of the channel standard deviation
    when ``scaled`` is set.  For ``"bayes"``, ``param`` is the prior sparsity.
    """

    kind: str
    param: float
    scaled: bool = False

    def __post_init__(self):
        if self.kind not in ("soft", "bayes"):
            raise ValueError(f"unknown denoiser kind {self.kind!r}")
        if self.kind == "bayes" and not (0.0 < self.param <= 1.0):
            raise ValueError("bayes denoiser needs prior sparsity in (0, 1]")
        if self.kind == "soft" and self.param < 0:
            raise ValueError("soft threshold must be nonnegative")

    @classmethod
    def soft(cls, theta: float) -> "Denoiser":
        return cls("soft", float(theta))

    @classmethod
    def soft_scaled(cls, kappa: float) -> "Denoiser":
        return cls("soft", float(kappa), scaled=True)

    @classmethod
    def bayes(cls, rho: float) -> "Denoiser":
        return cls("bayes", float(rho))

    def threshold(self, tau2: float) -> float:
        return self.param * np.sqrt(tau2) if self.scaled else self.param

    def __call__(self, r, tau2):
        """Return ``(estimate, derivative)`` with derivative taken in ``r``."""
        if self.kind == "bayes":
            mean, var = bayes_gb_denoise(r, tau2, self.param)
            return mean, var / tau2
        return soft_threshold(r, self.threshold(tau2))

    def posterior(self, r, tau2):
        """Return ``(estimate, variance)``; for soft thresholding the variance
        is ``tau2`` times the derivative (the MAP curvature proxy)."""
        if self.kind == "bayes":
            return bayes_gb_denoise(r, tau2, self.param)
        est, der = soft_threshold(r, self.threshold(tau2))
        return est, tau2 * der


def _check_finite(**values):
    for name, v in values.items():
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{name} must be finite, got {v}")


def soft_risk(s2, theta, rho):
    """Exact ``E[(eta(X + s Z; theta) - X)^2]`` for Gauss-Bernoulli ``X``.

    Closed form, vectorized over all arguments.  Spike branch: the risk of
    thresholding pure noise.  Slab branch: ``r = X + sZ ~ N(0, 1 + s^2)`` and
    ``E[X | r] = r / (1 + s^2)``, so the cross term follows from Stein's
    identity.
    """
    s2 = np.asarray(s2, dtype=float)
    theta = np.asarray(theta, dtype=float)
    s = np.sqrt(s2)
    safe = np.where(s > 0, s, 1.0)
    a = theta / safe
    tail0 = ndtr(-a)
    pdf0 = np.exp(-0.5 * a * a - 0.5 * LOG_2PI)
    spike = np.where(s > 0, 2.0 * s2 * ((1.0 + a * a) * tail0 - a * pdf0), 0.0)

    v = 1.0 + s2
    sv = np.sqrt(v)
    b = theta / sv
    tail1 = ndtr(-b)
    pdf1 = np.exp(-0.5 * b * b - 0.5 * LOG_2PI)
    eta_sq = 2.0 * ((v + theta * theta) * tail1 - theta * sv * pdf1)
    cross = 2.0 * tail1
    slab = eta_sq - 2.0 * cross + 1.0
    return (1.0 - rho) * spike + rho * slab


@lru_cache(maxsize=8)
def _legendre_rule(k):
    x, w = np.polynomial.legendre.leggauss(k)
    return (x + 1.0) / 2.0, w / 2.0


def _normal_pdf(r, var):
    return np.exp(-0.5 * r * r / var) / np.sqrt(2 * np.pi * var)


def _bayes_psi(s2, rho_prior, rho_signal, panel_nodes):
    # E[(eta(r) - x)^2] written as an integral over the observation r alone:
    # given r, x is a two-component posterior under the true prior, so the
    # inner expectation is (eta(r) - E[x|r])^2 + Var[x|r] in closed form.
    # The integrand lives on scales s, r_c ~ s sqrt(log 1/s) and 1, hence
    # panels of fixed width in log r.
    s = np.sqrt(s2)
    r_lo = 1e-4 * s
    r_hi = 12.0 * np.sqrt(1.0 + s2)
    edges = np.exp(np.arange(np.log(r_lo), np.log(r_hi), LOG_PANEL_WIDTH))
    edges = np.concatenate(([0.0], edges, [r_hi]))
    t, w = _legendre_rule(panel_nodes)
    width = np.diff(edges)
    r = (edges[:-1, None] + width[:, None] * t[None, :]).ravel()
    weights = (width[:, None] * w[None, :]).ravel()

    eta, _ = bayes_gb_denoise(r, s2, rho_prior)
    mean, var = bayes_gb_denoise(r, s2, rho_signal)
    density = (1.0 - rho_signal) * _normal_pdf(r, s2) + rho_signal * _normal_pdf(r, 1.0 + s2)
    return 2.0 * np.dot(weights, density * ((eta - mean) ** 2 + var))


def se_psi(sigma2, denoiser: Denoiser, alpha, rho_signal, nodes: int = PANEL_NODES):
    """State-evolution map ``Psi(sigma2) = E[(eta(X + sigma/sqrt(alpha) Z) - X)^2]``.

    ``X`` is Gauss-Bernoulli with sparsity ``rho_signal``.  The Bayes branch
    integrates over the observation with composite Gauss-Legendre panels
    (``nodes`` per panel); the spike at zero enters through the exact
    two-component posterior.  Soft thresholding uses the exact Gaussian
    integrals.  A scaled soft threshold is ``kappa * sigma / sqrt(alpha)``.
    Deterministic.
    """
    _check_finite(sigma2=sigma2, alpha=alpha, rho_signal=rho_signal)
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    if not (0.0 < rho_signal <= 1.0):
        raise ValueError("rho_signal must lie in (0, 1]")
    s2 = sigma2 / alpha
    if denoiser.kind == "soft":
        theta = denoiser.threshold(s2)
        return float(soft_risk(s2, theta, rho_signal))
    if s2 == 0.0:
        return 0.0
    return float(_bayes_psi(s2, denoiser.param, rho_signal, nodes))


def mmse(tau2, rho, nodes: int = PANEL_NODES) -> float:
    """Bayes-optimal MSE of the Gauss-Bernoulli channel at noise variance tau2."""
    return se_psi(tau2, Denoiser.bayes(rho), 1.0, rho, nodes=nodes)


def soft_derivative_mean(tau2, theta, rho):
    """``E[eta'(X + tau Z; theta)]``: probability of exceeding the threshold."""
    tau2 = np.asarray(tau2, dtype=float)
    spike = 2.0 * ndtr(-theta / np.sqrt(tau2))
    slab = 2.0 * ndtr(-theta / np.sqrt(1.0 + tau2))
    return (1.0 - rho) * spike + rho * slab


def monte_carlo_psi(sigma2, denoiser: Denoiser, alpha, rho_signal, samples, rng, chunk=1_000_000):
    """Plain Monte-Carlo estimate of ``Psi`` and its standard error."""
    s2 = sigma2 / alpha
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        x = sample_signal(SignalModel(k, rho_signal), rng=rng)
        r = x + np.sqrt(s2) * rng.standard_normal(k)
        est, _ = denoiser(r, s2)
        err = (est - x) ** 2
        total += err.sum()
        total_sq += (err * err).sum()
        done += k
    mean = total / samples
    var = total_sq / samples - mean * mean
    return mean, np.sqrt(max(var, 0.0) / samples)


__all__ = [
    "SignalModel",
    "sample_signal",
    "soft_threshold",
    "bayes_gb_denoise",
    "Denoiser",
    "se_psi",
    "soft_risk",
    "mmse",
]
