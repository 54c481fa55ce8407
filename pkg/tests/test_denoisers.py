import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.integrate import quad
from scipy.stats import norm

from univcs.denoisers import (
    Denoiser,
    SignalModel,
    bayes_gb_denoise,
    mmse,
    monte_carlo_psi,
    sample_signal,
    se_psi,
    soft_derivative_mean,
    soft_risk,
    soft_threshold,
)


# independent oracles -----------------------------------------------------

def posterior_quad(r, tau2, rho):
    """Posterior mean and variance by direct integration over the slab."""
    lik = lambda x: np.exp(-0.5 * (r - x) ** 2 / tau2 - 0.5 * x * x)
    c = r / (1 + tau2)
    w = 15 * np.sqrt(tau2 / (1 + tau2))
    kw = dict(epsabs=1e-14 * np.sqrt(tau2), epsrel=1e-12, limit=200)
    z0 = quad(lik, c - w, c + w, **kw)[0]
    z1 = quad(lambda x: x * lik(x), c - w, c + w, **kw)[0]
    z2 = quad(lambda x: x * x * lik(x), c - w, c + w, **kw)[0]
    spike = (1 - rho) * np.exp(-0.5 * r * r / tau2) * np.sqrt(2 * np.pi)
    total = rho * z0 + spike
    mean = rho * z1 / total
    return mean, rho * z2 / total - mean ** 2


def soft_risk_quad(s2, theta, rho):
    s = np.sqrt(s2)
    eta = lambda r: np.sign(r) * max(abs(r) - theta, 0.0)
    spike = quad(lambda z: eta(s * z) ** 2 * norm.pdf(z), -40, 40, points=[-theta / s, theta / s], limit=200)[0]
    v = 1 + s2
    # slab: condition on r ~ N(0, v); x | r ~ N(r / v, s2 / v)
    slab = quad(lambda r: ((eta(r) - r / v) ** 2 + s2 / v) * norm.pdf(r, scale=np.sqrt(v)),
                -40, 40, points=[-theta, theta], limit=200)[0]
    return (1 - rho) * spike + rho * slab


def bayes_psi_quad(s2, rho):
    """MMSE by double integration over (x, z) for the slab and z for the spike."""
    s = np.sqrt(s2)

    def err(x, z):
        m, _ = bayes_gb_denoise(x + s * z, s2, rho)
        return (m - x) ** 2

    spike = quad(lambda z: err(0.0, z) * norm.pdf(z), -12, 12, limit=400, epsabs=1e-13)[0]
    inner = lambda x: quad(lambda z: err(x, z) * norm.pdf(z), -12, 12, limit=400, epsabs=1e-13)[0]
    # the slab error is concentrated on |x| of a few noise widths
    cuts = np.concatenate((-s * np.geomspace(1e3, 1e-2, 11), [0.0], s * np.geomspace(1e-2, 1e3, 11)))
    cuts = np.concatenate(([-12.0], cuts[np.abs(cuts) < 12], [12.0]))
    slab = sum(quad(lambda x: inner(x) * norm.pdf(x), a, b, limit=400, epsabs=1e-16, epsrel=1e-11)[0]
               for a, b in zip(cuts[:-1], cuts[1:]))
    return (1 - rho) * spike + rho * slab


# frozen from bayes_psi_quad above
MMSE_FROZEN = {(0.5, 0.2): 0.1195736429, (0.1, 0.2): 0.03527718151, (1.0, 0.5): 0.3235090306}


# signal model ------------------------------------------------------------

def test_signal_model_validation():
    with pytest.raises(ValueError):
        SignalModel(10, 0.0)
    with pytest.raises(ValueError):
        SignalModel(10, 1.5)
    with pytest.raises(ValueError):
        SignalModel(0, 0.5)


def test_sample_signal_deterministic_and_sparse():
    model = SignalModel(200_000, 0.3, seed=4)
    x = sample_signal(model)
    assert_array_equal(x, model.sample())
    assert abs(np.mean(x != 0) - 0.3) < 0.005
    assert abs(np.var(x[x != 0]) - 1.0) < 0.02
    assert_array_equal(sample_signal(SignalModel(5, 1.0, 0)) != 0, True)


# soft threshold -----------------------------------------------------------

def test_soft_threshold_values():
    est, der = soft_threshold([-2.0, -0.5, 0.0, 0.5, 2.0], 1.0)
    assert_allclose(est, [-1.0, 0.0, 0.0, 0.0, 1.0])
    assert_allclose(der, [1, 0, 0, 0, 1])
    with pytest.raises(ValueError):
        soft_threshold([1.0], -0.1)


@pytest.mark.parametrize("s2,theta,rho", [(0.3, 0.5, 0.2), (1e-3, 0.05, 0.4), (2.0, 2.0, 0.7), (0.1, 0.0, 0.3)])
def test_soft_risk_matches_quadrature(s2, theta, rho):
    assert_allclose(soft_risk(s2, theta, rho), soft_risk_quad(s2, theta, rho), rtol=1e-9)


def test_soft_risk_zero_noise():
    assert soft_risk(0.0, 0.0, 0.3) == 0.0


def test_soft_derivative_mean_is_exceedance_probability():
    rng = np.random.default_rng(1)
    x = sample_signal(SignalModel(400_000, 0.3), rng=rng)
    r = x + np.sqrt(0.2) * rng.standard_normal(x.size)
    assert abs(np.mean(np.abs(r) > 0.4) - soft_derivative_mean(0.2, 0.4, 0.3)) < 3e-3


# bayes denoiser -----------------------------------------------------------

@pytest.mark.parametrize("tau2", [1e-3, 0.1, 1.0, 5.0])
@pytest.mark.parametrize("rho", [0.05, 0.5, 0.9])
def test_bayes_denoiser_matches_quadrature(tau2, rho):
    for r in (-2.5, -0.3, 0.0, 0.1, 0.7, 3.0):
        if abs(r) / np.sqrt(tau2) > 30:
            continue
        mean, var = bayes_gb_denoise(r, tau2, rho)
        qm, qv = posterior_quad(r, tau2, rho)
        assert_allclose(mean, qm, atol=1e-9)
        assert_allclose(var, qv, atol=1e-9)


def test_variance_equals_scaled_derivative():
    r = np.linspace(-4, 4, 41)
    h = 1e-5
    for tau2 in (0.01, 0.3, 2.0):
        _, var = bayes_gb_denoise(r, tau2, 0.2)
        d = (bayes_gb_denoise(r + h, tau2, 0.2)[0] - bayes_gb_denoise(r - h, tau2, 0.2)[0]) / (2 * h)
        assert_allclose(var, tau2 * d, atol=1e-6)
        _, der = Denoiser.bayes(0.2)(r, tau2)
        assert_allclose(der, d, atol=1e-5 / tau2)


def test_bayes_denoiser_extreme_inputs():
    mean, var = bayes_gb_denoise(np.array([1e3, -1e3, 0.0]), 1e-8, 0.1)
    assert np.all(np.isfinite(mean)) and np.all(np.isfinite(var))
    assert_allclose(mean[:2], [1e3 / (1 + 1e-8), -1e3 / (1 + 1e-8)])
    assert abs(mean[2]) < 1e-12
    # dense prior: plain Gaussian shrinkage
    mean, var = bayes_gb_denoise(np.array([0.4, -1.2]), 0.5, 1.0)
    assert_allclose(mean, np.array([0.4, -1.2]) / 1.5)
    assert_allclose(var, 0.5 / 1.5)


def test_bayes_denoiser_nonnegative_variance_and_bounded_gain():
    r = np.linspace(-10, 10, 2001)
    for tau2 in (1e-4, 0.1, 3.0):
        mean, var = bayes_gb_denoise(r, tau2, 0.3)
        assert np.all(var >= 0)
        assert np.all(np.abs(mean) <= np.abs(r) / (1 + tau2) + 1e-15)


def test_bayes_denoiser_rejects_bad_arguments():
    with pytest.raises(ValueError):
        bayes_gb_denoise(1.0, 0.0, 0.3)
    with pytest.raises(ValueError):
        bayes_gb_denoise(1.0, 0.1, 0.0)
    with pytest.raises(ValueError):
        Denoiser("hard", 1.0)
    with pytest.raises(ValueError):
        Denoiser.bayes(1.3)


# state-evolution map ------------------------------------------------------

@pytest.mark.parametrize("key", sorted(MMSE_FROZEN))
def test_mmse_frozen_values(key):
    tau2, rho = key
    assert_allclose(mmse(tau2, rho), MMSE_FROZEN[key], rtol=1e-8)


def test_mmse_frozen_values_regenerate_from_oracle():
    assert_allclose(bayes_psi_quad(0.5, 0.2), MMSE_FROZEN[(0.5, 0.2)], rtol=1e-8)


def test_bayes_psi_small_noise_against_oracle():
    # the hard regime for quadrature: noise far below the slab scale
    for s2 in (1e-6,):
        assert_allclose(mmse(s2, 0.3), bayes_psi_quad(s2, 0.3), rtol=1e-6)


def test_se_psi_monte_carlo_agreement():
    rng = np.random.default_rng(2)
    for den in (Denoiser.bayes(0.25), Denoiser.soft_scaled(1.2), Denoiser.soft(0.3)):
        mean, err = monte_carlo_psi(0.2, den, 0.5, 0.25, 400_000, rng)
        assert abs(mean - se_psi(0.2, den, 0.5, 0.25)) < 5 * err


def test_se_psi_properties():
    den = Denoiser.bayes(0.2)
    grid = np.logspace(-10, 1, 60)
    vals = np.array([se_psi(s, den, 0.5, 0.2) for s in grid])
    assert np.all(vals >= 0)
    assert np.all(np.diff(vals) >= -1e-15)
    assert se_psi(0.0, den, 0.5, 0.2) == 0.0
    # mmse never exceeds the prior variance or the channel noise
    for t in grid:
        assert mmse(t, 0.2) <= min(0.2, t) * (1 + 1e-9)


def test_se_psi_quadrature_nodes_converged():
    den = Denoiser.bayes(0.3)
    for s in (1e-8, 1e-3, 0.5):
        assert_allclose(se_psi(s, den, 0.6, 0.3, nodes=8), se_psi(s, den, 0.6, 0.3, nodes=16), rtol=1e-10)


def test_se_psi_rejects_bad_arguments():
    den = Denoiser.bayes(0.2)
    with pytest.raises(ValueError):
        se_psi(-1.0, den, 0.5, 0.2)
    with pytest.raises(ValueError):
        se_psi(0.1, den, 0.0, 0.2)
    with pytest.raises(ValueError):
        se_psi(np.nan, den, 0.5, 0.2)


def test_bayes_denoiser_frozen_example():
    # frozen from posterior_quad(1.0, 0.5, 0.25)
    mean, var = bayes_gb_denoise(1.0, 0.5, 0.25)
    assert_allclose(mean, 0.1817623177, atol=1e-8)
    assert_allclose(var, 0.1790184971, atol=1e-8)


def test_bayes_mean_monotone_and_soft_lipschitz():
    r = np.linspace(-8, 8, 4001)
    for tau2 in (1e-3, 0.2, 4.0):
        mean, _ = bayes_gb_denoise(r, tau2, 0.15)
        assert np.all(np.diff(mean) >= 0)
    est, _ = soft_threshold(r, 0.7)
    assert np.all(np.abs(np.diff(est)) <= np.diff(r) + 1e-15)


def test_se_psi_large_monte_carlo_example():
    rng = np.random.default_rng(10)
    den = Denoiser.bayes(0.25)
    mean, err = monte_carlo_psi(0.25, den, 0.6, 0.25, 10_000_000, rng)
    assert abs(mean - se_psi(0.25, den, 0.6, 0.25)) < 3 * err


def test_se_psi_random_triples_monte_carlo():
    rng = np.random.default_rng(11)
    for _ in range(20):
        s2, alpha, rho = rng.uniform(1e-3, 1.0), rng.uniform(0.1, 1.0), rng.uniform(0.05, 0.95)
        den = Denoiser.bayes(rho) if rng.random() < 0.5 else Denoiser.soft_scaled(rng.uniform(0.5, 2.5))
        mean, err = monte_carlo_psi(s2, den, alpha, rho, 200_000, rng)
        assert abs(mean - se_psi(s2, den, alpha, rho)) < 4 * err
