import numpy as np
import pytest
from numpy.testing import assert_allclose

from univcs.amp import CONVERGED, DIVERGED, AmpConfig, Trajectory, amp_solve, amp_solve_with_trick
from univcs.denoisers import Denoiser, SignalModel, sample_signal, se_psi
from univcs.ensembles import build_ensemble, build_gaussian


def problem(alpha, rho, n=1000, seed=0, ensemble="gaussian"):
    op = build_ensemble(ensemble, int(alpha * n), n, seed=seed)
    x = sample_signal(SignalModel(n, rho, seed=seed + 100))
    return op, op.apply(x), x


def test_config_validation():
    with pytest.raises(ValueError):
        AmpConfig(mode="lasso")
    with pytest.raises(ValueError):
        AmpConfig(mode="bayes")
    with pytest.raises(ValueError):
        AmpConfig(mode="l1", tol=0)
    cfg = AmpConfig(mode="l1")
    assert cfg.denoiser() == Denoiser.soft_scaled(cfg.threshold_kappa)


def test_bayes_recovery_above_transition():
    op, y, x = problem(0.6, 0.2)
    traj = amp_solve(op, y, AmpConfig(mode="bayes", rho=0.2), truth=x)
    assert traj.status == CONVERGED
    assert traj.final_mse < 1e-12
    assert_allclose(traj.final_estimate, x, atol=1e-5)


def test_bayes_failure_below_transition():
    op, y, x = problem(0.3, 0.2)
    traj = amp_solve(op, y, AmpConfig(mode="bayes", rho=0.2, max_iter=300), truth=x)
    assert traj.final_mse > 1e-2


def test_l1_recovery_and_failure():
    op, y, x = problem(0.6, 0.2, n=2000)
    traj = amp_solve(op, y, AmpConfig(mode="l1", threshold_kappa=0.86, max_iter=2000), truth=x)
    assert traj.final_mse < 1e-10
    op, y, x = problem(0.3, 0.25, n=2000)
    traj = amp_solve(op, y, AmpConfig(mode="l1", threshold_kappa=0.77, max_iter=300), truth=x)
    assert traj.final_mse > 1e-2


def test_first_iterations_follow_state_evolution():
    n, alpha, rho = 3000, 0.6, 0.2
    den = Denoiser.bayes(rho)
    se = [rho]
    for _ in range(5):
        se.append(se_psi(se[-1], den, alpha, rho))
    runs = []
    for seed in range(4):
        op, y, x = problem(alpha, rho, n=n, seed=seed)
        runs.append(amp_solve(op, y, AmpConfig(mode="bayes", rho=rho, max_iter=5), truth=x).mse)
    assert_allclose(np.mean(runs, axis=0), se, rtol=0.1, atol=5e-3)


def test_operator_scale_is_irrelevant():
    op, y, x = problem(0.6, 0.2, n=500)
    scaled = build_ensemble("rot-invariant", 300, 500, seed=1, spectrum=3.0 * op.singular_values)
    y2 = scaled.apply(x)
    traj = amp_solve(scaled, y2, AmpConfig(mode="bayes", rho=0.2), truth=x)
    assert traj.final_mse < 1e-10


def test_onsager_term_matters():
    op, y, x = problem(0.5, 0.2, n=1000)
    with_term = amp_solve(op, y, AmpConfig(mode="bayes", rho=0.2, max_iter=30), truth=x)
    without = amp_solve(op, y, AmpConfig(mode="bayes", rho=0.2, max_iter=30, onsager=False), truth=x)
    assert with_term.final_mse < 1e-6 < without.final_mse


@pytest.mark.parametrize("ensemble", ["rfm-tanh", "dct"])
def test_trick_recovers_on_structured_ensembles(ensemble):
    op, y, x = problem(0.6, 0.2, n=1000, ensemble=ensemble)
    traj = amp_solve_with_trick(op, y, AmpConfig(mode="bayes", rho=0.2), truth=x)
    assert traj.final_mse < 1e-10


def test_plain_amp_fails_on_random_features():
    op, y, x = problem(0.6, 0.2, n=1000, ensemble="rfm-tanh")
    traj = amp_solve(op, y, AmpConfig(mode="bayes", rho=0.2, max_iter=200), truth=x)
    assert traj.final_mse > 1e-2


def test_trick_deterministic_in_seed():
    op, y, x = problem(0.5, 0.3, n=400)
    cfg = AmpConfig(mode="bayes", rho=0.3, max_iter=20)
    a = amp_solve_with_trick(op, y, cfg, truth=x, seed=3)
    b = amp_solve_with_trick(op, y, cfg, truth=x, seed=3)
    assert a.mse == b.mse


def test_zero_observation_converges_immediately():
    op = build_gaussian(50, 100, seed=0)
    traj = amp_solve(op, np.zeros(50), AmpConfig(mode="bayes", rho=0.1))
    assert traj.status == CONVERGED
    assert_allclose(traj.final_estimate, 0)


def test_shape_and_value_checks():
    op = build_gaussian(50, 100, seed=0)
    with pytest.raises(ValueError):
        amp_solve(op, np.zeros(40), AmpConfig(mode="l1"))
    with pytest.raises(ValueError):
        amp_solve(op, np.full(50, np.nan), AmpConfig(mode="l1"))
    with pytest.raises(ValueError):
        amp_solve(op, np.zeros(50), AmpConfig(mode="l1"), truth=np.zeros(3))
    tall = build_gaussian(100, 50, seed=0)
    with pytest.raises(ValueError):
        amp_solve(tall, np.zeros(100), AmpConfig(mode="l1"))


def test_divergence_detection():
    t = Trajectory()
    t.record(0, 1.0, 1.0, 1.0)
    t.record(1, 2e6, 1.0, 1.0)
    assert t.diverging()
    t = Trajectory()
    t.record(0, None, 1.0, 1.0)
    t.record(1, None, np.inf, 1.0)
    assert t.diverging()
    assert DIVERGED == "Diverged"
