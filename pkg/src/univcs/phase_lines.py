"""Transition lines computed from the scalar state evolution
``sigma2_{t+1} = Psi(sigma2_t)``: the l1 (Donoho-Tanner) line, with the
threshold ratio optimized over a grid, and the Bayes hard-phase line."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ndtr

from .denoisers import LOG_2PI, PANEL_NODES, Denoiser, se_psi, soft_risk

KAPPA_GRID = np.round(np.arange(0.01, 3.0 + 1e-9, 0.01), 2)
SE_TOL = 1e-12
SE_BUDGET = 2000
BISECTION_WIDTH = 1e-3
CERT_POINTS_PER_DECADE = 40
METHODS = ("DonohoTanner", "BayesHard")


def _soft_psi(sigma2, kappa, alpha, rho):
    s2 = sigma2 / alpha
    return soft_risk(s2, kappa * np.sqrt(s2), rho)


def _no_fixed_point_below(psi, top, tol):
    """True when ``psi(s) < s`` on ``[tol, top]``.

    Grid scan in log s, then a bounded refinement around the tightest grid
    point so that a narrow near-tangency is not stepped over.
    """
    if top <= tol:
        return True
    decades = np.log10(top / tol)
    grid = np.logspace(np.log10(tol), np.log10(top), max(int(decades * CERT_POINTS_PER_DECADE), 2))
    margin = np.array([1.0 - psi(s) / s for s in grid])
    if np.any(margin <= 0):
        return False
    k = int(np.argmin(margin))
    lo = np.log(grid[max(k - 1, 0)])
    hi = np.log(grid[min(k + 1, grid.size - 1)])
    res = minimize_scalar(lambda u: 1.0 - psi(np.exp(u)) / np.exp(u), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-10})
    return bool(res.fun > 0)


def _bayes_converges(alpha, rho, max_iter, tol, nodes):
    den = Denoiser.bayes(rho)

    def psi(s):
        return se_psi(s, den, alpha, rho, nodes=nodes)

    sigma2 = rho
    for _ in range(max_iter):
        new = psi(sigma2)
        if new < tol:
            return True
        if new >= sigma2:
            return False  # Psi is nondecreasing: stuck at a fixed point
        sigma2 = new
    return _no_fixed_point_below(psi, sigma2, tol)


def _l1_converges(alpha, rho, max_iter, tol, kappas):
    kappas = np.asarray(kappas, dtype=float)
    sigma2 = np.full(kappas.shape, float(rho))
    for _ in range(max_iter):
        new = _soft_psi(sigma2, kappas, alpha, rho)
        if np.any(new < tol):
            return True
        moving = new < sigma2
        if not np.any(moving):
            return False
        kappas, sigma2 = kappas[moving], new[moving]
    for kappa, top in zip(kappas, sigma2):
        if _no_fixed_point_below(lambda s: float(_soft_psi(s, kappa, alpha, rho)), top, tol):
            return True
    return False


def se_converges(alpha, rho, policy, max_iter=SE_BUDGET, tol=SE_TOL,
                 nodes=PANEL_NODES, kappas=KAPPA_GRID) -> bool:
    """Whether state evolution started at ``sigma2 = rho`` reaches ``tol``.

    ``policy`` is ``"bayes"`` or ``"l1"``; the l1 policy succeeds if any
    threshold ratio in ``kappas`` does.  A trajectory still decreasing when
    the budget runs out is settled by checking that ``Psi(s) < s`` on the
    remaining interval, which is where the iteration would go given more
    steps.
    """
    if not (0 < alpha and 0 < rho < 1):
        raise ValueError(f"need alpha > 0 and rho in (0, 1), got {alpha}, {rho}")
    if policy == "bayes":
        return _bayes_converges(alpha, rho, max_iter, tol, nodes)
    if policy == "l1":
        return _l1_converges(alpha, rho, max_iter, tol, kappas)
    raise ValueError(f"unknown policy {policy!r}")


def _policy(method):
    if method in ("DonohoTanner", "dt", "l1"):
        return "l1"
    if method in ("BayesHard", "bayes"):
        return "bayes"
    raise ValueError(f"unknown method {method!r}")


def critical_alpha(rho, method, width=BISECTION_WIDTH, **se_options) -> float:
    """Bisect on alpha in ``(rho, 1)`` for the state-evolution transition."""
    if not 0.02 < rho < 0.98:
        raise ValueError(f"rho must lie in (0.02, 0.98), got {rho}")
    policy = _policy(method)
    lo, hi = float(rho), 1.0
    if se_converges(lo, rho, policy, **se_options) or not se_converges(hi, rho, policy, **se_options):
        raise ValueError(f"no transition in ({rho}, 1) for {method}")
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if se_converges(mid, rho, policy, **se_options):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def small_noise_ratio(kappa, rho):
    """``lim_{s -> 0} E[(eta(X + sZ; kappa s) - X)^2] / s^2``.

    Zeros of ``X`` contribute the thresholded-noise risk, nonzeros the
    shifted-noise risk ``1 + kappa^2``.  The l1 line is the minimum over
    ``kappa`` of this ratio.
    """
    k = np.asarray(kappa, dtype=float)
    pdf = np.exp(-0.5 * k * k - 0.5 * LOG_2PI)
    spike = 2.0 * ((1.0 + k * k) * ndtr(-k) - k * pdf)
    return (1.0 - rho) * spike + rho * (1.0 + k * k)


def optimal_kappa(rho, kappas=KAPPA_GRID) -> float:
    """Threshold ratio on the grid that minimizes the small-noise risk."""
    return float(kappas[int(np.argmin(small_noise_ratio(kappas, rho)))])


@dataclass
class PhaseLine:
    method: str
    points: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def alpha_at(self, rho) -> float:
        rhos, alphas = zip(*self.points)
        return float(np.interp(rho, rhos, alphas))


def compute_phase_line(method, rhos, width=BISECTION_WIDTH, **se_options) -> PhaseLine:
    method = "DonohoTanner" if _policy(method) == "l1" else "BayesHard"
    points = [(float(r), critical_alpha(r, method, width=width, **se_options)) for r in rhos]
    meta = {"bisection_width": width, "se_budget": se_options.get("max_iter", SE_BUDGET),
            "se_tol": se_options.get("tol", SE_TOL)}
    return PhaseLine(method, points, meta)


def write_lines_csv(lines, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "rho", "alpha_c"])
        for line in lines:
            for rho, a in line.points:
                w.writerow([line.method, f"{rho:.6g}", f"{a:.6g}"])


def read_lines_csv(path) -> list:
    lines = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            lines.setdefault(row["method"], PhaseLine(row["method"])).points.append(
                (float(row["rho"]), float(row["alpha_c"])))
    return list(lines.values())
