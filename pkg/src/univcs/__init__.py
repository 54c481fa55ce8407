"""Noiseless sparse linear estimation with AMP and VAMP across structured
sensing ensembles, with state-evolution transition lines."""
from .amp import AmpConfig, Trajectory, amp_solve, amp_solve_with_trick
from .denoisers import Denoiser, SignalModel, bayes_gb_denoise, mmse, sample_signal, se_psi, soft_threshold
from .ensembles import ENSEMBLES, MeasurementOperator, build_ensemble, gaussianize, whiten
from .phase_lines import PhaseLine, compute_phase_line, critical_alpha, se_converges
from .vamp import VampConfig, vamp_se_step, vamp_solve

__version__ = "0.1.0"
