"""Threshold-detection Monte Carlo for classical random fields.

Wiener fields with covariance operator ``B`` drive threshold detectors whose
clicks are first hitting times of channel energies; click statistics are
compared with Born probabilities of ``rho = B / Tr B`` and with closed-form
hitting-time references.
"""

from .detector import ChannelAssignment, ClickLog, DetectorConfig, find_coincidences, first_hit, run_detector
from .errors import (DegenerateRate, InsufficientClicks, NoClicks, PCSFTError, SimulationError,
                     ValidationError)
from .experiment import (ExperimentConfig, ExperimentStats, born_report, mean_tau_report, run_coincidence,
                         run_singles, sweep_threshold)
from .linalg import (CovarianceOperator, DensityMatrix, Projector, born_probability, cholesky,
                     density_from_covariance, spectral_decompose)
from .modes import ModeSystem, decoherent_mixture, evolve, project_component, relative_energies
from .rng import RngStream
from .wiener import FieldTrajectory, generate_path, sample_increment

__all__ = [
    "ChannelAssignment", "ClickLog", "CovarianceOperator", "DegenerateRate", "DensityMatrix", "DetectorConfig",
    "ExperimentConfig", "ExperimentStats", "FieldTrajectory", "InsufficientClicks", "ModeSystem", "NoClicks",
    "PCSFTError", "Projector", "RngStream", "SimulationError", "ValidationError", "born_probability", "born_report",
    "cholesky", "decoherent_mixture", "density_from_covariance", "evolve", "find_coincidences", "first_hit",
    "generate_path", "mean_tau_report", "project_component", "relative_energies", "run_coincidence",
    "run_detector", "run_singles", "sample_increment", "spectral_decompose", "sweep_threshold",
]
