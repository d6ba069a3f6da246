"""Time-dependent harmonic oscillator: angle-action Picard iteration and friends."""

from .errors import (DomainError, IntegrationError, ParameterError, QuadratureError,
                     RefinementRequired)
from .frequency import (FrequencyProfile, SlowTimeFamily, builtin_profiles,
                        eval_zeta, profile_from_config, total_variation_g)
from .oracle import PhaseState, Trajectory, integrate_angle_action, integrate_qp, quadrature

__version__ = "0.1.0"

__all__ = [
    "DomainError", "IntegrationError", "ParameterError", "QuadratureError",
    "RefinementRequired", "FrequencyProfile", "SlowTimeFamily", "builtin_profiles",
    "eval_zeta", "profile_from_config", "total_variation_g", "PhaseState", "Trajectory",
    "integrate_angle_action", "integrate_qp", "quadrature", "__version__",
]
