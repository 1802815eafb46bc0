"""Langevin dynamics of a charged particle in a thermal photon bath."""
from .core import (DomainError, Free, Harmonic, PhaseState, PhysicalParams, Potential, Quartic,
                   Tabulated, Trajectory, ValidationError, make_params, potential_eval)
from .noise import (NoisePath, SpectrumSpec, UnsupportedSpectrum, colored_path, make_path,
                    periodogram, spectrum, white_path)
from .langevin import (EnsembleMoments, IntegrationError, IntegratorSpec, RunawayError, integrate,
                       run_ensemble)
from .greenfn import (ClassicalOrbit, GreenFunction, build_green, composite_solution, compute_B,
                      compute_Q, growth_rate, solve_classical)
from .wigner import WignerGaussian, evaluate_transport, evolve_ensemble_forward, gaussian_packet
from .config import load_config, parse_config

__version__ = "0.1.0"

__all__ = [
    "ClassicalOrbit", "DomainError", "EnsembleMoments", "Free", "GreenFunction", "Harmonic",
    "IntegrationError", "IntegratorSpec", "NoisePath", "PhaseState", "PhysicalParams", "Potential",
    "Quartic", "RunawayError", "SpectrumSpec", "Tabulated", "Trajectory", "UnsupportedSpectrum",
    "ValidationError", "WignerGaussian", "build_green", "colored_path", "composite_solution",
    "compute_B", "compute_Q", "evaluate_transport", "evolve_ensemble_forward", "gaussian_packet",
    "growth_rate", "integrate", "load_config", "make_params", "make_path", "parse_config",
    "periodogram", "potential_eval", "run_ensemble", "solve_classical", "spectrum", "white_path",
]
