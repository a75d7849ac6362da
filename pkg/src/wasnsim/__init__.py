"""Simulation of distributed node-specific signal estimation in wireless acoustic sensor networks."""
from .scene import ConfigurationError, SceneConfig, generate_scene, true_scms
from .scm import ScmSet, SegmentedScm
from .filters import solve_mwf, centralized_filters
from .danse import DanseEstimator, danse_true_updates
from .idanse import IdanseEstimator, idanse_cycle, theorem1_gap
from .harness import RunSpec, load_spec, parse_spec, run

__all__ = [
    "ConfigurationError", "SceneConfig", "generate_scene", "true_scms",
    "ScmSet", "SegmentedScm", "solve_mwf", "centralized_filters",
    "DanseEstimator", "danse_true_updates", "IdanseEstimator", "idanse_cycle",
    "theorem1_gap", "RunSpec", "load_spec", "parse_spec", "run",
]
