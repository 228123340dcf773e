"""Individual causal effects under latent receptiveness: simulation, exact
cross-world effect distributions, and REML plug-in estimation."""

from .scm import (
    History, Individual, Measure, Panel, ScmKind, ScmParams, closed_form_effect,
    potential_outcome, potential_outcomes, simulate_panel, true_eice, true_eices,
    true_ice, true_ices,
)
from .cwce import (
    CrossWorldJoint, Degenerate, Discrete, Gaussian, Grid, GridSpec, cross_world_joint_truncated,
    cwce, cwce_crossover, cwce_gaussian, cwce_lognormal, cwce_monte_carlo, cwce_truncated,
    predict_potential_outcome,
)

__all__ = [
    "History", "Individual", "Measure", "Panel", "ScmKind", "ScmParams", "closed_form_effect",
    "potential_outcome", "potential_outcomes", "simulate_panel", "true_eice", "true_eices",
    "true_ice", "true_ices",
    "CrossWorldJoint", "Degenerate", "Discrete", "Gaussian", "Grid", "GridSpec",
    "cross_world_joint_truncated", "cwce", "cwce_crossover", "cwce_gaussian", "cwce_lognormal",
    "cwce_monte_carlo", "cwce_truncated", "predict_potential_outcome",
]

__version__ = "0.1.0"
