"""Stability experiments for entropic semi-discrete optimal transport with p-costs."""
from __future__ import annotations

__version__ = "0.1.0"

from .costs import CostSpec, cost_matrix, gamma_analytic, shifted_spec  # noqa: E402
from .dual import DualSolution, SolverOptions, extract_map, solve_dual, solve_eps_schedule  # noqa: E402
from .measures import DiscreteMeasure, SourceQuadrature, make_discrete, sample_source  # noqa: E402

__all__ = [
    "CostSpec", "cost_matrix", "gamma_analytic", "shifted_spec",
    "DualSolution", "SolverOptions", "extract_map", "solve_dual", "solve_eps_schedule",
    "DiscreteMeasure", "SourceQuadrature", "make_discrete", "sample_source",
]
