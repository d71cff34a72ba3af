"""Restricted Wasserstein-2 distances and transport maps.

The squared W2 distance under the cost ``1/2 |x - y|^2`` has the dual form

    W2^2 = 1/2 E|X|^2 + 1/2 E|Y|^2 - min_f  E f(X) + E f*(Y),

with ``f`` convex. Restricting ``f`` to a parametric class of convex
potentials (quadratics, ball-constrained linear terms, PLQ functions,
conic combinations, input-convex networks) gives a computable lower bound
``W2F`` and an approximate transport map ``grad f*``.

Modules
-------
distributions  samplers, moments and CSV I/O
potentials     parametric convex classes
conjugate      inner solver for ``f*`` and its maximiser
solver         projected SGD and closed-form fits
metrics        the restricted distance, map and moment diagnostics
oracle         exact assignment, brute force and Sinkhorn references
cli            the ``w2restrict`` command
"""

from .conjugate import ConjugateConfig, WarmStartCache, conjugate_argmax, conjugate_batch, fenchel_gap
from .distributions import (
    GaussianSpec,
    MixtureSpec,
    SampleSet,
    affine_pushforward,
    canonical_pair,
    empirical_moments,
    load_csv,
    sample_gaussian,
    sample_mixture,
    sample_two_point,
    save_csv,
)
from .errors import DivergenceError, ParseError, SolverQualityWarning, ValidationError
from .metrics import (
    W2fReport,
    gaussian_w2_closed_form,
    moment_match_report,
    transport_map,
    w2f_squared,
    w2f_symmetric,
)
from .oracle import Coupling, barycentric_map, brute_force_w2, exact_w2_assignment, map_error, sinkhorn
from .potentials import (
    PLQ,
    BallLinear,
    ConeCombo,
    Icnn,
    IcnnLayer,
    Quadratic,
    convexity_probe,
    evaluate,
    grad_params,
    grad_x,
    identity_potential,
    project_feasible,
    strong_convexity_modulus,
)
from .solver import (
    FitResult,
    DecaySchedule,
    TrainConfig,
    estimate_objective,
    fit,
    fit_ball_linear_closed_form,
    fit_quadratic_closed_form,
    load_checkpoint,
    save_checkpoint,
    stochastic_gradient,
)

__version__ = "0.1.0"

__all__ = [
    "ConjugateConfig",
    "WarmStartCache",
    "conjugate_argmax",
    "conjugate_batch",
    "fenchel_gap",
    "GaussianSpec",
    "MixtureSpec",
    "SampleSet",
    "affine_pushforward",
    "canonical_pair",
    "empirical_moments",
    "load_csv",
    "sample_gaussian",
    "sample_mixture",
    "sample_two_point",
    "save_csv",
    "DivergenceError",
    "ParseError",
    "SolverQualityWarning",
    "ValidationError",
    "W2fReport",
    "gaussian_w2_closed_form",
    "moment_match_report",
    "transport_map",
    "w2f_squared",
    "w2f_symmetric",
    "Coupling",
    "barycentric_map",
    "brute_force_w2",
    "exact_w2_assignment",
    "map_error",
    "sinkhorn",
    "PLQ",
    "BallLinear",
    "ConeCombo",
    "Icnn",
    "IcnnLayer",
    "Quadratic",
    "convexity_probe",
    "evaluate",
    "grad_params",
    "grad_x",
    "identity_potential",
    "project_feasible",
    "strong_convexity_modulus",
    "FitResult",
    "DecaySchedule",
    "TrainConfig",
    "estimate_objective",
    "fit",
    "fit_ball_linear_closed_form",
    "fit_quadratic_closed_form",
    "load_checkpoint",
    "save_checkpoint",
    "stochastic_gradient",
    "__version__",
]
