"""Joint mean/dispersion metamodels for stochastic simulators, with
variance-based sensitivity indices including the total index of the
seed-driven noise variable."""

from .design import Dataset, Design, Uniform, load_csv, sample_lhs, sample_monte_carlo, write_csv
from .errors import (
    ConditioningError,
    ConfigurationError,
    DataParseError,
    DivergenceError,
    FitError,
    JointsaError,
    SchemaError,
    SingularFitError,
)
from .gam import GamFit, GamSpec, SmoothTerm, fit_gam, gcv_score, predict_gam, s
from .glm import (
    Family,
    GlmFit,
    TermSpec,
    deviance_contributions,
    explained_deviance,
    fit_glm,
    gaussian,
    intercept,
    linear,
    power,
    predict_glm,
    quasi_gamma_log,
    t_values,
)
from .gp import GpModel, build_gp, fit_gp, predict_gp_mean, predict_gp_var
from .joint import (
    JointModel,
    JointSpec,
    coverage_curve,
    fit_joint,
    predict_dispersion,
    predict_mean,
    q2,
)
from .serialize import load_model, save_model
from .smooth import SplineBasis, build_bivariate_basis, build_cubic_basis, evaluate_basis
from .sobol import (
    SaProblem,
    SobolEstimate,
    dispersion_sensitivity,
    first_order_index,
    replicate_indices,
    second_order_index,
    total_index_from_q2,
    total_index_uncontrollable,
)

__version__ = "0.1.0"
