"""Joint mean/dispersion fitting.

The alternating scheme: fit the mean submodel under weights 1/phi, take
per-observation dispersion statistics d_i from it (unit deviances for
glm/gam, squared residuals for gp), fit the dispersion submodel to d_i
(gamma-type quasi family with log link, or a GP with a positivity
clamp), refresh phi and the weights, and repeat until the mean-model
deviance stabilizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .design import Dataset
from .errors import ConfigurationError, JointsaError
from .gam import GamFit, GamSpec, SmoothTerm, fit_gam
from .glm import Family, GlmFit, TermSpec, fit_glm, gaussian, quasi_gamma_log
from .gp import GpModel, default_trend, fit_gp

__all__ = [
    "JointSpec",
    "JointModel",
    "fit_joint",
    "predict_mean",
    "predict_dispersion",
    "q2",
    "coverage_curve",
]

ENGINES = ("glm", "gam", "gp")


@dataclass(frozen=True)
class JointSpec:
    """Engine plus term sets for the two submodels.

    For glm/gam, `mean_terms`/`disp_terms` are parametric regressors and
    `mean_smooths`/`disp_smooths` spline terms (gam only); for gp they
    are the trend regressors (empty list means the default constant +
    linear trend).  The dispersion submodel always uses a log link for
    glm/gam, which keeps predicted dispersions positive.
    """

    engine: str
    mean_terms: list[TermSpec] = field(default_factory=list)
    mean_smooths: list[SmoothTerm] = field(default_factory=list)
    disp_terms: list[TermSpec] = field(default_factory=list)
    disp_smooths: list[SmoothTerm] = field(default_factory=list)
    family: Family = field(default_factory=gaussian)
    gp_estimate_power: bool = True
    gp_n_starts: int = 10
    max_outer_iter: int = 10
    outer_tol: float = 1e-6

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ConfigurationError(f"unknown engine {self.engine!r}; choose from {ENGINES}")
        if self.engine != "gam" and (self.mean_smooths or self.disp_smooths):
            raise ConfigurationError(f"smooth terms require the gam engine, not {self.engine!r}")
        if self.engine in ("glm", "gam") and not (self.mean_terms or self.mean_smooths):
            raise ConfigurationError("mean submodel needs at least one term")
        if self.max_outer_iter < 1:
            raise ConfigurationError("max_outer_iter must be >= 1")


@dataclass(frozen=True)
class JointModel:
    spec: JointSpec
    mean_model: object  # GlmFit | GamFit | GpModel
    disp_model: object
    column_names: list[str]
    outer_iterations: int
    converged: bool
    trace: np.ndarray  # mean-model deviance per outer iteration

    def predict_mean(self, points: np.ndarray, names: list[str] | None = None) -> np.ndarray:
        return _predict(self.mean_model, points, names or self.column_names)

    def predict_dispersion(self, points: np.ndarray, names: list[str] | None = None) -> np.ndarray:
        phi = _predict(self.disp_model, points, names or self.column_names)
        return np.maximum(phi, 0.0)


def _predict(model, points, names) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if isinstance(model, GpModel):
        return model.predict_mean(points, names)
    return model.predict(points, names)


def _mean_fitted(model, data: Dataset) -> np.ndarray:
    if isinstance(model, GpModel):
        return model.predict_mean(data.design.points, data.design.column_names)
    return model.fitted_mu


def _mean_criterion(model, engine: str) -> float:
    """Lower is better; used to pick the best iterate when oscillating."""
    if engine == "gam":
        return model.gcv
    if engine == "gp":
        return -model.log_likelihood
    return model.deviance


def fit_joint(data: Dataset, spec: JointSpec) -> JointModel:
    """Alternate mean and dispersion fits until the mean-model deviance
    changes by less than `outer_tol` (relative) or `max_outer_iter` is
    reached; when the loop oscillates, the best iterate by GCV /
    likelihood / deviance is returned with converged=False.
    """
    y = data.response
    prior_w = data.prior_weights
    names = data.design.column_names
    phi = np.ones(data.n)
    trace = []
    iterates = []
    converged = False
    prev_dev = None
    warm = None

    for _ in range(spec.max_outer_iter):
        mean_model = _fit_mean(data, spec, prior_w / phi, warm)
        if spec.engine == "gp":
            warm = mean_model
        mu = _mean_fitted(mean_model, data)
        if spec.engine == "gp":
            d = (y - mu) ** 2
            dev = float(np.sum(prior_w / phi * d))
        else:
            d = spec.family.deviance_terms(y, mu, prior_w)
            dev = float(np.sum(d / phi))
        d = np.maximum(d, 1e-12 * max(float(d.mean()), 1e-300))
        disp_model = _fit_disp(data, spec, d)
        phi_new = _predict(disp_model, data.design.points, names)
        phi = np.maximum(phi_new, 1e-10 * float(d.mean()))
        trace.append(dev)
        if not np.isfinite(dev):
            raise JointsaError("mean-model deviance became non-finite in the outer loop")
        iterates.append((mean_model, disp_model, _mean_criterion(mean_model, spec.engine)))
        if prev_dev is not None and abs(dev - prev_dev) / (abs(dev) + 0.1) < spec.outer_tol:
            converged = True
            break
        prev_dev = dev

    if converged:
        mean_model, disp_model, _ = iterates[-1]
    else:
        best = int(np.argmin([c for _, _, c in iterates]))
        mean_model, disp_model, _ = iterates[best]

    return JointModel(
        spec=spec,
        mean_model=mean_model,
        disp_model=disp_model,
        column_names=list(names),
        outer_iterations=len(iterates),
        converged=converged,
        trace=np.asarray(trace),
    )


def _fit_mean(data: Dataset, spec: JointSpec, weights: np.ndarray, warm):
    weighted = data.with_weights(weights)
    if spec.engine == "glm":
        return fit_glm(weighted, spec.mean_terms, spec.family)
    if spec.engine == "gam":
        return fit_gam(weighted, GamSpec(spec.mean_terms, spec.mean_smooths, spec.family))
    return fit_gp(
        weighted,
        trend=spec.mean_terms or None,
        estimate_power=spec.gp_estimate_power,
        n_starts=spec.gp_n_starts if warm is None else 0,
        warm_start=warm,
    )


def _fit_disp(data: Dataset, spec: JointSpec, d: np.ndarray):
    disp_data = Dataset(data.design, d, response_name="dispersion")
    if spec.engine == "glm":
        terms = spec.disp_terms or [TermSpec("intercept")]
        return fit_glm(disp_data, terms, quasi_gamma_log())
    if spec.engine == "gam":
        terms = spec.disp_terms or [TermSpec("intercept")]
        return fit_gam(disp_data, GamSpec(terms, spec.disp_smooths, quasi_gamma_log()))
    return fit_gp(
        disp_data,
        trend=spec.disp_terms or None,
        estimate_power=spec.gp_estimate_power,
        n_starts=max(spec.gp_n_starts // 2, 3),
    )


def predict_mean(jm: JointModel, points: np.ndarray, names: list[str] | None = None) -> np.ndarray:
    return jm.predict_mean(points, names)


def predict_dispersion(jm: JointModel, points: np.ndarray, names: list[str] | None = None) -> np.ndarray:
    return jm.predict_dispersion(points, names)


def q2(model, test: Dataset) -> float:
    """Predictivity coefficient on a test sample: 1 - SSE / SST.

    `model` may be a JointModel (its mean component is used) or any
    fitted submodel.
    """
    if test.n < 2:
        raise ConfigurationError("test sample must have at least 2 points")
    y = test.response
    denom = float(np.sum((y - y.mean()) ** 2))
    if denom <= 0:
        raise ConfigurationError("test responses have zero variance")
    if isinstance(model, JointModel):
        pred = model.predict_mean(test.design.points, test.design.column_names)
    else:
        pred = _predict(model, test.design.points, test.design.column_names)
    return 1.0 - float(np.sum((y - pred) ** 2)) / denom


def coverage_curve(jm: JointModel, data: Dataset, alphas=None) -> list[tuple[float, float]]:
    """Fraction of observations inside the central alpha-level Gaussian
    interval mean +- z * sqrt(dispersion), per alpha."""
    alphas = np.arange(0.05, 1.0, 0.05) if alphas is None else np.asarray(alphas, dtype=float)
    if np.any((alphas <= 0) | (alphas >= 1)):
        raise ConfigurationError("alphas must lie strictly inside (0, 1)")
    mean = jm.predict_mean(data.design.points, data.design.column_names)
    disp = jm.predict_dispersion(data.design.points, data.design.column_names)
    err = np.abs(data.response - mean)
    out = []
    for a in alphas:
        z = norm.ppf(0.5 * (1.0 + a))
        out.append((float(a), float(np.mean(err <= z * np.sqrt(disp)))))
    return out
