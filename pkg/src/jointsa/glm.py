"""Quasi-likelihood generalized linear models fitted by IRLS.

A family is a (link, variance) pair; the deviance is the quasi-deviance
2 * w * integral_mu^y (y - t) / v(t) dt, which reduces to the familiar
exponential-family deviances for the classical pairs.  The weighted
least squares step uses a QR decomposition of the weighted model matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .design import Dataset
from .errors import ConfigurationError, DivergenceError, SchemaError, SingularFitError

__all__ = [
    "Family",
    "TermSpec",
    "GlmFit",
    "gaussian",
    "quasi_gamma_log",
    "build_model_matrix",
    "fit_glm",
    "deviance_contributions",
    "predict_glm",
    "t_values",
    "explained_deviance",
]

_LINKS = {
    "identity": (
        lambda mu: mu,
        lambda eta: eta,
        lambda mu: np.ones_like(mu),
    ),
    "log": (
        np.log,
        np.exp,
        lambda mu: 1.0 / mu,
    ),
    "logit": (
        lambda mu: np.log(mu / (1.0 - mu)),
        lambda eta: 1.0 / (1.0 + np.exp(-eta)),
        lambda mu: 1.0 / (mu * (1.0 - mu)),
    ),
    "sqrt": (
        np.sqrt,
        lambda eta: eta**2,
        lambda mu: 0.5 / np.sqrt(mu),
    ),
    "inverse": (
        lambda mu: 1.0 / mu,
        lambda eta: 1.0 / eta,
        lambda mu: -1.0 / mu**2,
    ),
}

_VARIANCES = {
    "constant": lambda mu: np.ones_like(mu),
    "identity": lambda mu: mu,
    "mu_squared": lambda mu: mu**2,
    "binomial": lambda mu: mu * (1.0 - mu),
}


@dataclass(frozen=True)
class Family:
    """Link/variance pair defining a quasi-likelihood family."""

    link: str = "identity"
    variance: str = "constant"

    def __post_init__(self):
        if self.link not in _LINKS:
            raise ConfigurationError(f"unknown link {self.link!r}; choose from {sorted(_LINKS)}")
        if self.variance not in _VARIANCES:
            raise ConfigurationError(
                f"unknown variance function {self.variance!r}; choose from {sorted(_VARIANCES)}"
            )

    def g(self, mu):
        return _LINKS[self.link][0](np.asarray(mu, dtype=float))

    def g_inv(self, eta):
        with np.errstate(over="ignore"):  # callers check finiteness
            return _LINKS[self.link][1](np.asarray(eta, dtype=float))

    def g_prime(self, mu):
        return _LINKS[self.link][2](np.asarray(mu, dtype=float))

    def v(self, mu):
        return _VARIANCES[self.variance](np.asarray(mu, dtype=float))

    def start_mu(self, y: np.ndarray) -> np.ndarray:
        """Initial means pushed into the link domain."""
        y = np.asarray(y, dtype=float)
        if self.link == "log" or self.variance in ("identity", "mu_squared"):
            floor = 1e-8 * max(np.max(np.abs(y)), 1.0)
            return np.maximum(y, floor)
        if self.link in ("logit",) or self.variance == "binomial":
            return np.clip(y, 1e-6, 1.0 - 1e-6)
        if self.link in ("sqrt", "inverse"):
            floor = 1e-8 * max(np.max(np.abs(y)), 1.0)
            return np.maximum(y, floor)
        return y.copy()

    def deviance_terms(self, y, mu, weights) -> np.ndarray:
        """Per-observation quasi-deviance contributions (all >= 0)."""
        y = np.asarray(y, dtype=float)
        mu = np.asarray(mu, dtype=float)
        w = np.asarray(weights, dtype=float)
        with np.errstate(all="ignore"):  # callers check finiteness
            if self.variance == "constant":
                d = (y - mu) ** 2
            elif self.variance == "identity":
                ylogy = np.where(y > 0, y * np.log(np.where(y > 0, y / mu, 1.0)), 0.0)
                d = 2.0 * (ylogy - (y - mu))
            elif self.variance == "mu_squared":
                d = 2.0 * (-np.log(y / mu) + (y - mu) / mu)
            else:  # binomial
                t1 = np.where(y > 0, y * np.log(np.where(y > 0, y / mu, 1.0)), 0.0)
                t2 = np.where(y < 1, (1 - y) * np.log(np.where(y < 1, (1 - y) / (1 - mu), 1.0)), 0.0)
                d = 2.0 * (t1 + t2)
            return w * d


def gaussian() -> Family:
    return Family("identity", "constant")


def quasi_gamma_log() -> Family:
    """Gamma-type quasi family used for dispersion submodels."""
    return Family("log", "mu_squared")


@dataclass(frozen=True)
class TermSpec:
    """One regressor: the intercept, a raw column, or an integer power of it."""

    kind: str  # intercept | linear | power
    column: str = ""
    exponent: int = 1

    def __post_init__(self):
        if self.kind not in ("intercept", "linear", "power"):
            raise ConfigurationError(f"unknown term kind {self.kind!r}")
        if self.kind == "power" and self.exponent < 1:
            raise ConfigurationError(f"power term exponent must be >= 1, got {self.exponent}")
        if self.kind != "intercept" and not self.column:
            raise ConfigurationError(f"{self.kind} term needs a column name")

    @property
    def label(self) -> str:
        if self.kind == "intercept":
            return "1"
        if self.kind == "power" and self.exponent != 1:
            return f"{self.column}^{self.exponent}"
        return self.column


def intercept() -> TermSpec:
    return TermSpec("intercept")


def linear(column: str) -> TermSpec:
    return TermSpec("linear", column)


def power(column: str, exponent: int) -> TermSpec:
    return TermSpec("power", column, exponent)


def _term_column(term: TermSpec, points: np.ndarray, names: list[str]) -> np.ndarray:
    if term.kind == "intercept":
        return np.ones(points.shape[0])
    try:
        j = names.index(term.column)
    except ValueError:
        raise SchemaError(f"term {term.label!r} references unknown column {term.column!r}") from None
    if term.kind == "linear":
        return points[:, j]
    return points[:, j] ** term.exponent


def build_model_matrix(terms: list[TermSpec], points: np.ndarray, names: list[str]) -> np.ndarray:
    if not terms:
        raise ConfigurationError("need at least one term")
    return np.column_stack([_term_column(t, points, names) for t in terms])


@dataclass(frozen=True)
class GlmFit:
    """A converged IRLS fit."""

    family: Family
    terms: list[TermSpec]
    column_names: list[str]
    beta: np.ndarray
    fitted_mu: np.ndarray
    deviance: float
    null_deviance: float
    dof_residual: float
    cov_beta: np.ndarray
    dispersion: float  # Pearson-based scale estimate
    converged: bool
    iterations: int

    @property
    def t_values(self) -> np.ndarray:
        se = np.sqrt(np.diag(self.cov_beta))
        with np.errstate(divide="ignore"):
            return np.where(se > 0, self.beta / np.where(se > 0, se, 1.0), np.sign(self.beta) * np.inf)

    @property
    def explained_deviance(self) -> float:
        if self.null_deviance == 0:
            return 0.0
        return 1.0 - self.deviance / self.null_deviance

    def predict(self, points: np.ndarray, names: list[str]) -> np.ndarray:
        X = build_model_matrix(self.terms, np.atleast_2d(np.asarray(points, dtype=float)), names)
        return self.family.g_inv(X @ self.beta)


def _wls_qr(X: np.ndarray, z: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Solve min ||sqrt(w)(z - X b)||^2 by economic QR; error on rank deficiency."""
    sw = np.sqrt(w)
    Q, R = np.linalg.qr(sw[:, None] * X)
    rdiag = np.abs(np.diag(R))
    if rdiag.min() <= X.shape[1] * np.finfo(float).eps * rdiag.max():
        raise SingularFitError(
            f"model matrix is rank deficient ({X.shape[1]} columns, effective rank lower)"
        )
    return scipy.linalg.solve_triangular(R, Q.T @ (sw * z))


def _irls(
    X: np.ndarray,
    y: np.ndarray,
    prior_w: np.ndarray,
    family: Family,
    tol: float = 1e-8,
    max_iter: int = 50,
) -> tuple[np.ndarray, np.ndarray, float, bool, int, np.ndarray]:
    """Returns (beta, mu, deviance, converged, iterations, working weights)."""
    mu = family.start_mu(y)
    dev = float(np.sum(family.deviance_terms(y, mu, prior_w)))
    beta = None
    converged = False
    it = 0
    w = prior_w.copy()
    for it in range(1, max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            gp = family.g_prime(mu)
            eta = family.g(mu)
            z = eta + (y - mu) * gp
            w = prior_w / (family.v(mu) * gp**2)
        if not np.all(np.isfinite(z)) or not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise DivergenceError("non-finite working response or weights in IRLS")
        beta_new = _wls_qr(X, z, w)
        # step-halve towards the previous beta while the deviance is
        # non-finite or increasing
        step = beta_new
        halvings = 0
        while True:
            mu_new = family.g_inv(X @ step)
            dev_new = float(np.sum(family.deviance_terms(y, mu_new, prior_w)))
            finite = np.isfinite(dev_new) and bool(np.all(np.isfinite(mu_new)))
            if finite and (beta is None or dev_new <= dev * (1.0 + 1e-9) + 1e-12):
                break
            if beta is None:
                raise DivergenceError("deviance non-finite at the first IRLS step")
            halvings += 1
            if halvings > 50:
                if not finite:
                    raise DivergenceError("step halving failed to restore a finite deviance after 50 halvings")
                break  # accept a finite (if slightly worse) step
            step = 0.5 * (step + beta)
        beta, mu = step, mu_new
        if abs(dev_new - dev) / (abs(dev_new) + 0.1) < tol:
            dev = dev_new
            converged = True
            break
        dev = dev_new
    with np.errstate(over="ignore", invalid="ignore"):
        gp = family.g_prime(mu)
        w = prior_w / (family.v(mu) * gp**2)
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise DivergenceError("non-finite working weights at the IRLS solution")
    return beta, mu, dev, converged, it, w


def fit_glm(data: Dataset, terms: list[TermSpec], family: Family | None = None) -> GlmFit:
    """Fit by iteratively reweighted least squares.

    Convergence: relative deviance change below 1e-8 (R-style
    |dev - dev_old| / (|dev| + 0.1)) or 50 iterations.
    """
    family = family or gaussian()
    X = build_model_matrix(terms, data.design.points, data.design.column_names)
    n, ncoef = X.shape
    if n <= ncoef:
        raise ConfigurationError(f"need more observations ({n}) than coefficients ({ncoef})")
    y = data.response
    prior_w = data.prior_weights

    beta, mu, dev, converged, iters, w = _irls(X, y, prior_w, family)

    # null model: intercept only, same prior weights
    ones = np.ones((n, 1))
    try:
        _, _, null_dev, _, _, _ = _irls(ones, y, prior_w, family)
    except DivergenceError:
        null_dev = float(np.sum(family.deviance_terms(y, np.full(n, np.average(y, weights=prior_w)), prior_w)))

    dof = n - ncoef
    pearson = float(np.sum(prior_w * (y - mu) ** 2 / family.v(mu)))
    dispersion = pearson / dof
    XtWX = (X * w[:, None]).T @ X
    cov_beta = dispersion * np.linalg.inv(XtWX)

    return GlmFit(
        family=family,
        terms=list(terms),
        column_names=list(data.design.column_names),
        beta=beta,
        fitted_mu=mu,
        deviance=dev,
        null_deviance=null_dev,
        dof_residual=float(dof),
        cov_beta=cov_beta,
        dispersion=dispersion,
        converged=converged,
        iterations=iters,
    )


def deviance_contributions(fit: GlmFit, data: Dataset) -> np.ndarray:
    """Per-observation quasi-deviance of the fit on its learning data."""
    return fit.family.deviance_terms(data.response, fit.fitted_mu, data.prior_weights)


def predict_glm(fit: GlmFit, points: np.ndarray, names: list[str] | None = None) -> np.ndarray:
    return fit.predict(points, names or fit.column_names)


def t_values(fit: GlmFit) -> np.ndarray:
    return fit.t_values


def explained_deviance(fit: GlmFit) -> float:
    return fit.explained_deviance


def refit_with_weights(fit: GlmFit, data: Dataset, weights: np.ndarray) -> GlmFit:
    return fit_glm(data.with_weights(weights), fit.terms, fit.family)
