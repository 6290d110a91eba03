"""Gaussian-process regression with trend, generalized-exponential
covariance and nugget.

Covariance between inputs standardized to the unit cube:

    k(h) = sigma2 * exp(-sum_j theta_j |h_j|^p_j),  p_j in (0, 2]

plus a nugget variance on the diagonal.  Hyperparameters maximize the
marginal likelihood with the trend coefficients profiled out by
generalized least squares; optimization is bounded L-BFGS with analytic
gradients, restarted from a fixed-seed Latin hypercube over log(theta).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .design import Dataset, Uniform, sample_lhs
from .errors import ConditioningError, ConfigurationError, FitError
from .glm import TermSpec, build_model_matrix, intercept, linear

__all__ = ["GpModel", "fit_gp", "build_gp", "predict_gp_mean", "predict_gp_var", "default_trend"]

_JITTERS = (0.0, 1e-12, 1e-10, 1e-8, 1e-6)


def default_trend(column_names: list[str]) -> list[TermSpec]:
    return [intercept()] + [linear(c) for c in column_names]


def _chol_with_jitter(K: np.ndarray, scale: float):
    for jit in _JITTERS:
        try:
            return scipy.linalg.cholesky(K + jit * scale * np.eye(len(K)), lower=True), jit
        except scipy.linalg.LinAlgError:
            continue
    raise ConditioningError("covariance matrix not positive definite within the jitter ladder")


@dataclass(frozen=True)
class GpModel:
    """Fitted Gaussian process; immutable, prediction is reentrant."""

    trend_terms: list[TermSpec]
    trend_beta: np.ndarray
    theta: np.ndarray
    power: np.ndarray
    sigma2: float
    nugget2: float
    column_names: list[str]
    x_lo: np.ndarray
    x_range: np.ndarray
    x_train: np.ndarray  # standardized learning inputs
    y_train: np.ndarray
    noise_rel: np.ndarray  # relative per-point nugget factors, mean 1
    log_likelihood: float
    converged: bool
    start_objectives: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    # prediction cache
    _alpha: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    _L: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    _G: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    _KinvF: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    @property
    def nugget_fraction(self) -> float:
        tot = self.sigma2 + self.nugget2
        return self.nugget2 / tot if tot > 0 else 0.0

    def cross_cov(self, points: np.ndarray) -> np.ndarray:
        """Covariance of new points (columns already ordered) with the
        learning points; excludes the nugget."""
        Zs = (np.atleast_2d(np.asarray(points, dtype=float)) - self.x_lo) / self.x_range
        out = np.empty((Zs.shape[0], self.x_train.shape[0]))
        for start in range(0, Zs.shape[0], 4096):
            block = slice(start, start + 4096)
            expo = np.zeros((Zs[block].shape[0], self.x_train.shape[0]))
            for j in range(self.x_train.shape[1]):
                h = np.abs(Zs[block][:, j, None] - self.x_train[None, :, j])
                expo += self.theta[j] * h ** self.power[j]
            out[block] = self.sigma2 * np.exp(-expo)
        return out

    def predict_mean(self, points: np.ndarray, names: list[str] | None = None) -> np.ndarray:
        points = _reorder(np.atleast_2d(np.asarray(points, dtype=float)), names, self.column_names)
        ks = self.cross_cov(points)
        out = ks @ self._alpha
        if self.trend_terms:
            F = build_model_matrix(self.trend_terms, points, self.column_names)
            out = out + F @ self.trend_beta
        return out

    def predict_var(self, points: np.ndarray, names: list[str] | None = None) -> np.ndarray:
        """Mean squared prediction error for a new observation (includes
        the nugget); zero at learning points when the nugget is zero."""
        points = _reorder(np.atleast_2d(np.asarray(points, dtype=float)), names, self.column_names)
        ks = self.cross_cov(points)
        v = scipy.linalg.solve_triangular(self._L, ks.T, lower=True)
        var = self.sigma2 + self.nugget2 - np.einsum("ij,ij->j", v, v)
        if self.trend_terms:
            F = build_model_matrix(self.trend_terms, points, self.column_names)
            u = F - ks @ self._KinvF
            var = var + np.einsum("ij,jk,ik->i", u, self._G, u)
        return np.maximum(var, 0.0)


def _reorder(points: np.ndarray, names: list[str] | None, want: list[str]) -> np.ndarray:
    if names is None or list(names) == list(want):
        return points
    from .errors import SchemaError

    idx = []
    for c in want:
        if c not in names:
            raise SchemaError(f"missing column {c!r}; have {names}")
        idx.append(names.index(c))
    return points[:, idx]


class _GpWork:
    """Precomputed distance matrices and likelihood machinery."""

    def __init__(self, data: Dataset, trend_terms: list[TermSpec]):
        self.names = list(data.design.column_names)
        X = data.design.points
        self.lo = X.min(axis=0)
        self.rng = X.max(axis=0) - self.lo
        if np.any(self.rng <= 0):
            raise ConfigurationError("GP inputs need spread in every column")
        self.Z = (X - self.lo) / self.rng
        self.y = data.response
        self.n, self.p = self.Z.shape
        w = data.prior_weights
        self.noise_rel = (1.0 / w) / np.mean(1.0 / w)
        self.F = (
            build_model_matrix(trend_terms, X, self.names) if trend_terms else np.empty((self.n, 0))
        )
        self.trend_terms = trend_terms
        self.H = [np.abs(self.Z[:, j, None] - self.Z[None, :, j]) for j in range(self.p)]
        with np.errstate(divide="ignore"):
            self.logH = [np.where(H > 0, np.log(np.where(H > 0, H, 1.0)), 0.0) for H in self.H]

    def corr(self, theta, power):
        expo = np.zeros((self.n, self.n))
        for j in range(self.p):
            expo += theta[j] * np.exp(power[j] * self.logH[j]) * (self.H[j] > 0)
        return np.exp(-expo)

    def nll_and_grad(self, theta, power, sigma2, nugget2, est_power: bool):
        R = self.corr(theta, power)
        K = sigma2 * R + nugget2 * np.diag(self.noise_rel)
        L, _ = _chol_with_jitter(K, sigma2 + nugget2)
        if self.F.shape[1]:
            KinvF = scipy.linalg.cho_solve((L, True), self.F)
            G = self.F.T @ KinvF
            beta = np.linalg.solve(G, KinvF.T @ self.y)
            r = self.y - self.F @ beta
        else:
            beta = np.empty(0)
            r = self.y
        alpha = scipy.linalg.cho_solve((L, True), r)
        nll = 0.5 * r @ alpha + np.log(np.diag(L)).sum() + 0.5 * self.n * math.log(2 * math.pi)

        Kinv = scipy.linalg.cho_solve((L, True), np.eye(self.n))
        W = Kinv - np.outer(alpha, alpha)  # d nll = 0.5 * sum(W * dK)
        grads = []
        for j in range(self.p):
            Hp = np.exp(power[j] * self.logH[j]) * (self.H[j] > 0)
            dK = sigma2 * (-Hp * theta[j]) * R  # wrt log theta_j
            grads.append(0.5 * np.sum(W * dK))
        if est_power:
            for j in range(self.p):
                Hp = np.exp(power[j] * self.logH[j]) * (self.H[j] > 0)
                dR_dp = -theta[j] * Hp * self.logH[j] * R
                dp_dt = power[j] * (1.0 - power[j] / 2.0)  # wrt logit(p/2)
                grads.append(0.5 * np.sum(W * (sigma2 * dR_dp * dp_dt)))
        grads.append(0.5 * np.sum(W * (sigma2 * R)))  # wrt log sigma2
        grads.append(0.5 * np.sum(W * (nugget2 * np.diag(self.noise_rel))))  # wrt log nugget2
        return nll, np.array(grads), beta, L, alpha, KinvF if self.F.shape[1] else None, G if self.F.shape[1] else None


def _unpack(x: np.ndarray, p: int, est_power: bool):
    theta = np.exp(x[:p])
    if est_power:
        power = 2.0 / (1.0 + np.exp(-x[p : 2 * p]))
        rest = x[2 * p :]
    else:
        power = np.full(p, 2.0)
        rest = x[p:]
    return theta, power, float(np.exp(rest[0])), float(np.exp(rest[1]))


def fit_gp(
    data: Dataset,
    trend: list[TermSpec] | None = None,
    estimate_power: bool = True,
    n_starts: int = 10,
    warm_start: GpModel | None = None,
) -> GpModel:
    """Maximize the profile likelihood over (theta, power, sigma2, nugget2).

    Multi-start bounded quasi-Newton in transformed coordinates
    (log theta, logit(power/2), log sigma2, log nugget2); starts come
    from a fixed-seed Latin hypercube over log theta.  The reported
    optimum is the best over starts (ties broken by start order).
    """
    trend = default_trend(data.design.column_names) if trend is None else list(trend)
    work = _GpWork(data, trend)
    n, p = work.n, work.p
    if n < 10 * p:
        warnings.warn(f"GP fit with n={n} < 10*p={10 * p} points", stacklevel=2)
    if n <= work.F.shape[1]:
        raise ConfigurationError("more trend coefficients than observations")

    if work.F.shape[1]:
        resid = work.y - work.F @ np.linalg.lstsq(work.F, work.y, rcond=None)[0]
    else:
        resid = work.y
    var_y = max(float(np.var(resid)), 1e-12 * max(float(np.var(work.y)), 1e-300), 1e-300)

    def objective(x):
        theta, power, sigma2, nugget2 = _unpack(x, p, estimate_power)
        try:
            nll, grad, *_ = work.nll_and_grad(theta, power, sigma2, nugget2, estimate_power)
        except ConditioningError:
            return 1e25, np.zeros_like(x)
        if not np.isfinite(nll):
            return 1e25, np.zeros_like(x)
        return nll, grad

    if n_starts < 1 and warm_start is None:
        raise ConfigurationError("need n_starts >= 1 or a warm start")
    # correlation-rate floor 0.25 = length cap of about twice the unit
    # input range; keeps the fit off the flat-correlation ridge where
    # sigma2 is unidentified
    lhs = sample_lhs([Uniform(math.log(0.5), math.log(50.0))] * p, max(n_starts, 1), seed=20090817)
    bounds = [(math.log(0.25), math.log(1e3))] * p
    if estimate_power:
        bounds += [(-4.0, 8.0)] * p
    bounds += [
        (math.log(var_y) - 15.0, math.log(var_y) + 6.0),
        (math.log(var_y) - 15.0, math.log(var_y) + 6.0),
    ]

    starts = []
    for s_idx in range(n_starts):
        x0 = list(lhs.points[s_idx])
        if estimate_power:
            x0 += [math.log(1.8 / (2.0 - 1.8))] * p  # power start 1.8
        x0 += [math.log(0.8 * var_y), math.log(0.2 * var_y)]
        starts.append(x0)
    if warm_start is not None:
        x0 = list(np.log(np.clip(warm_start.theta, math.exp(bounds[0][0]), math.exp(bounds[0][1]))))
        if estimate_power:
            pw = np.clip(warm_start.power, 0.05, 1.999)
            x0 += list(np.log(pw / (2.0 - pw)))
        x0 += [
            math.log(max(warm_start.sigma2, math.exp(bounds[-2][0]))),
            math.log(max(warm_start.nugget2, math.exp(bounds[-1][0]))),
        ]
        starts = [np.clip(x0, [b[0] for b in bounds], [b[1] for b in bounds]).tolist()] + starts

    results = []
    objectives = np.full(len(starts), np.inf)
    for s_idx, x0 in enumerate(starts):
        res = scipy.optimize.minimize(
            objective,
            np.array(x0),
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": 60},
        )
        if np.isfinite(res.fun) and res.fun < 1e24:
            objectives[s_idx] = res.fun
            results.append((s_idx, res))
    if not results:
        raise FitError("all GP optimization starts failed")
    best_idx = int(np.argmin(objectives))
    res = dict(results)[best_idx]

    theta, power, sigma2, nugget2 = _unpack(res.x, p, estimate_power)
    return _finalize(work, theta, power, sigma2, nugget2, bool(res.success), objectives)


def build_gp(
    data: Dataset,
    trend: list[TermSpec] | None = None,
    *,
    theta,
    power,
    sigma2: float,
    nugget2: float,
) -> GpModel:
    """Assemble a GP with pinned hyperparameters (trend coefficients by GLS)."""
    trend = default_trend(data.design.column_names) if trend is None else list(trend)
    work = _GpWork(data, trend)
    theta = np.asarray(theta, dtype=float)
    power = np.asarray(power, dtype=float)
    if theta.shape != (work.p,) or power.shape != (work.p,):
        raise ConfigurationError(f"theta/power must have length {work.p}")
    if np.any(theta <= 0) or np.any(power <= 0) or np.any(power > 2):
        raise ConfigurationError("need theta > 0 and power in (0, 2]")
    if sigma2 < 0 or nugget2 < 0:
        raise ConfigurationError("need sigma2 >= 0 and nugget2 >= 0")
    return _finalize(work, theta, power, float(sigma2), float(nugget2), True, np.empty(0))


def _finalize(work, theta, power, sigma2, nugget2, converged, objectives) -> GpModel:
    R = work.corr(theta, power)
    K = sigma2 * R + nugget2 * np.diag(work.noise_rel)
    L, _ = _chol_with_jitter(K, sigma2 + nugget2)
    if work.F.shape[1]:
        KinvF = scipy.linalg.cho_solve((L, True), work.F)
        Gi = work.F.T @ KinvF
        beta = np.linalg.solve(Gi, KinvF.T @ work.y)
        r = work.y - work.F @ beta
        G = np.linalg.inv(Gi)
    else:
        KinvF = np.empty((work.n, 0))
        beta = np.empty(0)
        r = work.y
        G = np.empty((0, 0))
    alpha = scipy.linalg.cho_solve((L, True), r)
    ll = -(0.5 * r @ alpha + np.log(np.diag(L)).sum() + 0.5 * work.n * math.log(2 * math.pi))
    return GpModel(
        trend_terms=work.trend_terms,
        trend_beta=beta,
        theta=np.asarray(theta, dtype=float),
        power=np.asarray(power, dtype=float),
        sigma2=float(sigma2),
        nugget2=float(nugget2),
        column_names=work.names,
        x_lo=work.lo,
        x_range=work.rng,
        x_train=work.Z,
        y_train=work.y,
        noise_rel=work.noise_rel,
        log_likelihood=float(ll),
        converged=converged,
        start_objectives=objectives,
        _alpha=alpha,
        _L=L,
        _G=G,
        _KinvF=KinvF,
    )


def predict_gp_mean(model: GpModel, points: np.ndarray, names: list[str] | None = None) -> np.ndarray:
    return model.predict_mean(points, names)


def predict_gp_var(model: GpModel, points: np.ndarray, names: list[str] | None = None) -> np.ndarray:
    return model.predict_var(points, names)
