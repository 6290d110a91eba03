"""Generalized additive models.

A GAM mixes parametric regressors with penalized spline smooths.  The
inner loop is penalized IRLS at fixed smoothing parameters; smoothing
parameters minimize the GCV score

    n * deviance / (n - DoF)^2

with DoF the trace of the influence matrix at the converged inner fit.
The search is a per-smooth grid on log10(lambda) in [-6, 6] swept by
cyclic coordinate descent, then refined by golden section.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .design import Dataset
from .errors import ConfigurationError, DivergenceError, FitError, SingularFitError
from .glm import Family, GlmFit, TermSpec, _irls, build_model_matrix, fit_glm, gaussian
from .smooth import (
    DEFAULT_K_BIVARIATE,
    DEFAULT_K_CUBIC,
    SplineBasis,
    build_bivariate_basis,
    build_cubic_basis,
    null_space_transform,
)

__all__ = ["SmoothTerm", "GamSpec", "GamFit", "fit_gam", "gcv_score", "predict_gam"]

LOG10_GRID = np.arange(-6.0, 6.5, 0.5)


@dataclass(frozen=True)
class SmoothTerm:
    """Descriptor of one smooth: which column(s) and the basis dimension."""

    columns: tuple[str, ...]
    k: int | None = None

    def __post_init__(self):
        if len(self.columns) not in (1, 2):
            raise ConfigurationError(f"smooths take 1 or 2 columns, got {self.columns}")

    @property
    def label(self) -> str:
        return "s(" + ",".join(self.columns) + ")"


def s(*columns: str, k: int | None = None) -> SmoothTerm:
    return SmoothTerm(tuple(columns), k)


@dataclass(frozen=True)
class GamSpec:
    parametric: list[TermSpec]
    smooths: list[SmoothTerm]
    family: Family

    def __post_init__(self):
        if not self.parametric and not self.smooths:
            raise ConfigurationError("model needs at least one term")
        seen = set()
        for sm in self.smooths:
            key = tuple(sorted(sm.columns))
            if key in seen:
                raise ConfigurationError(f"duplicate smooth on columns {sm.columns}")
            seen.add(key)


@dataclass(frozen=True)
class GamFit:
    spec: GamSpec
    column_names: list[str]
    bases: list[SplineBasis]
    transforms: list[np.ndarray]  # constraint null-space map per smooth
    coefficients: np.ndarray
    lambdas: np.ndarray
    fitted_mu: np.ndarray
    edf: float
    deviance: float
    null_deviance: float
    gcv: float
    dispersion: float
    cov_unscaled: np.ndarray
    converged: bool

    @property
    def explained_deviance(self) -> float:
        if self.null_deviance == 0:
            return 0.0
        return 1.0 - self.deviance / self.null_deviance

    def design_matrix(self, points: np.ndarray, names: list[str]) -> np.ndarray:
        blocks = []
        if self.spec.parametric:
            blocks.append(build_model_matrix(self.spec.parametric, points, names))
        for basis, Z in zip(self.bases, self.transforms):
            blocks.append(basis.raw_matrix(points, names) @ Z)
        return np.hstack(blocks) if len(blocks) > 1 else blocks[0]

    def predict(self, points: np.ndarray, names: list[str] | None = None) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        X = self.design_matrix(points, names or self.column_names)
        return self.spec.family.g_inv(X @ self.coefficients)


class _Prepared:
    """Design matrix, penalty blocks and response for one GAM problem.

    Smooths flagged in `infinite` are restricted to their penalty null
    space, the exact lambda -> infinity limit.
    """

    def __init__(self, data: Dataset, spec: GamSpec, infinite=None):
        names = data.design.column_names
        pts = data.design.points
        self.spec = spec
        self.y = data.response
        self.prior_w = data.prior_weights
        self.names = names
        infinite = [False] * len(spec.smooths) if infinite is None else list(infinite)

        blocks = []
        q = 0
        if spec.parametric:
            Xp = build_model_matrix(spec.parametric, pts, names)
            blocks.append(Xp)
            q = Xp.shape[1]

        linear_cols = {
            t.column
            for t in spec.parametric
            if (t.kind == "linear") or (t.kind == "power" and t.exponent == 1)
        }

        self.bases: list[SplineBasis] = []
        self.transforms: list[np.ndarray] = []
        self.slices: list[slice] = []
        self.penalties: list[np.ndarray] = []
        offset = q
        for sm, pinned in zip(spec.smooths, infinite):
            if len(sm.columns) == 1:
                col = sm.columns[0]
                basis = build_cubic_basis(
                    data.design.column(col), sm.k or DEFAULT_K_CUBIC, column=col
                )
            else:
                xs = np.column_stack([data.design.column(c) for c in sm.columns])
                basis = build_bivariate_basis(
                    xs, sm.k or DEFAULT_K_BIVARIATE, columns=tuple(sm.columns)
                )
            B = basis.raw_matrix(pts, names)
            constraints = [basis.centering]
            # project out penalty-null-space directions duplicated by
            # explicit parametric linear terms
            for c in sm.columns:
                if c in linear_cols:
                    constraints.append((data.design.column(c) @ B)[None, :] / data.n)
            Z = null_space_transform(np.vstack(constraints))
            S = Z.T @ basis.penalty @ Z
            if pinned:  # exact infinite-smoothing limit: keep the null space only
                vals, vecs = np.linalg.eigh(S)
                keep = vals < 1e-10 * max(vals.max(), 1e-300)
                Z = Z @ vecs[:, keep]
                S = np.zeros((Z.shape[1], Z.shape[1]))
            blocks.append(B @ Z)
            self.bases.append(basis)
            self.transforms.append(Z)
            self.slices.append(slice(offset, offset + Z.shape[1]))
            self.penalties.append(S)
            offset += Z.shape[1]

        self.X = np.hstack(blocks) if len(blocks) > 1 else blocks[0]
        self.n, self.ncoef = self.X.shape
        if self.n <= self.ncoef:
            raise ConfigurationError(
                f"need more observations ({self.n}) than coefficients ({self.ncoef})"
            )
        rdiag = np.abs(np.diag(np.linalg.qr(self.X, mode="r")))
        if rdiag.min() <= self.ncoef * np.finfo(float).eps * rdiag.max():
            raise SingularFitError("GAM model matrix is rank deficient after constraints")

        # square roots of the penalty blocks for the augmented least squares rows
        self.penalty_roots = []
        for S in self.penalties:
            vals, vecs = np.linalg.eigh(S)
            vals = np.clip(vals, 0.0, None)
            self.penalty_roots.append(np.sqrt(vals)[:, None] * vecs.T)

    def total_penalty(self, lambdas: np.ndarray) -> np.ndarray:
        S = np.zeros((self.ncoef, self.ncoef))
        for lam, sl, Sj in zip(lambdas, self.slices, self.penalties):
            S[sl, sl] += lam * Sj
        return S

    def _solve(self, z: np.ndarray, w: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
        sw = np.sqrt(w)
        rows = [sw[:, None] * self.X]
        for lam, sl, L in zip(lambdas, self.slices, self.penalty_roots):
            if lam > 0 and L.size:
                block = np.zeros((L.shape[0], self.ncoef))
                block[:, sl] = math.sqrt(lam) * L
                rows.append(block)
        A = np.vstack(rows)
        b = np.concatenate([sw * z] + [np.zeros(r.shape[0]) for r in rows[1:]])
        Q, R = np.linalg.qr(A)
        rdiag = np.abs(np.diag(R))
        if rdiag.min() <= self.ncoef * np.finfo(float).eps * rdiag.max():
            raise SingularFitError("penalized system is singular")
        return scipy.linalg.solve_triangular(R, Q.T @ b)

    def irls(self, lambdas: np.ndarray, tol: float = 1e-8, max_iter: int = 50):
        """Penalized IRLS at fixed lambdas.

        Returns (beta, mu, dev, w, converged); convergence on relative
        deviance change as in the unpenalized fit.
        """
        fam = self.spec.family
        y, prior_w = self.y, self.prior_w
        mu = fam.start_mu(y)
        dev = float(np.sum(fam.deviance_terms(y, mu, prior_w)))
        beta = None
        converged = False
        for _ in range(max_iter):
            with np.errstate(over="ignore", invalid="ignore"):
                gp = fam.g_prime(mu)
                z = fam.g(mu) + (y - mu) * gp
                w = prior_w / (fam.v(mu) * gp**2)
            if not np.all(np.isfinite(z)) or not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise DivergenceError("non-finite working response in penalized IRLS")
            step = self._solve(z, w, lambdas)
            halvings = 0
            while True:
                mu_new = fam.g_inv(self.X @ step)
                dev_new = float(np.sum(fam.deviance_terms(y, mu_new, prior_w)))
                finite = np.isfinite(dev_new) and bool(np.all(np.isfinite(mu_new)))
                if finite and (beta is None or dev_new <= dev * (1.0 + 1e-9) + 1e-12):
                    break
                if beta is None:
                    raise DivergenceError("deviance non-finite at the first penalized IRLS step")
                halvings += 1
                if halvings > 50:
                    if not finite:
                        raise DivergenceError("step halving exhausted in penalized IRLS")
                    break
                step = 0.5 * (step + beta)
            beta, mu = step, mu_new
            if abs(dev_new - dev) / (abs(dev_new) + 0.1) < tol:
                dev = dev_new
                converged = True
                break
            dev = dev_new
        with np.errstate(over="ignore", invalid="ignore"):
            gp = fam.g_prime(mu)
            w = prior_w / (fam.v(mu) * gp**2)
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise DivergenceError("non-finite working weights at the penalized IRLS solution")
        return beta, mu, dev, w, converged

    def edf_and_cov(self, w: np.ndarray, lambdas: np.ndarray):
        """Trace of the influence matrix and unscaled coefficient covariance."""
        A = (self.X * w[:, None]).T @ self.X
        H = A + self.total_penalty(lambdas)
        try:
            c, low = scipy.linalg.cho_factor(H)
            Hinv = scipy.linalg.cho_solve((c, low), np.eye(self.ncoef))
        except scipy.linalg.LinAlgError as exc:
            raise SingularFitError(f"penalized information matrix not positive definite: {exc}") from exc
        edf = float(np.trace(Hinv @ A))
        cov_unscaled = Hinv @ A @ Hinv
        return edf, cov_unscaled

    def gcv(self, lambdas: np.ndarray) -> float:
        try:
            _, _, dev, w, _ = self.irls(lambdas)
        except (DivergenceError, SingularFitError):
            return np.inf
        edf, _ = self.edf_and_cov(w, lambdas)
        if self.n <= edf:
            return np.inf
        return self.n * dev / (self.n - edf) ** 2


def _golden_refine(f, lo: float, hi: float, iters: int = 16) -> tuple[float, float]:
    """Golden-section minimization of f over [lo, hi]; returns (x, f(x))."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _select_lambdas(prep: _Prepared, sweeps: int = 2) -> tuple[np.ndarray, float]:
    nsm = len(prep.penalties)
    log_lam = np.zeros(nsm)
    cache: dict[tuple, float] = {}

    def score(ll: np.ndarray) -> float:
        key = tuple(np.round(ll, 10))
        if key not in cache:
            cache[key] = prep.gcv(10.0**ll)
        return cache[key]

    best = score(log_lam)
    for _ in range(sweeps):
        for j in range(nsm):
            trial = log_lam.copy()
            vals = []
            for g in LOG10_GRID:
                trial[j] = g
                vals.append(score(trial))
            jbest = int(np.argmin(vals))
            log_lam[j] = LOG10_GRID[jbest]
            best = vals[jbest]
    for j in range(nsm):
        lo = log_lam[j] - 0.5
        hi = log_lam[j] + 0.5

        def f(g, j=j):
            trial = log_lam.copy()
            trial[j] = g
            return score(trial)

        g_opt, val = _golden_refine(f, lo, hi)
        if val < best:
            log_lam[j] = g_opt
            best = val
    if not np.isfinite(best):
        raise FitError("GCV was non-finite over the whole smoothing-parameter grid")
    return 10.0**log_lam, best


def fit_gam(data: Dataset, spec: GamSpec, lambdas=None) -> GamFit:
    """Fit by penalized IRLS; smoothing parameters minimize GCV unless
    pinned explicitly via `lambdas` (np.inf entries allowed)."""
    if not spec.smooths:
        glm_fit = fit_glm(data, spec.parametric, spec.family)
        n, p = data.n, len(glm_fit.beta)
        return GamFit(
            spec=spec,
            column_names=list(data.design.column_names),
            bases=[],
            transforms=[],
            coefficients=glm_fit.beta,
            lambdas=np.empty(0),
            fitted_mu=glm_fit.fitted_mu,
            edf=float(p),
            deviance=glm_fit.deviance,
            null_deviance=glm_fit.null_deviance,
            gcv=n * glm_fit.deviance / (n - p) ** 2,
            dispersion=glm_fit.dispersion,
            cov_unscaled=glm_fit.cov_beta / glm_fit.dispersion,
            converged=glm_fit.converged,
        )

    if lambdas is None:
        prep = _Prepared(data, spec)
        lambdas, gcv = _select_lambdas(prep)
        lam_eff = lambdas
    else:
        lambdas = np.asarray(lambdas, dtype=float)
        if lambdas.shape != (len(spec.smooths),) or np.any(lambdas < 0):
            raise ConfigurationError(
                f"expected {len(spec.smooths)} smoothing parameters >= 0, got {lambdas}"
            )
        prep = _Prepared(data, spec, infinite=~np.isfinite(lambdas))
        lam_eff = np.where(np.isfinite(lambdas), lambdas, 0.0)
        gcv = prep.gcv(lam_eff)
    beta, mu, dev, w, converged = prep.irls(lam_eff)
    edf, cov_unscaled = prep.edf_and_cov(w, lam_eff)

    ones = np.ones((prep.n, 1))
    try:
        _, _, null_dev, _, _, _ = _irls(ones, prep.y, prep.prior_w, spec.family)
    except DivergenceError:
        mu0 = np.full(prep.n, np.average(prep.y, weights=prep.prior_w))
        null_dev = float(np.sum(spec.family.deviance_terms(prep.y, mu0, prep.prior_w)))

    pearson = float(np.sum(prep.prior_w * (prep.y - mu) ** 2 / spec.family.v(mu)))
    dispersion = pearson / max(prep.n - edf, 1.0)

    return GamFit(
        spec=spec,
        column_names=list(data.design.column_names),
        bases=prep.bases,
        transforms=prep.transforms,
        coefficients=beta,
        lambdas=lambdas,
        fitted_mu=mu,
        edf=edf,
        deviance=dev,
        null_deviance=null_dev,
        gcv=gcv,
        dispersion=dispersion,
        cov_unscaled=cov_unscaled,
        converged=converged,
    )


def gcv_score(data: Dataset, spec: GamSpec, lambdas) -> float:
    """GCV at exactly these smoothing parameters (inner IRLS run to
    convergence first); +inf when n <= DoF."""
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(lambdas < 0):
        raise ConfigurationError("smoothing parameters must be >= 0")
    if lambdas.shape != (len(spec.smooths),):
        raise ConfigurationError(
            f"expected {len(spec.smooths)} smoothing parameters, got {lambdas.shape}"
        )
    prep = _Prepared(data, spec, infinite=~np.isfinite(lambdas))
    return prep.gcv(np.where(np.isfinite(lambdas), lambdas, 0.0))


def predict_gam(fit: GamFit, points: np.ndarray, names: list[str] | None = None) -> np.ndarray:
    return fit.predict(points, names)
