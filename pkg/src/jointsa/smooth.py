"""Penalized regression spline bases.

Two constructions:

* univariate cubic B-splines with knots at quantiles of the distinct
  learning values and the exact integral of squared second derivatives
  as wiggliness penalty;
* a low-rank isotropic thin-plate-type basis for pairs of inputs: radial
  functions r^2 log r on standardized inputs, reduced by keeping the k
  leading eigenvectors of the radial matrix and absorbing the polynomial
  orthogonality constraint.

Both carry a sum-to-zero centering constraint over the learning data so
that smooths are identifiable next to a separate intercept.  The raw
penalty S lives in the unconstrained coefficient space; its null space
holds constants and linear functions (wiggliness of a line is zero).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import BSpline

from .errors import ConfigurationError, SchemaError

__all__ = [
    "SplineBasis",
    "build_cubic_basis",
    "build_bivariate_basis",
    "evaluate_basis",
    "null_space_transform",
]

DEFAULT_K_CUBIC = 10
DEFAULT_K_BIVARIATE = 30
_MAX_RADIAL_KNOTS = 400


def null_space_transform(constraints: np.ndarray) -> np.ndarray:
    """Orthonormal basis Z of the null space of the constraint rows."""
    C = np.atleast_2d(np.asarray(constraints, dtype=float))
    k = C.shape[1]
    q, _ = np.linalg.qr(C.T, mode="complete")
    return q[:, C.shape[0]:].reshape(k, k - C.shape[0])


@dataclass(frozen=True)
class SplineBasis:
    """A smooth-term basis: raw design block builder plus penalty.

    `penalty` is the raw k x k wiggliness matrix; `centering` is the row
    vector of raw-basis column means over the learning data, whose null
    space (`transform`) gives the centered, identifiable parameterization
    actually used in fits.
    """

    kind: str  # cubic | thinplate
    columns: tuple[str, ...]
    k: int
    knots: np.ndarray
    penalty: np.ndarray
    centering: np.ndarray
    transform: np.ndarray = field(repr=False)
    # thin-plate extras (empty arrays for the cubic kind)
    radial_map: np.ndarray = field(default_factory=lambda: np.empty((0, 0)), repr=False)
    standardize_lo: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    standardize_range: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    @property
    def dim(self) -> int:
        """Number of coefficients after centering."""
        return self.transform.shape[1]

    @property
    def label(self) -> str:
        return "s(" + ",".join(self.columns) + ")"

    def raw_matrix(self, points: np.ndarray, names: list[str]) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cols = []
        for c in self.columns:
            try:
                j = names.index(c)
            except ValueError:
                raise SchemaError(f"smooth {self.label} references unknown column {c!r}") from None
            cols.append(points[:, j])
        if self.kind == "cubic":
            return _cubic_design(self.knots, self.k, cols[0])
        return _thinplate_design(self, np.column_stack(cols))

    def matrix(self, points: np.ndarray, names: list[str]) -> np.ndarray:
        return self.raw_matrix(points, names) @ self.transform

    @property
    def constrained_penalty(self) -> np.ndarray:
        return self.transform.T @ self.penalty @ self.transform


# ---------------------------------------------------------------------------
# univariate cubic B-splines


def _cubic_knot_vector(x: np.ndarray, k: int) -> np.ndarray:
    xs = np.unique(x)
    if k < 4:
        raise ConfigurationError(f"cubic basis needs k >= 4, got {k}")
    if xs.size < k:
        raise ConfigurationError(
            f"only {xs.size} distinct values for basis dimension k={k}; reduce k"
        )
    a, b = xs[0], xs[-1]
    n_interior = k - 4
    if n_interior > 0:
        qs = np.linspace(0, 1, n_interior + 2)[1:-1]
        interior = np.quantile(xs, qs)
    else:
        interior = np.empty(0)
    return np.concatenate([[a] * 4, interior, [b] * 4])


def _cubic_design(t: np.ndarray, k: int, x: np.ndarray) -> np.ndarray:
    """Basis matrix with linear extension beyond the boundary knots."""
    spl = BSpline(t, np.eye(k), 3, extrapolate=False)
    a, b = t[3], t[-4]
    xc = np.clip(x, a, b)
    B = spl(xc)
    lo, hi = x < a, x > b
    if np.any(lo) or np.any(hi):
        d1 = spl.derivative(1)
        if np.any(lo):
            B[lo] = spl(a)[None, :] + np.outer(x[lo] - a, d1(a))
        if np.any(hi):
            B[hi] = spl(b)[None, :] + np.outer(x[hi] - b, d1(b))
    return B


def _cubic_penalty(t: np.ndarray, k: int) -> np.ndarray:
    """Exact integral of products of basis second derivatives.

    Second derivatives of cubic B-splines are piecewise linear, so a
    3-point Gauss rule per inter-knot interval integrates the quadratic
    products exactly.
    """
    d2 = BSpline(t, np.eye(k), 3).derivative(2)
    gx, gw = leggauss(3)
    S = np.zeros((k, k))
    breaks = np.unique(t)
    for a, b in zip(breaks[:-1], breaks[1:]):
        half = 0.5 * (b - a)
        pts = 0.5 * (a + b) + half * gx
        D = d2(pts)
        S += half * D.T @ (gw[:, None] * D)
    return 0.5 * (S + S.T)


def build_cubic_basis(x: np.ndarray, k: int = DEFAULT_K_CUBIC, column: str = "x") -> SplineBasis:
    """Cubic spline basis for one input, knots at quantiles of distinct values."""
    x = np.asarray(x, dtype=float).ravel()
    t = _cubic_knot_vector(x, k)
    S = _cubic_penalty(t, k)
    B = _cubic_design(t, k, x)
    centering = B.mean(axis=0, keepdims=True)
    return SplineBasis(
        kind="cubic",
        columns=(column,),
        k=k,
        knots=t,
        penalty=S,
        centering=centering,
        transform=null_space_transform(centering),
    )


# ---------------------------------------------------------------------------
# bivariate thin-plate-type basis


def _tp_eta(r: np.ndarray) -> np.ndarray:
    """Radial function r^2 log(r) / (8 pi) for the second-order 2-d spline."""
    out = np.zeros_like(r)
    nz = r > 0
    out[nz] = r[nz] ** 2 * np.log(r[nz]) / (8.0 * np.pi)
    return out


def _tp_radial(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = (a**2).sum(axis=1)[:, None] + (b**2).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    return _tp_eta(np.sqrt(np.maximum(d2, 0.0)))


def _thinplate_design(basis: SplineBasis, X: np.ndarray) -> np.ndarray:
    Z = (X - basis.standardize_lo) / basis.standardize_range
    wiggly = np.empty((len(Z), basis.radial_map.shape[1]))
    for start in range(0, len(Z), 8192):  # bound the n x knots distance block
        block = slice(start, start + 8192)
        wiggly[block] = _tp_radial(Z[block], basis.knots) @ basis.radial_map
    return np.column_stack([np.ones(len(Z)), Z[:, 0], Z[:, 1], wiggly])


def build_bivariate_basis(
    X: np.ndarray,
    k: int = DEFAULT_K_BIVARIATE,
    columns: tuple[str, str] = ("x1", "x2"),
) -> SplineBasis:
    """Low-rank isotropic thin-plate-type basis on two inputs.

    Inputs are scaled to unit range; knots are the distinct scaled rows
    (capped by an even subsample).  The k leading eigenvectors of the
    radial matrix span the reduced basis; the polynomial space {1, x1, x2}
    is kept unpenalized and the radial coefficients are constrained
    orthogonal to it, which makes the reduced penalty positive
    semi-definite.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != 2:
        raise ConfigurationError(f"bivariate basis needs exactly 2 columns, got {X.shape[1]}")
    if k < 6:
        raise ConfigurationError(f"bivariate basis needs k >= 6, got {k}")
    lo = X.min(axis=0)
    rng = X.max(axis=0) - lo
    if np.any(rng <= 0):
        raise ConfigurationError("bivariate basis needs spread in both columns")
    Z = (X - lo) / rng

    knots = np.unique(Z, axis=0)
    if knots.shape[0] > _MAX_RADIAL_KNOTS:
        idx = np.linspace(0, knots.shape[0] - 1, _MAX_RADIAL_KNOTS).round().astype(int)
        knots = knots[np.unique(idx)]
    m = knots.shape[0]
    if m < k:
        raise ConfigurationError(f"only {m} distinct points for basis dimension k={k}; reduce k")

    E = _tp_radial(knots, knots)
    T = np.column_stack([np.ones(m), knots])
    vals, vecs = np.linalg.eigh(E)
    order = np.argsort(np.abs(vals))[::-1][:k]
    Uk = vecs[:, order]
    Dk = vals[order]
    # radial coefficients orthogonal to the polynomials: null space of T' Uk
    Zc = null_space_transform(T.T @ Uk)  # k x (k-3)
    S_w = Zc.T @ (Dk[:, None] * Zc)
    S_w = 0.5 * (S_w + S_w.T)

    kk = k  # total raw dimension: 3 polynomial + (k-3) wiggly
    S = np.zeros((kk, kk))
    S[3:, 3:] = S_w

    basis = SplineBasis(
        kind="thinplate",
        columns=tuple(columns),
        k=kk,
        knots=knots,
        penalty=S,
        centering=np.zeros((1, kk)),
        transform=np.eye(kk),
        radial_map=Uk @ Zc,
        standardize_lo=lo,
        standardize_range=rng,
    )
    B = basis.raw_matrix(X, list(columns))
    centering = B.mean(axis=0, keepdims=True)
    return SplineBasis(
        kind="thinplate",
        columns=tuple(columns),
        k=kk,
        knots=knots,
        penalty=S,
        centering=centering,
        transform=null_space_transform(centering),
        radial_map=Uk @ Zc,
        standardize_lo=lo,
        standardize_range=rng,
    )


def evaluate_basis(basis: SplineBasis, points: np.ndarray, names: list[str] | None = None) -> np.ndarray:
    """Centered design-matrix block of the smooth at the given points."""
    return basis.matrix(points, list(names) if names else list(basis.columns))
