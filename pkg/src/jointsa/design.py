"""Input distributions, random designs and dataset file I/O.

Designs are plain n x p matrices of independent draws, one column per
input variable.  Sampling is driven by numpy's PCG64 generator so that a
given (distributions, n, seed) triple reproduces bitwise-identical
designs on any platform.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataParseError

__all__ = [
    "Uniform",
    "Design",
    "Dataset",
    "sample_monte_carlo",
    "sample_lhs",
    "load_csv",
    "write_csv",
]


@dataclass(frozen=True)
class Uniform:
    """Uniform law on [lower, upper]."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ConfigurationError(f"uniform bounds must be finite, got [{self.lower}, {self.upper}]")
        if not self.lower < self.upper:
            raise ConfigurationError(f"uniform bounds must satisfy lower < upper, got [{self.lower}, {self.upper}]")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def variance(self) -> float:
        return (self.upper - self.lower) ** 2 / 12.0


def _default_names(p: int) -> list[str]:
    return [f"x{j + 1}" for j in range(p)]


@dataclass(frozen=True)
class Design:
    """An n x p matrix of input points with named columns."""

    points: np.ndarray
    column_names: list[str]
    seed: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ConfigurationError(f"design matrix must be 2-d and non-empty, got shape {pts.shape}")
        if len(self.column_names) != pts.shape[1]:
            raise ConfigurationError(
                f"{len(self.column_names)} column names for {pts.shape[1]} columns"
            )
        if len(set(self.column_names)) != len(self.column_names):
            raise ConfigurationError("column names must be unique")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def p(self) -> int:
        return self.points.shape[1]

    def column(self, name: str) -> np.ndarray:
        from .errors import SchemaError

        try:
            j = self.column_names.index(name)
        except ValueError:
            raise SchemaError(f"no column named {name!r}; have {self.column_names}") from None
        return self.points[:, j]


@dataclass(frozen=True)
class Dataset:
    """A design plus the observed scalar response and prior weights."""

    design: Design
    response: np.ndarray
    prior_weights: np.ndarray = field(default=None)  # type: ignore[assignment]
    response_name: str = "y"

    def __post_init__(self):
        y = np.asarray(self.response, dtype=float)
        if y.ndim != 1 or y.shape[0] != self.design.n:
            raise ConfigurationError(
                f"response must be a vector of length {self.design.n}, got shape {y.shape}"
            )
        if self.prior_weights is None:
            w = np.ones(self.design.n)
        else:
            w = np.asarray(self.prior_weights, dtype=float)
        if w.shape != y.shape or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ConfigurationError("prior weights must be finite and strictly positive")
        y.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "prior_weights", w)

    @property
    def n(self) -> int:
        return self.design.n

    def with_weights(self, weights: np.ndarray) -> "Dataset":
        return Dataset(self.design, self.response, np.asarray(weights, dtype=float), self.response_name)

    def with_response(self, response: np.ndarray, name: str | None = None) -> "Dataset":
        return Dataset(self.design, response, self.prior_weights, name or self.response_name)


def sample_monte_carlo(
    dists: list[Uniform],
    n: int,
    seed: int,
    column_names: list[str] | None = None,
) -> Design:
    """Draw n independent points, one column per distribution."""
    if n < 1:
        raise ConfigurationError(f"need n >= 1 points, got {n}")
    if not dists:
        raise ConfigurationError("need at least one input distribution")
    rng = np.random.default_rng(seed)
    cols = [rng.uniform(d.lower, d.upper, size=n) for d in dists]
    return Design(np.column_stack(cols), column_names or _default_names(len(dists)), seed=seed)


def sample_lhs(
    dists: list[Uniform],
    n: int,
    seed: int,
    column_names: list[str] | None = None,
) -> Design:
    """Latin hypercube design: per column, exactly one point falls in each
    of the n equal-width strata; strata are paired across columns by an
    independent random permutation (no space-filling optimization).
    """
    if n < 1:
        raise ConfigurationError(f"need n >= 1 points, got {n}")
    if not dists:
        raise ConfigurationError("need at least one input distribution")
    rng = np.random.default_rng(seed)
    cols = []
    for d in dists:
        strata = rng.permutation(n)
        u = rng.uniform(size=n)
        cols.append(d.lower + (strata + u) * (d.upper - d.lower) / n)
    return Design(np.column_stack(cols), column_names or _default_names(len(dists)), seed=seed)


# CSV layout: UTF-8, comma separated, one header row, '.' decimal point,
# 17 significant digits on write (lossless float64 round trip).


def write_csv(dataset: Dataset, path: str | os.PathLike) -> None:
    """Write a dataset atomically (temp file + rename)."""
    header = list(dataset.design.column_names) + [dataset.response_name]
    rows = np.column_stack([dataset.design.points, dataset.response])
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".csv.tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([format(v, ".17g") for v in row])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_csv(path: str | os.PathLike, response: str = "y") -> Dataset:
    """Load a dataset; every column but `response` is treated as an input.

    Raises DataParseError naming the offending row and column for ragged
    rows and for cells that are not finite numbers.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if response not in header:
            raise DataParseError(f"{path}: no response column named {response!r} in header {header}")
        if len(set(header)) != len(header):
            raise DataParseError(f"{path}: duplicate column names in header {header}")
        ncol = len(header)
        values = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != ncol:
                raise DataParseError(f"{path}: row {lineno} has {len(row)} fields, expected {ncol}")
            parsed = []
            for name, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataParseError(
                        f"{path}: row {lineno}, column {name!r}: not a number: {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataParseError(f"{path}: row {lineno}, column {name!r}: non-finite value {cell!r}")
                parsed.append(v)
            values.append(parsed)
    if not values:
        raise DataParseError(f"{path}: no data rows")
    data = np.asarray(values, dtype=float)
    j_resp = header.index(response)
    j_inputs = [j for j in range(ncol) if j != j_resp]
    if not j_inputs:
        raise DataParseError(f"{path}: need at least one input column besides {response!r}")
    design = Design(data[:, j_inputs], [header[j] for j in j_inputs])
    return Dataset(design, data[:, j_resp], response_name=response)
