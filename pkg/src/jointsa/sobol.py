"""Variance-based sensitivity indices by pick-freeze Monte Carlo.

First-order and closed second-order indices target the mean component
of a joint model (or any deterministic function); the total index of
the unobserved noise variable is the mean of the dispersion component
over the input law, divided by the total output variance.  The total
variance is either reconstructed from the joint model,

    Var(Y) = Var_X[Y_m(X)] + E_X[Y_d(X)],

or supplied from data.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .design import Uniform, sample_monte_carlo
from .errors import ConfigurationError, JointsaError

__all__ = [
    "SobolEstimate",
    "SaProblem",
    "first_order_index",
    "second_order_index",
    "total_index_uncontrollable",
    "dispersion_sensitivity",
    "total_index_from_q2",
    "replicate_indices",
]


@dataclass(frozen=True)
class SobolEstimate:
    """One index estimate: label, value, spread over replicates, method tag."""

    label: str
    value: float
    sd: float | None = None
    method: str = "MC"  # MC | Eq | Q2 | S_Yd
    replicates: int = 1

    def __str__(self):
        sd = f" (sd={self.sd:.2g})" if self.sd is not None else ""
        return f"{self.label} = {self.value:.4f}{sd} [{self.method}]"


@dataclass(frozen=True)
class SaProblem:
    """Sensitivity-analysis target: mean function, optional dispersion
    function, input laws, and how to obtain the total variance."""

    mean_fn: Callable[[np.ndarray], np.ndarray]
    dists: list[Uniform]
    disp_fn: Callable[[np.ndarray], np.ndarray] | None = None
    total_variance_mode: str = "reconstructed"  # reconstructed | data
    data_variance: float | None = None

    def __post_init__(self):
        if self.total_variance_mode not in ("reconstructed", "data"):
            raise ConfigurationError(
                f"unknown total_variance_mode {self.total_variance_mode!r}"
            )
        if self.total_variance_mode == "data" and self.data_variance is None:
            raise ConfigurationError("data mode needs data_variance")

    @property
    def p(self) -> int:
        return len(self.dists)


def _draw_pair(problem: SaProblem, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    both = sample_monte_carlo(problem.dists, 2 * n, seed).points
    return both[:n], both[n:]


def _total_variance(problem: SaProblem, mean_vals: np.ndarray, disp_vals: np.ndarray | None) -> float:
    if problem.total_variance_mode == "data":
        var = float(problem.data_variance)
    else:
        var = float(np.var(mean_vals, ddof=1))
        if disp_vals is not None:
            var += float(np.mean(disp_vals))
    if var <= 0:
        raise JointsaError("total variance is not positive; indices undefined")
    return var


def first_order_index(problem: SaProblem, i: int, n: int = 10_000, seed: int = 0) -> SobolEstimate:
    """Pick-freeze estimate of Var[E(Y|X_i)] / Var(Y) from two independent
    designs sharing column i."""
    _check_index(problem, i)
    A, B = _draw_pair(problem, n, seed)
    fA = problem.mean_fn(A)
    fB = problem.mean_fn(B)
    C = B.copy()
    C[:, i] = A[:, i]
    fC = problem.mean_fn(C)
    f0 = 0.5 * (fA.mean() + fB.mean())
    vi = float(np.mean(fA * fC) - f0**2)
    pooled = np.concatenate([fA, fB])
    disp = _disp_pooled(problem, A, B)
    return SobolEstimate(f"S{i + 1}", vi / _total_variance(problem, pooled, disp))


def second_order_index(
    problem: SaProblem, i: int, j: int, n: int = 10_000, seed: int = 0
) -> SobolEstimate:
    """Closed pick-freeze second-order index: freeze columns i and j
    together, subtract the first-order parts computed on the same pair."""
    _check_index(problem, i)
    _check_index(problem, j)
    if i == j:
        raise ConfigurationError("second-order index needs two distinct inputs")
    A, B = _draw_pair(problem, n, seed)
    fA = problem.mean_fn(A)
    fB = problem.mean_fn(B)
    f0 = 0.5 * (fA.mean() + fB.mean())

    def freeze(cols):
        C = B.copy()
        C[:, cols] = A[:, cols]
        return float(np.mean(fA * problem.mean_fn(C)) - f0**2)

    v_closed = freeze([i, j])
    v_i = freeze([i])
    v_j = freeze([j])
    pooled = np.concatenate([fA, fB])
    disp = _disp_pooled(problem, A, B)
    var = _total_variance(problem, pooled, disp)
    return SobolEstimate(f"S{i + 1}{j + 1}", (v_closed - v_i - v_j) / var)


def total_index_uncontrollable(problem: SaProblem, n: int = 10_000, seed: int = 0) -> SobolEstimate:
    """Total index of the noise variable: E_X[Y_d] / Var(Y) by plain
    Monte Carlo over the input law."""
    if problem.disp_fn is None:
        raise ConfigurationError("problem has no dispersion function")
    A, B = _draw_pair(problem, n, seed)
    dvals = problem.disp_fn(A)
    if np.any(dvals < 0):
        raise JointsaError("dispersion function returned negative values")
    if problem.total_variance_mode == "data":
        var = _total_variance(problem, np.empty(0), None)
    else:
        pooled_mean = np.concatenate([problem.mean_fn(A), problem.mean_fn(B)])
        var = float(np.var(pooled_mean, ddof=1)) + float(np.mean(dvals))
        if var <= 0:
            raise JointsaError("total variance is not positive; indices undefined")
    return SobolEstimate("ST_eps", float(np.mean(dvals)) / var)


def dispersion_sensitivity(problem: SaProblem, i: int, n: int = 10_000, seed: int = 0) -> SobolEstimate:
    """First-order index of input i for the dispersion component itself
    (which input drives the noise amplitude)."""
    if problem.disp_fn is None:
        raise ConfigurationError("problem has no dispersion function")
    _check_index(problem, i)
    A, B = _draw_pair(problem, n, seed)
    fA = problem.disp_fn(A)
    fB = problem.disp_fn(B)
    C = B.copy()
    C[:, i] = A[:, i]
    fC = problem.disp_fn(C)
    f0 = 0.5 * (fA.mean() + fB.mean())
    vi = float(np.mean(fA * fC) - f0**2)
    var = float(np.var(np.concatenate([fA, fB]), ddof=1))
    if var <= 0:
        raise JointsaError("dispersion component has zero variance; index undefined")
    return SobolEstimate(f"S_Yd{i + 1}", vi / var, method="S_Yd")


def total_index_from_q2(q2_value: float) -> SobolEstimate:
    """1 - Q2, read as the noise total index under the assumption that
    the metamodel explains everything the inputs can."""
    if q2_value > 1.0:
        raise ConfigurationError(f"Q2 cannot exceed 1, got {q2_value}")
    return SobolEstimate("ST_eps", 1.0 - q2_value, method="Q2")


def _disp_pooled(problem: SaProblem, A, B) -> np.ndarray | None:
    if problem.disp_fn is None or problem.total_variance_mode == "data":
        return None
    return np.concatenate([problem.disp_fn(A), problem.disp_fn(B)])


def _check_index(problem: SaProblem, i: int) -> None:
    if not 0 <= i < problem.p:
        raise ConfigurationError(f"input index {i} out of range for {problem.p} inputs")


_LABEL = re.compile(r"^S(?:T_eps|_Yd(\d+)|(\d+),(\d+)|(\d)(\d)|(\d+))$")


def estimate_by_label(problem: SaProblem, label: str, n: int, seed: int) -> SobolEstimate:
    """Dispatch on labels "S1", "S12", "ST_eps", "S_Yd1" (inputs 1-based).

    Two adjacent digits mean a second-order index; with ten or more
    inputs use the explicit form "S1,12".
    """
    m = _LABEL.match(label)
    if not m:
        raise ConfigurationError(f"cannot parse index label {label!r}")
    yd, ic, jc, i2, j2, i1 = m.groups()
    if label == "ST_eps":
        return total_index_uncontrollable(problem, n, seed)
    if yd is not None:
        return dispersion_sensitivity(problem, int(yd) - 1, n, seed)
    if ic is not None:
        return second_order_index(problem, int(ic) - 1, int(jc) - 1, n, seed)
    if i2 is not None:
        return second_order_index(problem, int(i2) - 1, int(j2) - 1, n, seed)
    return first_order_index(problem, int(i1) - 1, n, seed)


def replicate_indices(
    problem: SaProblem,
    labels: Sequence[str],
    n: int = 10_000,
    reps: int = 100,
    seed: int = 0,
) -> list[SobolEstimate]:
    """Repeat the Monte Carlo estimation; report mean and the sample
    standard deviation over replicates.  Per-replicate seeds derive
    deterministically from `seed`."""
    if reps < 1:
        raise ConfigurationError("need reps >= 1")
    rep_seeds = np.random.SeedSequence(seed).generate_state(reps)
    out = []
    for label in labels:
        vals = np.array(
            [estimate_by_label(problem, label, n, int(s)).value for s in rep_seeds]
        )
        m = _LABEL.match(label)
        method = "S_Yd" if m and m.group(1) else "MC"
        out.append(
            SobolEstimate(
                label,
                float(vals.mean()),
                float(vals.std(ddof=1)) if reps > 1 else None,
                method=method,
                replicates=reps,
            )
        )
    return out
