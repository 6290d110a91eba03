"""The Ishigami stochastic benchmark.

The simulator is sin(x1) + a sin(x2)^2 + b x3^4 sin(x1) with a=7,
b=0.1 and all three inputs uniform on [-pi, pi].  The benchmark treats
x3 as the unobserved noise variable: learning datasets expose only
(x1, x2, y), so every metamodel sees a heteroscedastic response whose
conditional mean and variance have closed forms,

    mean(x1, x2) = (1 + b pi^4 / 5) sin(x1) + a sin(x2)^2
    disp(x1)     = b^2 pi^8 (1/9 - 1/25) sin(x1)^2

from which all variance-based indices follow analytically.  The run_*
functions reproduce the published comparison: metamodel quality, index
tables and the learning-size convergence study.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .design import Dataset, Design, Uniform, sample_monte_carlo
from .gam import GamSpec, SmoothTerm, fit_gam
from .glm import fit_glm, gaussian, intercept, linear, power, quasi_gamma_log
from .gp import fit_gp
from .joint import JointModel, JointSpec, coverage_curve, fit_joint, q2
from .report import ReportRow
from .sobol import SaProblem, SobolEstimate, replicate_indices, total_index_from_q2

__all__ = [
    "IshigamiBenchmark",
    "ishigami",
    "mean_component",
    "dispersion_component",
    "exact_indices",
    "sample_learning",
    "run_table1",
    "run_table2",
    "run_table3",
    "convergence_study",
    "run_diagnostics",
]

PI = math.pi
INPUT_LAW = Uniform(-PI, PI)


def ishigami(x1, x2, x3, a: float = 7.0, b: float = 0.1):
    """Simulator value(s); accepts scalars or arrays."""
    x1, x2, x3 = np.asarray(x1, dtype=float), np.asarray(x2, dtype=float), np.asarray(x3, dtype=float)
    return np.sin(x1) + a * np.sin(x2) ** 2 + b * x3**4 * np.sin(x1)


def mean_component(x1, x2, a: float = 7.0, b: float = 0.1):
    """Conditional mean over x3 ~ U[-pi, pi]."""
    x1, x2 = np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)
    return (1.0 + b * PI**4 / 5.0) * np.sin(x1) + a * np.sin(x2) ** 2


def dispersion_component(x1, b: float = 0.1):
    """Conditional variance over x3 ~ U[-pi, pi]; depends on x1 only."""
    x1 = np.asarray(x1, dtype=float)
    return b**2 * PI**8 * (1.0 / 9.0 - 1.0 / 25.0) * np.sin(x1) ** 2


@dataclass(frozen=True)
class IshigamiBenchmark:
    """Constants of the benchmark and its closed-form decomposition."""

    a: float = 7.0
    b: float = 0.1

    def value(self, x1, x2, x3):
        return ishigami(x1, x2, x3, self.a, self.b)

    def mean(self, x1, x2):
        return mean_component(x1, x2, self.a, self.b)

    def dispersion(self, x1):
        return dispersion_component(x1, self.b)

    @property
    def v1(self) -> float:
        return 0.5 * (1.0 + self.b * PI**4 / 5.0) ** 2

    @property
    def v2(self) -> float:
        return self.a**2 / 8.0

    @property
    def v13(self) -> float:
        """Mean of the dispersion component: the whole noise contribution."""
        return 0.5 * self.b**2 * PI**8 * (1.0 / 9.0 - 1.0 / 25.0)

    @property
    def total_variance(self) -> float:
        return self.v1 + self.v2 + self.v13


def exact_indices(a: float = 7.0, b: float = 0.1) -> list[SobolEstimate]:
    """Analytic indices; every interaction not involving the noise
    variable vanishes, so S1 + S2 + ST3 = 1 exactly."""
    bench = IshigamiBenchmark(a, b)
    v = bench.total_variance
    s1 = bench.v1 / v
    s2 = bench.v2 / v
    s13 = bench.v13 / v
    return [
        SobolEstimate("S1", s1, method="Eq"),
        SobolEstimate("S2", s2, method="Eq"),
        SobolEstimate("S3", 0.0, method="Eq"),
        SobolEstimate("S12", 0.0, method="Eq"),
        SobolEstimate("S13", s13, method="Eq"),
        SobolEstimate("S23", 0.0, method="Eq"),
        SobolEstimate("S123", 0.0, method="Eq"),
        SobolEstimate("ST1", s1 + s13, method="Eq"),
        SobolEstimate("ST2", s2, method="Eq"),
        SobolEstimate("ST3", s13, method="Eq"),
    ]


def sample_learning(n: int, seed: int, a: float = 7.0, b: float = 0.1) -> Dataset:
    """Monte Carlo learning sample; x3 drives the response but is
    withheld from the returned dataset."""
    full = sample_monte_carlo([INPUT_LAW] * 3, n, seed, column_names=["x1", "x2", "x3"])
    y = ishigami(full.points[:, 0], full.points[:, 1], full.points[:, 2], a, b)
    return Dataset(Design(full.points[:, :2], ["x1", "x2"]), y)


def exact_problem(mode: str = "reconstructed") -> SaProblem:
    """Sensitivity problem built from the closed-form joint model."""
    bench = IshigamiBenchmark()
    return SaProblem(
        mean_fn=lambda X: bench.mean(X[:, 0], X[:, 1]),
        disp_fn=lambda X: bench.dispersion(X[:, 0]),
        dists=[INPUT_LAW, INPUT_LAW],
        total_variance_mode=mode,
        data_variance=bench.total_variance if mode == "data" else None,
    )


def joint_problem(jm: JointModel, mode: str = "reconstructed", data_variance=None) -> SaProblem:
    return SaProblem(
        mean_fn=lambda X: jm.predict_mean(X, ["x1", "x2"]),
        disp_fn=lambda X: jm.predict_dispersion(X, ["x1", "x2"]),
        dists=[INPUT_LAW, INPUT_LAW],
        total_variance_mode=mode,
        data_variance=data_variance,
    )


# term sets of the published comparison
GLM_MEAN_TERMS = [intercept(), linear("x1"), power("x2", 2), power("x1", 3), power("x2", 4)]
GAM_MEAN_PARAMETRIC = [intercept(), linear("x1")]
GAM_MEAN_SMOOTHS = [SmoothTerm(("x1",)), SmoothTerm(("x2",))]
GAM_DISP_SMOOTHS = [SmoothTerm(("x1",))]


def select_glm_dispersion_terms(disp_data: Dataset, candidates=None, level: float = 0.05):
    """Screen dispersion regressors by analysis of deviance against the
    intercept-only model.

    Candidates default to the mean submodel's regressors.  A candidate
    is kept when its deviance drop, scaled by the quasi dispersion
    estimate, exceeds the chi-square(1) critical value at a Bonferroni-
    corrected level.  Returns (kept terms, deviance drops).
    """
    from scipy.stats import chi2

    candidates = [t for t in (candidates or GLM_MEAN_TERMS) if t.kind != "intercept"]
    crit = chi2.ppf(1.0 - level / max(len(candidates), 1), 1)
    base = fit_glm(disp_data, [intercept()], quasi_gamma_log())
    kept = []
    drops = {}
    for term in candidates:
        cand = fit_glm(disp_data, [intercept(), term], quasi_gamma_log())
        drop = (base.deviance - cand.deviance) / max(cand.dispersion, 1e-300)
        drops[term.label] = drop
        if drop > crit:
            kept.append(term)
    return kept, drops


def spec_joint_glm() -> JointSpec:
    return JointSpec("glm", mean_terms=GLM_MEAN_TERMS)


def spec_joint_gam() -> JointSpec:
    return JointSpec(
        "gam",
        mean_terms=GAM_MEAN_PARAMETRIC,
        mean_smooths=GAM_MEAN_SMOOTHS,
        disp_smooths=GAM_DISP_SMOOTHS,
    )


def spec_joint_gp(n_starts: int = 10) -> JointSpec:
    return JointSpec("gp", gp_n_starts=n_starts)


def _seed_for(seed: int, *branch: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=tuple(branch)).generate_state(1)[0])


def run_table1(seed: int = 0, n_learn: int = 1000, n_test: int = 10_000, gp_starts: int = 10):
    """Fit the six metamodels and report explained deviance and Q2."""
    learn = sample_learning(n_learn, _seed_for(seed, 1))
    test = sample_learning(n_test, _seed_for(seed, 2))
    rows = [ReportRow("table1/meta/n_learn", n_learn, seed=seed), ReportRow("table1/meta/n_test", n_test, seed=seed)]

    glm_fit = fit_glm(learn, GLM_MEAN_TERMS, gaussian())
    rows.append(ReportRow("table1/simple_glm/d_expl", glm_fit.explained_deviance, seed=seed))
    rows.append(ReportRow("table1/simple_glm/q2", q2(glm_fit, test), seed=seed))
    for t, b_, tv in zip(glm_fit.terms, glm_fit.beta, glm_fit.t_values):
        rows.append(ReportRow(f"table1/simple_glm/coef/{t.label}", float(b_), sd=None, method=f"t={tv:.1f}"))

    jglm = fit_joint(learn, spec_joint_glm())
    rows.append(ReportRow("table1/joint_glm/mean_d_expl", jglm.mean_model.explained_deviance, seed=seed))
    rows.append(ReportRow("table1/joint_glm/q2", q2(jglm, test), seed=seed))
    d = gaussian().deviance_terms(learn.response, glm_fit.fitted_mu, learn.prior_weights)
    disp_data = Dataset(learn.design, np.maximum(d, 1e-12 * d.mean()), response_name="dispersion")
    kept, drops = select_glm_dispersion_terms(disp_data)
    rows.append(ReportRow("table1/joint_glm/disp_terms", "+".join(t.label for t in kept) or "intercept_only"))
    for label, drop in drops.items():
        rows.append(ReportRow(f"table1/joint_glm/disp_deviance_drop/{label}", float(drop)))
    rows.append(
        ReportRow("table1/joint_glm/disp_log_level", float(jglm.disp_model.beta[0]), seed=seed)
    )

    sgam = fit_gam(learn, GamSpec(GAM_MEAN_PARAMETRIC, GAM_MEAN_SMOOTHS, gaussian()))
    rows.append(ReportRow("table1/simple_gam/d_expl", sgam.explained_deviance, seed=seed))
    rows.append(ReportRow("table1/simple_gam/q2", q2(sgam, test), seed=seed))

    jgam = fit_joint(learn, spec_joint_gam())
    rows.append(ReportRow("table1/joint_gam/mean_d_expl", jgam.mean_model.explained_deviance, seed=seed))
    rows.append(ReportRow("table1/joint_gam/q2", q2(jgam, test), seed=seed))
    rows.append(ReportRow("table1/joint_gam/outer_iterations", jgam.outer_iterations, seed=seed))

    sgp = fit_gp(learn, n_starts=gp_starts)
    rows.append(ReportRow("table1/simple_gp/q2", q2(sgp, test), seed=seed))
    rows.append(
        ReportRow(
            "table1/simple_gp/nugget_variance_share",
            sgp.nugget2 / float(np.var(learn.response)),
            method="nugget2/var(y)",
            seed=seed,
        )
    )

    jgp = fit_joint(learn, spec_joint_gp(gp_starts))
    rows.append(ReportRow("table1/joint_gp/q2", q2(jgp, test), seed=seed))

    models = {
        "simple_glm": glm_fit,
        "joint_glm": jglm,
        "simple_gam": sgam,
        "joint_gam": jgam,
        "simple_gp": sgp,
        "joint_gp": jgp,
        "learn": learn,
        "test": test,
    }
    return rows, models


def _index_rows(prefix: str, estimates: list[SobolEstimate], seed: int) -> list[ReportRow]:
    return [
        ReportRow(f"{prefix}/{e.label}", e.value, sd=e.sd, method=e.method, seed=seed)
        for e in estimates
    ]


def run_table2(
    seed: int = 0,
    n_learn: int = 1000,
    n_mc: int = 10_000,
    reps: int = 100,
    gp_starts: int = 10,
    engines: tuple[str, ...] = ("glm", "gam", "gp"),
):
    """Indices from the three joint models, plus the analytic values."""
    learn = sample_learning(n_learn, _seed_for(seed, 1))
    rows = _index_rows("table2/exact", exact_indices(), seed)
    specs = {"glm": spec_joint_glm(), "gam": spec_joint_gam(), "gp": spec_joint_gp(gp_starts)}
    models = {}
    for engine in engines:
        jm = fit_joint(learn, specs[engine])
        models[engine] = jm
        problem = joint_problem(jm)
        labels = ["S1", "S2", "ST_eps"]
        mc = replicate_indices(problem, labels, n=n_mc, reps=reps, seed=_seed_for(seed, 3))
        renamed = [
            SobolEstimate("ST3" if e.label == "ST_eps" else e.label, e.value, e.sd, e.method, e.replicates)
            for e in mc
        ]
        rows += _index_rows(f"table2/joint_{engine}", renamed, seed)
        if engine == "gp":
            s12 = replicate_indices(problem, ["S12"], n=n_mc, reps=reps, seed=_seed_for(seed, 4))
            rows += _index_rows("table2/joint_gp", s12, seed)
        else:
            rows.append(ReportRow(f"table2/joint_{engine}/S12", 0.0, method="Eq", seed=seed))
        st3 = next(e.value for e in renamed if e.label == "ST3")
        rows += _deduction_rows(f"table2/joint_{engine}", engine, st3, renamed, seed)
    return rows, models


def _deduction_rows(prefix, engine, st3, mc, seed) -> list[ReportRow]:
    """Interval bookkeeping: what the submodel structure lets one deduce.

    The dispersion component of the joint GAM/Gp depends on x1 only, so
    every interaction with the noise variable except x1's is zero; x1's
    own share cannot be separated and is only bounded by ST3.
    """
    s1 = next(e.value for e in mc if e.label == "S1")
    s2 = next(e.value for e in mc if e.label == "S2")
    rows = []
    if engine == "glm":
        # constant dispersion: the model structure wrongly assigns the
        # whole noise effect to the main effect of the noise variable
        rows.append(ReportRow(f"{prefix}/S13", 0.0, method="Eq", seed=seed))
        rows.append(ReportRow(f"{prefix}/S23", 0.0, method="Eq", seed=seed))
        rows.append(ReportRow(f"{prefix}/S123", 0.0, method="Eq", seed=seed))
        rows.append(ReportRow(f"{prefix}/S3", st3, method="Eq", seed=seed))
        rows.append(ReportRow(f"{prefix}/ST1", s1, method="Eq", seed=seed))
        rows.append(ReportRow(f"{prefix}/ST2", s2, method="Eq", seed=seed))
    else:
        method = "Eq" if engine == "gam" else "S_Yd"
        rows.append(ReportRow(f"{prefix}/S13", f"]0,{st3:.3f}]", method=method, seed=seed))
        rows.append(ReportRow(f"{prefix}/S23", 0.0, method=method, seed=seed))
        rows.append(ReportRow(f"{prefix}/S123", 0.0, method=method, seed=seed))
        rows.append(ReportRow(f"{prefix}/S3", f"[0,{st3:.3f}]", method=method, seed=seed))
        rows.append(ReportRow(f"{prefix}/ST1", f"]{s1:.3f},{s1 + st3:.3f}]", method=method, seed=seed))
        rows.append(ReportRow(f"{prefix}/ST2", s2, method=method, seed=seed))
    return rows


def run_table3(
    seed: int = 0,
    n_learn: int = 1000,
    n_test: int = 10_000,
    n_mc: int = 10_000,
    reps: int = 100,
    gp_starts: int = 10,
):
    """Indices from the two simple (mean-only) metamodels: first-order
    by Monte Carlo against the data variance, noise total index by 1-Q2."""
    learn = sample_learning(n_learn, _seed_for(seed, 1))
    test = sample_learning(n_test, _seed_for(seed, 2))
    data_var = float(np.var(learn.response, ddof=1))
    rows = _index_rows("table3/exact", exact_indices(), seed)

    sgam = fit_gam(learn, GamSpec(GAM_MEAN_PARAMETRIC, GAM_MEAN_SMOOTHS, gaussian()))
    sgp = fit_gp(learn, n_starts=gp_starts)
    for name, model in (("simple_gam", sgam), ("simple_gp", sgp)):
        problem = SaProblem(
            mean_fn=lambda X, m=model: _predict_simple(m, X),
            dists=[INPUT_LAW, INPUT_LAW],
            total_variance_mode="data",
            data_variance=data_var,
        )
        mc = replicate_indices(problem, ["S1", "S2"], n=n_mc, reps=reps, seed=_seed_for(seed, 3))
        rows += _index_rows(f"table3/{name}", mc, seed)
        q2_val = q2(model, test)
        est = total_index_from_q2(q2_val)
        rows.append(ReportRow(f"table3/{name}/ST3", est.value, method=est.method, seed=seed))
        if name == "simple_gam":
            rows.append(ReportRow(f"table3/{name}/S12", 0.0, method="Eq", seed=seed))
        else:
            s12 = replicate_indices(problem, ["S12"], n=n_mc, reps=reps, seed=_seed_for(seed, 4))
            rows += _index_rows(f"table3/{name}", s12, seed)
    return rows, {"simple_gam": sgam, "simple_gp": sgp, "learn": learn, "test": test}


def _predict_simple(model, X):
    from .gp import GpModel

    if isinstance(model, GpModel):
        return model.predict_mean(X, ["x1", "x2"])
    return model.predict(X, ["x1", "x2"])


def _convergence_cell(args) -> tuple[int, int, float, float, bool]:
    """One (learning size, replicate) cell of the convergence study."""
    n, rep, seed, n_test, n_disp = args
    try:
        learn = sample_learning(n, _seed_for(seed, 10, n, rep))
        test = sample_learning(n_test, _seed_for(seed, 11, n, rep))
        jm = fit_joint(learn, spec_joint_gam())
        q2_val = q2(jm, test)
        big = sample_monte_carlo([INPUT_LAW] * 2, n_disp, _seed_for(seed, 12, n, rep), column_names=["x1", "x2"])
        disp = jm.predict_dispersion(big.points)
        mean = jm.predict_mean(big.points)
        var = float(np.var(mean, ddof=1)) + float(np.mean(disp))
        st3 = float(np.mean(disp)) / var
        return n, rep, q2_val, st3, True
    except Exception:
        return n, rep, float("nan"), float("nan"), False


def convergence_study(
    ns=None,
    replicates: int = 100,
    seed: int = 0,
    n_test: int = 1000,
    n_disp: int = 1_000_000,
    n_jobs: int = 1,
):
    """Joint-GAM quality against learning sample size: mean and 5%/95%
    band of Q2 and of the noise total index, per n."""
    ns = list(range(30, 205, 5)) if ns is None else list(ns)
    tasks = [(n, rep, seed, n_test, n_disp) for n in ns for rep in range(replicates)]
    if n_jobs != 1:
        with ProcessPoolExecutor(max_workers=None if n_jobs < 1 else n_jobs) as pool:
            results = list(pool.map(_convergence_cell, tasks, chunksize=4))
    else:
        results = [_convergence_cell(t) for t in tasks]

    rows = [ReportRow("convergence/meta/replicates", replicates, seed=seed)]
    by_n: dict[int, list] = {n: [] for n in ns}
    for n, rep, q2_val, st3, ok in results:
        by_n[n].append((q2_val, st3, ok))
    for n in ns:
        cells = by_n[n]
        ok = np.array([c[2] for c in cells])
        q2s = np.array([c[0] for c in cells])[ok]
        st3s = np.array([c[1] for c in cells])[ok]
        prefix = f"convergence/n={n}"
        rows.append(ReportRow(f"{prefix}/failures", int((~ok).sum()), seed=seed))
        if len(q2s):
            for label, vals in (("q2", q2s), ("st3", st3s)):
                rows.append(ReportRow(f"{prefix}/{label}_mean", float(vals.mean()), seed=seed))
                rows.append(ReportRow(f"{prefix}/{label}_q05", float(np.quantile(vals, 0.05)), seed=seed))
                rows.append(ReportRow(f"{prefix}/{label}_q95", float(np.quantile(vals, 0.95)), seed=seed))
    return rows


def run_diagnostics(seed: int = 0, n_learn: int = 1000, gp_starts: int = 10, grid: int = 41):
    """Plot-ready tables: observed vs predicted, deviance residuals,
    mean/dispersion profiles against the closed forms, coverage curve."""
    learn = sample_learning(n_learn, _seed_for(seed, 1))
    bench = IshigamiBenchmark()
    rows = []
    jglm = fit_joint(learn, spec_joint_glm())
    jgam = fit_joint(learn, spec_joint_gam())
    jgp = fit_joint(learn, spec_joint_gp(gp_starts))
    sgam = fit_gam(learn, GamSpec(GAM_MEAN_PARAMETRIC, GAM_MEAN_SMOOTHS, gaussian()))

    for name, jm in (("joint_glm", jglm), ("joint_gam", jgam), ("joint_gp", jgp)):
        pred = jm.predict_mean(learn.design.points)
        for i in range(0, n_learn, max(n_learn // 200, 1)):
            rows.append(ReportRow(f"observed_vs_predicted/{name}/{i}", f"{learn.response[i]:.6g},{pred[i]:.6g}"))

    # deviance residuals (gaussian family: signed root squared error)
    for name, mu in (("simple_gam", sgam.fitted_mu), ("joint_gam", jgam.mean_model.fitted_mu)):
        r = learn.response - mu
        for i in range(0, n_learn, max(n_learn // 200, 1)):
            rows.append(ReportRow(f"residuals_vs_fitted/{name}/{i}", f"{mu[i]:.6g},{r[i]:.6g}"))

    xs = np.linspace(-PI, PI, grid)
    for name, jm in (("joint_glm", jglm), ("joint_gam", jgam), ("joint_gp", jgp)):
        mean_slice = jm.predict_mean(np.column_stack([xs, np.zeros(grid)]))
        disp_slice = jm.predict_dispersion(np.column_stack([xs, np.zeros(grid)]))
        for x, m_, d_ in zip(xs, mean_slice, disp_slice):
            rows.append(ReportRow(f"profiles/{name}/x1={x:.3f}", f"mean={m_:.6g},disp={d_:.6g}"))
    for x in xs:
        rows.append(
            ReportRow(
                f"profiles/exact/x1={x:.3f}",
                f"mean={bench.mean(x, 0.0):.6g},disp={bench.dispersion(x):.6g}",
            )
        )

    for name, jm in (("joint_glm", jglm), ("joint_gam", jgam), ("joint_gp", jgp)):
        for alpha, delta in coverage_curve(jm, learn):
            rows.append(ReportRow(f"coverage/{name}/alpha={alpha:.2f}", delta, seed=seed))
    return rows
