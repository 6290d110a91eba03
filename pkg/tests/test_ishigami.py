import math

import numpy as np
import pytest

from jointsa.design import Uniform, sample_monte_carlo
from jointsa.ishigami import (
    IshigamiBenchmark,
    convergence_study,
    dispersion_component,
    exact_indices,
    exact_problem,
    ishigami,
    mean_component,
    run_table1,
    sample_learning,
    select_glm_dispersion_terms,
)

PI = math.pi


class TestSimulator:
    def test_known_values(self):
        assert ishigami(0.0, 0.0, 0.0) == 0.0
        assert ishigami(PI / 2, 0.0, 0.0) == pytest.approx(1.0)
        assert ishigami(PI / 2, PI / 2, PI) == pytest.approx(1.0 + 7.0 + 0.1 * PI**4)

    def test_vectorized(self):
        x = np.linspace(-PI, PI, 7)
        vals = ishigami(x, x, x)
        assert vals.shape == (7,)


class TestClosedForms:
    def test_mean_at_origin(self):
        assert mean_component(0.0, 0.0) == 0.0

    def test_mean_at_quarter(self):
        assert mean_component(PI / 2, 0.0) == pytest.approx(1.0 + PI**4 / 50.0)

    def test_dispersion_peak(self):
        expected = PI**8 * (1.0 / 900.0 - 1.0 / 2500.0)
        assert dispersion_component(PI / 2) == pytest.approx(expected)
        assert expected == pytest.approx(6.7474, abs=1e-4)

    def test_dispersion_reflection_symmetry(self):
        x = np.linspace(-PI, PI, 101)
        assert np.allclose(dispersion_component(x), dispersion_component(PI - x), atol=1e-12)

    def test_conditional_moments_against_brute_force(self):
        rng = np.random.default_rng(5)
        n = 200_000
        x3 = rng.uniform(-PI, PI, n)
        for x1, x2 in [(0.3, -1.2), (PI / 2, 0.0), (-2.0, 2.5), (0.0, 1.0), (1.1, -0.4)]:
            vals = ishigami(x1, x2, x3)
            m, v = vals.mean(), vals.var(ddof=1)
            se_m = math.sqrt(v / n)
            se_v = math.sqrt((np.mean((vals - m) ** 4) - v**2) / n)
            assert abs(m - mean_component(x1, x2)) <= 3 * se_m + 1e-12
            assert abs(v - dispersion_component(x1)) <= 3 * se_v + 1e-12

    def test_decomposition_identity_binned(self):
        rng = np.random.default_rng(6)
        n = 100_000
        X = rng.uniform(-PI, PI, (n, 3))
        y = ishigami(X[:, 0], X[:, 1], X[:, 2])
        resid = y - mean_component(X[:, 0], X[:, 1])
        bins = np.linspace(-PI, PI, 21)
        idx = np.digitize(X[:, 0], bins) - 1
        for b in range(20):
            sel = idx == b
            if sel.sum() < 1000:
                continue
            center_disp = dispersion_component(X[sel, 0]).mean()
            if center_disp < 0.3:  # relative tolerance meaningless near the zeros
                continue
            assert np.var(resid[sel]) == pytest.approx(center_disp, rel=0.10)


class TestExactIndices:
    def test_three_decimal_places(self):
        vals = {e.label: e.value for e in exact_indices()}
        assert round(vals["S1"], 3) == 0.314
        assert round(vals["S2"], 3) == 0.442
        assert round(vals["ST3"], 3) == 0.244
        assert vals["S12"] == 0.0 and vals["S3"] == 0.0 and vals["S123"] == 0.0
        assert vals["S13"] == vals["ST3"]

    def test_sum_to_one_exactly(self):
        vals = {e.label: e.value for e in exact_indices()}
        assert vals["S1"] + vals["S2"] + vals["ST3"] == pytest.approx(1.0, abs=1e-12)

    def test_total_variance(self):
        assert IshigamiBenchmark().total_variance == pytest.approx(13.8446, abs=5e-4)


class TestLearningSample:
    def test_noise_input_is_hidden(self):
        data = sample_learning(50, seed=1)
        assert data.design.column_names == ["x1", "x2"]
        assert data.design.p == 2

    def test_response_is_stochastic_given_visible_inputs(self):
        # two samples with equal (x1, x2) rarely agree in y; check spread
        a = sample_learning(2000, seed=2)
        resid = a.response - mean_component(a.design.points[:, 0], a.design.points[:, 1])
        assert np.std(resid) > 1.0

    def test_reproducible(self):
        a = sample_learning(100, seed=3)
        b = sample_learning(100, seed=3)
        assert np.array_equal(a.response, b.response)


class TestDispersionSelection:
    def test_no_candidate_survives_on_glm_residuals(self):
        from jointsa.design import Dataset
        from jointsa.glm import fit_glm, gaussian
        from jointsa.ishigami import GLM_MEAN_TERMS

        learn = sample_learning(1000, seed=4)
        fit = fit_glm(learn, GLM_MEAN_TERMS, gaussian())
        d = (learn.response - fit.fitted_mu) ** 2
        disp_data = Dataset(learn.design, np.maximum(d, 1e-12 * d.mean()))
        kept, drops = select_glm_dispersion_terms(disp_data)
        assert kept == []
        assert set(drops) == {"x1", "x2^2", "x1^3", "x2^4"}


class TestBenchSmoke:
    def test_table1_reduced(self):
        rows, models = run_table1(seed=5, n_learn=400, n_test=2000, gp_starts=2)
        keys = {r.key for r in rows}
        assert "table1/simple_glm/q2" in keys
        assert "table1/joint_gam/mean_d_expl" in keys
        assert "table1/simple_gp/nugget_variance_share" in keys
        q2_cells = {r.key: r.value for r in rows if r.key.endswith("/q2")}
        for v in q2_cells.values():
            assert 0.3 < v < 1.0

    def test_convergence_reduced(self):
        rows = convergence_study(ns=[40, 80], replicates=3, seed=6, n_test=500, n_disp=20_000)
        keys = {r.key: r.value for r in rows}
        assert keys["convergence/n=40/failures"] == 0
        assert 0.0 < keys["convergence/n=80/q2_mean"] < 1.0
        assert keys["convergence/n=80/q2_q05"] <= keys["convergence/n=80/q2_mean"] <= keys["convergence/n=80/q2_q95"]


class TestProblemWrappers:
    def test_exact_problem_modes(self):
        prob = exact_problem("data")
        assert prob.data_variance == pytest.approx(IshigamiBenchmark().total_variance)
        grid = sample_monte_carlo([Uniform(-PI, PI)] * 2, 100, seed=0)
        assert np.all(prob.disp_fn(grid.points) >= 0)
