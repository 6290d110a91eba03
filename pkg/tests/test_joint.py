import numpy as np
import pytest

from jointsa.design import Dataset, Design, Uniform, sample_monte_carlo
from jointsa.errors import ConfigurationError
from jointsa.gam import SmoothTerm
from jointsa.glm import fit_glm, gaussian, intercept, linear, power
from jointsa.joint import JointSpec, coverage_curve, fit_joint, q2
from jointsa.serialize import FORMAT_HEADER, load_model, save_model


def heteroscedastic_sample(n, seed):
    """y = sin(x1) + 0.5 x2 + scale(x1) * noise with known scale."""
    rng = np.random.default_rng(seed)
    design = sample_monte_carlo([Uniform(-2, 2), Uniform(-2, 2)], n, seed)
    x = design.points
    scale = 0.3 + 0.6 * np.abs(np.sin(x[:, 0]))
    y = np.sin(x[:, 0]) + 0.5 * x[:, 1] + scale * rng.standard_normal(n)
    return Dataset(design, y), scale**2


def homoscedastic_sample(n, seed):
    rng = np.random.default_rng(seed)
    design = sample_monte_carlo([Uniform(-2, 2), Uniform(-2, 2)], n, seed)
    x = design.points
    y = 1.0 + 2.0 * x[:, 0] - x[:, 1] + 0.5 * rng.standard_normal(n)
    return Dataset(design, y)


class TestJointGlm:
    def test_homoscedastic_degeneracy(self):
        data = homoscedastic_sample(800, 3)
        terms = [intercept(), linear("x1"), linear("x2")]
        jm = fit_joint(data, JointSpec("glm", mean_terms=terms))
        simple = fit_glm(data, terms, gaussian())
        assert np.allclose(jm.mean_model.beta, simple.beta, atol=1e-6)
        # intercept-only dispersion recovers the noise variance on the log scale
        assert jm.disp_model.beta[0] == pytest.approx(np.log(0.25), abs=0.15)
        assert jm.converged

    def test_trace_recorded_and_finite(self):
        data = homoscedastic_sample(300, 4)
        jm = fit_joint(data, JointSpec("glm", mean_terms=[intercept(), linear("x1")]))
        assert len(jm.trace) == jm.outer_iterations
        assert np.all(np.isfinite(jm.trace))

    def test_dispersion_terms_recover_structure(self):
        data, true_var = heteroscedastic_sample(2000, 5)
        spec = JointSpec(
            "glm",
            mean_terms=[intercept(), linear("x1"), linear("x2"), power("x1", 3)],
            disp_terms=[intercept(), power("x1", 2)],
        )
        jm = fit_joint(data, spec)
        phi = jm.predict_dispersion(data.design.points)
        assert np.all(phi > 0)
        assert np.corrcoef(phi, true_var)[0, 1] > 0.4


class TestJointGam:
    def test_heteroscedastic_recovery(self):
        data, true_var = heteroscedastic_sample(1200, 6)
        spec = JointSpec(
            "gam",
            mean_terms=[intercept()],
            mean_smooths=[SmoothTerm(("x1",)), SmoothTerm(("x2",))],
            disp_smooths=[SmoothTerm(("x1",))],
        )
        jm = fit_joint(data, spec)
        phi = jm.predict_dispersion(data.design.points)
        assert np.all(phi >= 0)
        assert np.corrcoef(phi, true_var)[0, 1] > 0.6
        mean = jm.predict_mean(data.design.points)
        truth = np.sin(data.design.points[:, 0]) + 0.5 * data.design.points[:, 1]
        assert np.sqrt(np.mean((mean - truth) ** 2)) < 0.1

    def test_dispersion_positive_on_grid(self):
        data, _ = heteroscedastic_sample(600, 7)
        spec = JointSpec(
            "gam",
            mean_terms=[intercept()],
            mean_smooths=[SmoothTerm(("x1",)), SmoothTerm(("x2",))],
            disp_smooths=[SmoothTerm(("x1",))],
        )
        jm = fit_joint(data, spec)
        grid = np.column_stack([np.linspace(-3, 3, 100), np.zeros(100)])
        assert np.all(jm.predict_dispersion(grid) >= 0)


class TestJointGp:
    def test_mean_and_dispersion_positive(self):
        data, true_var = heteroscedastic_sample(150, 8)
        jm = fit_joint(data, JointSpec("gp", gp_n_starts=3, max_outer_iter=3))
        phi = jm.predict_dispersion(data.design.points)
        assert np.all(phi >= 0)
        mean = jm.predict_mean(data.design.points)
        truth = np.sin(data.design.points[:, 0]) + 0.5 * data.design.points[:, 1]
        assert np.corrcoef(mean, truth)[0, 1] > 0.9


class TestQ2:
    def test_perfect_predictor(self):
        data = homoscedastic_sample(200, 9)

        class Oracle:
            def predict(self, pts, names):
                return 1.0 + 2.0 * pts[:, 0] - pts[:, 1]

        rng = np.random.default_rng(0)
        exact = Dataset(data.design, 1.0 + 2.0 * data.design.points[:, 0] - data.design.points[:, 1])
        assert q2(Oracle(), exact) == pytest.approx(1.0)

    def test_constant_predictor_scores_zero(self):
        data = homoscedastic_sample(200, 10)

        class Mean:
            def predict(self, pts, names):
                return np.full(len(pts), data.response.mean())

        assert q2(Mean(), data) == pytest.approx(0.0, abs=1e-12)

    def test_zero_variance_test_sample_rejected(self):
        design = Design(np.arange(4, dtype=float)[:, None], ["x1"])
        flat = Dataset(design, np.ones(4))

        class Any:
            def predict(self, pts, names):
                return np.zeros(len(pts))

        with pytest.raises(ConfigurationError):
            q2(Any(), flat)


class _ExactJoint:
    """Stub with the predict interface of a fitted joint model."""

    def __init__(self, mean_fn, disp_fn):
        self.mean_fn, self.disp_fn = mean_fn, disp_fn

    def predict_mean(self, pts, names=None):
        return self.mean_fn(pts)

    def predict_dispersion(self, pts, names=None):
        return self.disp_fn(pts)


class TestCoverage:
    def test_calibration_with_true_model(self):
        rng = np.random.default_rng(11)
        n = 4000
        design = sample_monte_carlo([Uniform(-1, 1)], n, seed=11)
        x = design.points[:, 0]
        sd = 0.5 + 0.4 * x**2
        y = 2 * x + sd * rng.standard_normal(n)
        data = Dataset(design, y)
        jm = _ExactJoint(lambda p: 2 * p[:, 0], lambda p: (0.5 + 0.4 * p[:, 0] ** 2) ** 2)
        alphas = [0.2, 0.5, 0.8, 0.95]
        for alpha, delta in coverage_curve(jm, data, alphas):
            se = np.sqrt(alpha * (1 - alpha) / n)
            assert abs(delta - alpha) <= 3 * se

    def test_zero_dispersion_degenerate(self):
        data = homoscedastic_sample(100, 12)
        jm = _ExactJoint(lambda p: np.zeros(len(p)), lambda p: np.zeros(len(p)))
        curve = coverage_curve(jm, data, [0.5])
        assert curve[0][1] == 0.0

    def test_wide_interval_covers_everything(self):
        data, true_var = heteroscedastic_sample(500, 13)
        jm = _ExactJoint(
            lambda p: np.sin(p[:, 0]) + 0.5 * p[:, 1],
            lambda p: (0.3 + 0.6 * np.abs(np.sin(p[:, 0]))) ** 2,
        )
        (_, delta), = coverage_curve(jm, data, [0.999])
        assert delta > 0.99

    def test_alpha_bounds_validated(self):
        data = homoscedastic_sample(50, 14)
        jm = _ExactJoint(lambda p: np.zeros(len(p)), lambda p: np.ones(len(p)))
        with pytest.raises(ConfigurationError):
            coverage_curve(jm, data, [0.0, 0.5])


class TestSerialization:
    def test_round_trip_glm(self, tmp_path):
        data = homoscedastic_sample(300, 15)
        jm = fit_joint(data, JointSpec("glm", mean_terms=[intercept(), linear("x1"), linear("x2")]))
        path = tmp_path / "m.model"
        save_model(jm, path)
        assert path.read_text().splitlines()[0] == FORMAT_HEADER
        loaded = load_model(path)
        grid = np.column_stack([np.linspace(-2, 2, 30), np.linspace(2, -2, 30)])
        assert np.allclose(loaded.predict_mean(grid), jm.predict_mean(grid))
        assert np.allclose(loaded.predict_dispersion(grid), jm.predict_dispersion(grid))

    def test_round_trip_gam(self, tmp_path):
        data, _ = heteroscedastic_sample(500, 16)
        spec = JointSpec(
            "gam",
            mean_terms=[intercept()],
            mean_smooths=[SmoothTerm(("x1",)), SmoothTerm(("x2",))],
            disp_smooths=[SmoothTerm(("x1",))],
        )
        jm = fit_joint(data, spec)
        path = tmp_path / "m.model"
        save_model(jm, path)
        loaded = load_model(path)
        grid = np.column_stack([np.linspace(-2, 2, 30), np.linspace(2, -2, 30)])
        assert np.allclose(loaded.predict_mean(grid), jm.predict_mean(grid), atol=1e-12)
        assert np.allclose(loaded.predict_dispersion(grid), jm.predict_dispersion(grid), atol=1e-12)

    def test_round_trip_gp(self, tmp_path):
        data, _ = heteroscedastic_sample(120, 17)
        jm = fit_joint(data, JointSpec("gp", gp_n_starts=2, max_outer_iter=2))
        path = tmp_path / "m.model"
        save_model(jm, path)
        loaded = load_model(path)
        grid = np.column_stack([np.linspace(-2, 2, 30), np.linspace(2, -2, 30)])
        assert np.allclose(loaded.predict_mean(grid), jm.predict_mean(grid), atol=1e-8)
        assert np.allclose(loaded.predict_dispersion(grid), jm.predict_dispersion(grid), atol=1e-8)

    def test_deterministic_bytes(self, tmp_path):
        data = homoscedastic_sample(200, 18)
        spec = JointSpec("glm", mean_terms=[intercept(), linear("x1")])
        p1, p2 = tmp_path / "a.model", tmp_path / "b.model"
        save_model(fit_joint(data, spec), p1)
        save_model(fit_joint(data, spec), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.model"
        path.write_text("something-else v9\n{}")
        from jointsa.errors import DataParseError

        with pytest.raises(DataParseError, match="header"):
            load_model(path)
