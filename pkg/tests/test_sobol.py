import numpy as np
import pytest

from jointsa.design import Uniform
from jointsa.errors import ConfigurationError, JointsaError
from jointsa.ishigami import exact_problem
from jointsa.sobol import (
    SaProblem,
    dispersion_sensitivity,
    estimate_by_label,
    first_order_index,
    replicate_indices,
    second_order_index,
    total_index_from_q2,
    total_index_uncontrollable,
)


def additive_problem():
    return SaProblem(mean_fn=lambda X: X[:, 0] + X[:, 1], dists=[Uniform(0, 1)] * 2)


def product_problem():
    return SaProblem(mean_fn=lambda X: X[:, 0] * X[:, 1], dists=[Uniform(-1, 1)] * 2)


class TestFirstOrder:
    def test_additive_splits_evenly(self):
        est = replicate_indices(additive_problem(), ["S1", "S2"], n=10_000, reps=10, seed=1)
        for e in est:
            assert e.value == pytest.approx(0.5, abs=0.02)

    def test_weighted_additive_matches_analytic_shares(self):
        # f = 3 x1 + x2 over independent U(0,1): shares 9:1
        prob = SaProblem(mean_fn=lambda X: 3 * X[:, 0] + X[:, 1], dists=[Uniform(0, 1)] * 2)
        e1, e2 = replicate_indices(prob, ["S1", "S2"], n=10_000, reps=20, seed=2)
        se1 = e1.sd / np.sqrt(20)
        se2 = e2.sd / np.sqrt(20)
        assert abs(e1.value - 0.9) <= 3 * se1
        assert abs(e2.value - 0.1) <= 3 * se2

    def test_exact_mean_component_s1(self):
        est = replicate_indices(exact_problem(), ["S1"], n=10_000, reps=10, seed=3)[0]
        assert est.value == pytest.approx(0.314, abs=0.01)

    def test_constant_function_rejected(self):
        prob = SaProblem(mean_fn=lambda X: np.ones(len(X)), dists=[Uniform(0, 1)])
        with pytest.raises(JointsaError):
            first_order_index(prob, 0, n=500, seed=0)

    def test_deterministic_for_fixed_seed(self):
        a = first_order_index(additive_problem(), 0, n=2000, seed=77)
        b = first_order_index(additive_problem(), 0, n=2000, seed=77)
        assert a.value == b.value

    def test_index_out_of_range(self):
        with pytest.raises(ConfigurationError):
            first_order_index(additive_problem(), 5, n=100, seed=0)


class TestSecondOrder:
    def test_pure_interaction(self):
        prob = product_problem()
        s12 = replicate_indices(prob, ["S12"], n=10_000, reps=10, seed=4)[0]
        assert s12.value == pytest.approx(1.0, abs=0.03)
        s1, s2 = replicate_indices(prob, ["S1", "S2"], n=10_000, reps=10, seed=5)
        assert abs(s1.value) <= 0.02
        assert abs(s2.value) <= 0.02

    def test_additive_has_no_interaction(self):
        s12 = replicate_indices(additive_problem(), ["S12"], n=10_000, reps=10, seed=6)[0]
        assert abs(s12.value) <= 0.02

    def test_exact_mean_component_s12(self):
        s12 = replicate_indices(exact_problem(), ["S12"], n=10_000, reps=10, seed=7)[0]
        assert abs(s12.value) <= 0.02

    def test_same_index_rejected(self):
        with pytest.raises(ConfigurationError):
            second_order_index(additive_problem(), 1, 1, n=100, seed=0)


class TestNoiseTotalIndex:
    def test_exact_joint_model(self):
        est = replicate_indices(exact_problem(), ["ST_eps"], n=10_000, reps=10, seed=8)[0]
        assert est.value == pytest.approx(0.244, abs=0.01)

    def test_zero_dispersion(self):
        prob = SaProblem(
            mean_fn=lambda X: X[:, 0],
            disp_fn=lambda X: np.zeros(len(X)),
            dists=[Uniform(0, 1)],
        )
        assert total_index_uncontrollable(prob, n=1000, seed=0).value == 0.0

    def test_pure_noise_model(self):
        prob = SaProblem(
            mean_fn=lambda X: np.full(len(X), 3.0),
            disp_fn=lambda X: np.full(len(X), 2.5),
            dists=[Uniform(0, 1)],
        )
        assert total_index_uncontrollable(prob, n=1000, seed=0).value == pytest.approx(1.0)

    def test_negative_dispersion_rejected(self):
        prob = SaProblem(
            mean_fn=lambda X: X[:, 0],
            disp_fn=lambda X: -np.ones(len(X)),
            dists=[Uniform(0, 1)],
        )
        with pytest.raises(JointsaError):
            total_index_uncontrollable(prob, n=100, seed=0)

    def test_missing_dispersion_rejected(self):
        with pytest.raises(ConfigurationError):
            total_index_uncontrollable(additive_problem(), n=100, seed=0)


class TestDispersionSensitivity:
    def test_exact_dispersion_depends_on_x1_only(self):
        ests = replicate_indices(exact_problem(), ["S_Yd1", "S_Yd2"], n=10_000, reps=10, seed=9)
        assert ests[0].value >= 0.95
        assert abs(ests[1].value) <= 0.05
        assert all(e.method == "S_Yd" for e in ests)

    def test_single_input_dispersion(self):
        prob = SaProblem(
            mean_fn=lambda X: X[:, 0],
            disp_fn=lambda X: X[:, 1] ** 2,
            dists=[Uniform(-1, 1)] * 2,
        )
        est = replicate_indices(prob, ["S_Yd2"], n=10_000, reps=10, seed=10)[0]
        assert est.value == pytest.approx(1.0, abs=0.03)

    def test_constant_dispersion_rejected(self):
        prob = SaProblem(
            mean_fn=lambda X: X[:, 0],
            disp_fn=lambda X: np.ones(len(X)),
            dists=[Uniform(0, 1)],
        )
        with pytest.raises(JointsaError):
            dispersion_sensitivity(prob, 0, n=500, seed=0)


class TestQ2Deduction:
    def test_values(self):
        assert total_index_from_q2(0.751).value == pytest.approx(0.249)
        assert total_index_from_q2(1.0).value == 0.0
        assert total_index_from_q2(0.75).value == pytest.approx(0.250)
        assert total_index_from_q2(0.5).method == "Q2"

    def test_q2_above_one_rejected(self):
        with pytest.raises(ConfigurationError):
            total_index_from_q2(1.2)


class TestReplication:
    def test_sd_magnitude_on_exact_model(self):
        est = replicate_indices(exact_problem(), ["S1"], n=10_000, reps=30, seed=11)[0]
        assert est.replicates == 30
        assert 1e-4 < est.sd < 2e-2

    def test_sd_shrinks_with_n(self):
        small = replicate_indices(exact_problem(), ["S1"], n=2_500, reps=30, seed=12)[0]
        large = replicate_indices(exact_problem(), ["S1"], n=10_000, reps=30, seed=13)[0]
        ratio = small.sd / large.sd
        assert 1.3 < ratio < 3.1  # ~2 expected from 4x the sample

    def test_single_rep_has_no_sd(self):
        est = replicate_indices(additive_problem(), ["S1"], n=1000, reps=1, seed=14)[0]
        assert est.sd is None

    def test_additivity_on_exact_model(self):
        labels = ["S1", "S2", "S12", "ST_eps"]
        ests = replicate_indices(exact_problem(), labels, n=10_000, reps=10, seed=15)
        assert sum(e.value for e in ests) == pytest.approx(1.0, abs=0.03)

    def test_values_within_extended_unit_interval(self):
        labels = ["S1", "S2", "S12", "ST_eps", "S_Yd1", "S_Yd2"]
        for e in replicate_indices(exact_problem(), labels, n=10_000, reps=5, seed=16):
            assert -0.02 <= e.value <= 1.02


class TestLabels:
    def test_label_forms(self):
        prob = exact_problem()
        assert estimate_by_label(prob, "S1", 500, 0).label == "S1"
        assert estimate_by_label(prob, "S12", 500, 0).label == "S12"
        assert estimate_by_label(prob, "S1,2", 500, 0).label == "S12"
        assert estimate_by_label(prob, "ST_eps", 500, 0).label == "ST_eps"
        assert estimate_by_label(prob, "S_Yd1", 500, 0).label == "S_Yd1"

    def test_bad_label(self):
        with pytest.raises(ConfigurationError):
            estimate_by_label(exact_problem(), "X7", 100, 0)

    def test_data_mode_requires_variance(self):
        with pytest.raises(ConfigurationError):
            SaProblem(mean_fn=lambda X: X[:, 0], dists=[Uniform(0, 1)], total_variance_mode="data")
