import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointsa.design import Dataset, Design, Uniform, load_csv, sample_lhs, sample_monte_carlo, write_csv
from jointsa.errors import ConfigurationError, DataParseError

PI = math.pi


class TestUniform:
    def test_bounds_validated(self):
        with pytest.raises(ConfigurationError):
            Uniform(1.0, 1.0)
        with pytest.raises(ConfigurationError):
            Uniform(2.0, -2.0)

    def test_moments(self):
        d = Uniform(0.0, 1.0)
        assert d.mean == 0.5
        assert d.variance == pytest.approx(1.0 / 12.0)


class TestMonteCarlo:
    def test_shape_and_bounds(self):
        dists = [Uniform(-PI, PI)] * 3
        design = sample_monte_carlo(dists, 1000, seed=42)
        assert design.points.shape == (1000, 3)
        assert np.all(design.points >= -PI) and np.all(design.points <= PI)

    def test_narrow_interval_containment(self):
        eps = 1e-9
        design = sample_monte_carlo([Uniform(0.0, eps)], 5, seed=0)
        assert np.all((design.points >= 0.0) & (design.points <= eps))

    def test_large_sample_mean_matches_uniform_law(self):
        n = 10**6
        design = sample_monte_carlo([Uniform(-PI, PI)], n, seed=7)
        se = (2 * PI / math.sqrt(12.0)) / math.sqrt(n)
        assert abs(design.points.mean()) < 3 * se

    def test_large_sample_variance_matches_uniform_law(self):
        n = 200_000
        d = Uniform(-1.0, 3.0)
        design = sample_monte_carlo([d], n, seed=3)
        x = design.points[:, 0]
        # variance of the sample variance for U(a,b), within 4 standard errors
        se_var = math.sqrt((np.mean((x - x.mean()) ** 4) - x.var() ** 2) / n)
        assert abs(x.var() - d.variance) < 4 * se_var

    def test_bitwise_reproducible(self):
        dists = [Uniform(0, 1), Uniform(-2, 5)]
        a = sample_monte_carlo(dists, 100, seed=123)
        b = sample_monte_carlo(dists, 100, seed=123)
        assert np.array_equal(a.points, b.points)

    def test_invalid_n(self):
        with pytest.raises(ConfigurationError):
            sample_monte_carlo([Uniform(0, 1)], 0, seed=1)


class TestLhs:
    def test_stratification_n4(self):
        design = sample_lhs([Uniform(0, 1)], 4, seed=11)
        strata = np.floor(design.points[:, 0] * 4).astype(int)
        assert sorted(strata.tolist()) == [0, 1, 2, 3]

    def test_stratification_wide(self):
        n = 300
        design = sample_lhs([Uniform(-PI, PI)] * 16, n, seed=5)
        assert design.points.shape == (n, 16)
        for j in range(16):
            strata = np.floor((design.points[:, j] + PI) / (2 * PI) * n).astype(int)
            assert sorted(strata.tolist()) == list(range(n))

    def test_reproducible_pair(self):
        a = sample_lhs([Uniform(0, 1)], 2, seed=99)
        b = sample_lhs([Uniform(0, 1)], 2, seed=99)
        assert np.array_equal(a.points, b.points)

    @given(n=st.integers(1, 60), seed=st.integers(0, 2**31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_one_point_per_stratum(self, n, seed):
        lo, hi = -2.5, 4.0
        design = sample_lhs([Uniform(lo, hi)], n, seed=seed)
        strata = np.floor((design.points[:, 0] - lo) / (hi - lo) * n).astype(int)
        strata = np.clip(strata, 0, n - 1)
        assert sorted(strata.tolist()) == list(range(n))


class TestDesignDataset:
    def test_column_names_unique(self):
        with pytest.raises(ConfigurationError):
            Design(np.zeros((2, 2)), ["a", "a"])

    def test_response_length(self):
        d = Design(np.zeros((3, 1)), ["a"])
        with pytest.raises(ConfigurationError):
            Dataset(d, np.zeros(2))

    def test_weights_positive(self):
        d = Design(np.zeros((3, 1)), ["a"])
        with pytest.raises(ConfigurationError):
            Dataset(d, np.zeros(3), np.array([1.0, 0.0, 1.0]))


class TestCsv:
    def test_small_parse(self, tmp_path):
        path = tmp_path / "small.csv"
        path.write_text("x1,x2,y\n0.5,1.5,2.0\n-1,0,3\n2,2,4\n")
        ds = load_csv(path)
        assert ds.n == 3
        assert ds.design.p == 2
        assert ds.design.column_names == ["x1", "x2"]
        assert np.allclose(ds.response, [2, 3, 4])

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        design = sample_monte_carlo([Uniform(-PI, PI)] * 3, 1000, seed=1)
        ds = Dataset(design, rng.standard_normal(1000))
        path = tmp_path / "ish.csv"
        write_csv(ds, path)
        loaded = load_csv(path)
        assert np.array_equal(loaded.design.points, ds.design.points)
        assert np.array_equal(loaded.response, ds.response)

    def test_nan_cell_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x1,y\n1.0,2.0\nNaN,3.0\n")
        with pytest.raises(DataParseError, match="row 3.*x1"):
            load_csv(path)

    def test_ragged_row(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("x1,y\n1.0,2.0\n1.0\n")
        with pytest.raises(DataParseError, match="row 3"):
            load_csv(path)

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "alpha.csv"
        path.write_text("x1,y\nfoo,2.0\n")
        with pytest.raises(DataParseError, match="column 'x1'"):
            load_csv(path)

    def test_missing_response(self, tmp_path):
        path = tmp_path / "nores.csv"
        path.write_text("x1,x2\n1.0,2.0\n")
        with pytest.raises(DataParseError, match="response"):
            load_csv(path)
