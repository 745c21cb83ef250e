import numpy as np
import pytest

from uqfair import data
from uqfair.data import BINARY, REGRESSION, Dataset, SplitSpec


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestLoadCsv:
    def test_binary_three_rows(self, tmp_path):
        p = _write(tmp_path, "x1,x2,sex,y\n1.0,2,M,0\n3,4.5,F,1\n5,6,M,0\n")
        ds = data.load_csv(p, "y", "sex", BINARY)
        assert ds.n == 3 and ds.task == BINARY
        assert ds.feature_names == ("x1", "x2")
        np.testing.assert_array_equal(ds.outcome, [0, 1, 0])
        assert sorted(set(ds.protected.tolist())) == ["F", "M"]
        assert ds.true_sigma is None

    def test_binary_outcome_out_of_domain_cites_row(self, tmp_path):
        p = _write(tmp_path, "x,a,y\n1,0,0\n2,1,2\n3,0,1\n")
        with pytest.raises(data.DomainError, match="row 2"):
            data.load_csv(p, "y", "a", BINARY)

    def test_missing_column(self, tmp_path):
        p = _write(tmp_path, "x,a,y\n1,0,0\n")
        with pytest.raises(data.SchemaError, match="'label'"):
            data.load_csv(p, "label", "a", BINARY)

    def test_non_numeric_feature(self, tmp_path):
        p = _write(tmp_path, "x,a,y\n1,0,0\nred,1,1\n")
        with pytest.raises(data.ParseError, match=r"row 2, column 'x'"):
            data.load_csv(p, "y", "a", BINARY)

    def test_missing_value_rejected(self, tmp_path):
        p = _write(tmp_path, "x,a,y\n1,0,0\n,1,1\n")
        with pytest.raises(data.ParseError):
            data.load_csv(p, "y", "a", BINARY)

    def test_multivalued_protected_needs_designation(self, tmp_path):
        p = _write(tmp_path, "x,race,y\n1,a,0\n2,b,1\n3,c,1\n")
        with pytest.raises(data.SchemaError, match="privileged_value"):
            data.load_csv(p, "y", "race", BINARY)
        ds = data.load_csv(p, "y", "race", BINARY, privileged_value="b")
        np.testing.assert_array_equal(ds.group, [0, 1, 0])

    def test_round_trip(self, tmp_path):
        ds = data.synth_regression(50, seed=4)
        p = tmp_path / "rt.csv"
        data.write_csv(ds, p)
        back = data.load_csv(p, "y", "a", REGRESSION)
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.outcome, ds.outcome)
        np.testing.assert_array_equal(back.protected, ds.protected)


class TestDataset:
    def test_invariants(self):
        with pytest.raises(data.DatasetError):
            Dataset(np.ones((3, 2)), [0, 1], [0, 1, 0], BINARY)
        with pytest.raises(data.DomainError):
            Dataset(np.ones((2, 1)), [0, 1], [0, 0.5], BINARY)
        with pytest.raises(data.DatasetError):
            Dataset(np.ones((2, 1)), [0, 1], [0, 1], REGRESSION, true_sigma=[-1, 1])

    def test_immutable(self):
        ds = data.synth_binary(10, seed=0)
        with pytest.raises(ValueError):
            ds.features[0, 0] = 1.0

    def test_design_appends_group(self):
        ds = data.synth_binary(10, seed=0)
        np.testing.assert_array_equal(ds.design[:, -1], ds.group)
        assert ds.design.shape == (10, ds.d + 1)


class TestSplit:
    def test_sizes(self):
        ds = data.synth_binary(10, seed=0)
        tr, te = data.split(ds, SplitSpec(0.2, 1))
        assert (tr.n, te.n) == (8, 2)

    def test_partition_and_determinism(self):
        n = 100
        a1, b1 = data.split_indices(n, SplitSpec(0.3, 5))
        a2, b2 = data.split_indices(n, SplitSpec(0.3, 5))
        np.testing.assert_array_equal(a1, a2)
        np.testing.assert_array_equal(b1, b2)
        assert sorted(np.concatenate([a1, b1]).tolist()) == list(range(n))

    def test_seeds_differ(self):
        _, t1 = data.split_indices(100, SplitSpec(0.3, 1))
        _, t2 = data.split_indices(100, SplitSpec(0.3, 2))
        assert set(t1.tolist()) != set(t2.tolist())

    def test_ground_truth_travels(self):
        ds = data.synth_regression(40, seed=2)
        tr, te = data.split(ds, SplitSpec(0.25, 0))
        tr_idx, _ = data.split_indices(40, SplitSpec(0.25, 0))
        np.testing.assert_array_equal(tr.true_sigma, ds.true_sigma[tr_idx])

    @pytest.mark.parametrize("frac", [0.0, 1.0, 1.5])
    def test_bad_fraction(self, frac):
        with pytest.raises(ValueError):
            SplitSpec(frac, 0)

    def test_degenerate(self):
        ds = data.synth_binary(2, seed=0)
        with pytest.raises(data.DatasetError):
            data.split(ds, SplitSpec(0.1, 0))


class TestSyntheticBinary:
    def test_constant_half(self):
        ds = data.synth_binary(200, seed=0, scenario="constant", p=0.5)
        np.testing.assert_allclose(ds.true_sigma, 0.5)

    def test_deterministic(self):
        ds = data.synth_binary(200, seed=0, scenario="deterministic")
        np.testing.assert_array_equal(ds.true_sigma, 0.0)
        np.testing.assert_array_equal(ds.outcome, ds.true_mean)

    def test_default_mean_matches_probability(self):
        ds = data.synth_binary(100_000, seed=3)
        se = np.sqrt(np.mean(ds.true_mean * (1 - ds.true_mean)) / ds.n)
        assert abs(ds.outcome.mean() - ds.true_mean.mean()) < 3 * se

    def test_unknown_scenario(self):
        with pytest.raises(ValueError, match="unknown scenario"):
            data.synth_binary(10, scenario="nope")


class TestSyntheticRegression:
    def test_noiseless(self):
        ds = data.synth_regression(100, seed=0, scenario="noiseless")
        np.testing.assert_array_equal(ds.outcome, ds.true_mean)

    def test_default_sigma_positive_and_varying(self):
        ds = data.synth_regression(1000, seed=0)
        assert ds.true_sigma.min() >= 0.1
        np.testing.assert_allclose(ds.true_sigma, 0.1 + np.abs(ds.features[:, 2]))

    def test_replicated_row_std(self):
        # regenerate one covariate row 1e5 times with sigma = 2
        rng = np.random.default_rng(11)
        X = np.tile(rng.standard_normal(5), (100_000, 1))
        mean, sd = data.regression_truth(X, np.zeros(len(X), int), "homoscedastic", sigma=2.0)
        y = mean + sd * rng.standard_normal(len(X))
        assert 1.98 <= y.std(ddof=1) <= 2.02

    def test_oracle_soundness(self):
        rng = np.random.default_rng(12)
        X = np.tile(rng.standard_normal(5), (100_000, 1))
        g = np.ones(len(X), int)
        mean, sd = data.regression_truth(X, g, "default")
        y = mean + sd * rng.standard_normal(len(X))
        var, n = sd[0] ** 2, len(y)
        se = var * np.sqrt(2.0 / (n - 1))
        assert abs(y.var(ddof=1) - var) < 3 * se

    def test_group_multiplier_ratio(self):
        ds = data.synth_regression(200_000, seed=5, group_multiplier=(3.0, 1.0))
        resid = (ds.outcome - ds.true_mean) / (0.1 + np.abs(ds.features[:, 2]))
        ratio = resid[ds.group == 0].std() / resid[ds.group == 1].std()
        assert ratio == pytest.approx(3.0, rel=0.02)

    def test_group_noise_preset(self):
        ds = data.synth_regression(1000, seed=1, scenario="group_noise")
        base = 0.1 + np.abs(ds.features[:, 2])
        np.testing.assert_allclose(ds.true_sigma, np.where(ds.group == 0, 2 * base, base))
