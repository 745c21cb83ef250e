from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from uqfair import fairness as F
from uqfair.fairness import (AbstentionCurve, FairnessMetrics, MixtureCDF, abstention_curve,
                             binary_metrics, ks_uasp, select_abstention_rate, wasserstein_1d)


def _count_oracle(label, y, group):
    """Plain loops over rows; returns the seven metrics or None."""
    def rate(rows, pred):
        rows = list(rows)
        return None if not rows else sum(1 for r in rows if pred(r)) / len(rows)

    idx = range(len(y))
    by = {a: [i for i in idx if group[i] == a] for a in (0, 1)}
    pos = {a: rate(by[a], lambda i: label[i] == 1) for a in (0, 1)}
    tpr = {a: rate([i for i in by[a] if y[i] == 1], lambda i: label[i] == 1) for a in (0, 1)}
    fpr = {a: rate([i for i in by[a] if y[i] == 0], lambda i: label[i] == 1) for a in (0, 1)}
    ppv = {a: rate([i for i in by[a] if label[i] == 1], lambda i: y[i] == 1) for a in (0, 1)}

    def gap(d):
        return None if d[0] is None or d[1] is None else abs(d[0] - d[1])

    eo, fp = gap(tpr), gap(fpr)
    return {
        "error_rate": sum(1 for i in idx if label[i] != y[i]) / len(y),
        "statistical_parity": abs(pos[0] - pos[1]),
        "equalized_odds": None if eo is None or fp is None else max(eo, fp),
        "equal_opportunity": eo,
        "disparate_impact": None if pos[1] == 0 else pos[0] / pos[1],
        "predictive_parity": gap(ppv),
        "false_positive_rate": fp,
    }


@st.composite
def grouped(draw):
    n = draw(st.integers(2, 50))
    label = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    y = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    group = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    group[0], group[1] = 0, 1
    return label, y, group


@settings(max_examples=200, deadline=None)
@given(grouped())
def test_binary_metrics_match_counting_oracle(data):
    label, y, group = data
    assert binary_metrics(label, y, group).as_dict() == _count_oracle(label, y, group)


class TestBinaryMetrics:
    def test_identical_groups(self):
        m = binary_metrics([1, 0, 1, 0], [1, 0, 1, 0], [0, 0, 1, 1])
        assert m.statistical_parity == 0 and m.equalized_odds == 0 and m.disparate_impact == 1

    def test_worked_example(self):
        # group 0 and group 1 per the hand-worked case
        label = [1, 1, 0, 0] + [1, 0, 0, 0]
        y = [1, 0, 1, 0] + [1, 1, 0, 0]
        g = [0] * 4 + [1] * 4
        m = binary_metrics(label, y, g)
        assert m.statistical_parity == 0.25
        assert m.equal_opportunity == 0
        assert m.false_positive_rate == 0.5
        assert m.equalized_odds == 0.5

    def test_empty_cell(self):
        m = binary_metrics([1, 0, 1, 0], [1, 0, 0, 0], [0, 0, 1, 1])
        assert m.equal_opportunity is None
        assert m.reasons["equal_opportunity"] == "empty conditioning cell"

    def test_di_zero_denominator(self):
        m = binary_metrics([1, 0, 0, 0], [1, 0, 1, 0], [0, 0, 1, 1])
        assert m.disparate_impact is None and "disparate_impact" in m.reasons

    def test_empty_group(self):
        with pytest.raises(ValueError, match="empty"):
            binary_metrics([1, 0], [1, 0], [1, 1])


class TestAbstention:
    def test_rate_zero_is_full(self, rng):
        n = 200
        label, y, g = rng.integers(0, 2, (3, n))
        c = abstention_curve(label, y, g, rng.random(n), [0.0])
        assert c.metrics[0] == binary_metrics(label, y, g)

    def test_misclassification_oracle(self, rng):
        n = 300
        label, y, g = rng.integers(0, 2, (3, n))
        wrong = (label != y).astype(float)
        r = wrong.mean()
        c = abstention_curve(label, y, g, wrong, [r])
        assert c.metrics[0].error_rate == 0

    def test_included_fraction_and_ties(self):
        sigma = np.array([0.5, 0.9, 0.5, 0.1, 0.5])
        assert list(F.abstention_order(sigma)) == [1, 0, 2, 4, 3]
        mask = F.inclusion_mask(sigma, 0.3)
        assert list(mask) == [False, False, True, True, True]
        c = abstention_curve([1, 0, 1, 0, 1], [1, 1, 0, 0, 1], [0, 1, 0, 1, 1], sigma, [0.3, 0.5])
        assert c.included == [0.6, 0.4]

    def test_empty_group_after_abstention(self):
        c = abstention_curve([1, 0, 1], [1, 0, 0], [0, 1, 1], [0.9, 0.1, 0.1], [0.3])
        assert c.metrics[0].error_rate is None

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            abstention_curve([1, 0], [1, 0], [0, 1], [0.1, 0.2], [1.0])

    def test_random_sigma_keeps_error(self):
        n, rates = 2000, [0.0, 0.1, 0.25]
        rng = np.random.default_rng(0)
        g = rng.integers(0, 2, n)
        y = rng.integers(0, 2, n)
        label = np.where(rng.random(n) < 0.8, y, 1 - y)
        errs = np.array([abstention_curve(label, y, g, np.random.default_rng(s).random(n), rates)
                         .column("error_rate") for s in range(20)])
        full = errs[0, 0]
        for j in range(1, len(rates)):
            assert abs(errs[:, j].mean() - full) <= 2 * errs[:, j].std(ddof=1)


def _curve(values):
    """Three-metric curve; ``values`` maps inclusion -> (error, sp, eodds)."""
    incs = sorted(values, reverse=True)
    rates = [round(1 - i, 10) for i in incs]
    ms = [FairnessMetrics(error_rate=values[i][0], statistical_parity=values[i][1],
                          equalized_odds=values[i][2]) for i in incs]
    return AbstentionCurve(rates, ms, incs)


class TestSelectRate:
    def test_constant_metrics_pick_full_inclusion(self):
        c = _curve({inc: (0.2, 0.1, 0.1) for inc in F.DEFAULT_INCLUSION})
        assert select_abstention_rate(c) == 0.0

    def test_decreasing_error_picks_lowest_inclusion(self):
        c = _curve({inc: (inc / 5, 0.1, 0.1) for inc in F.DEFAULT_INCLUSION})
        assert select_abstention_rate(c) == pytest.approx(0.25)

    def test_three_point_middle(self):
        # normalised sums: 1.0 -> 0+1+1=2, 0.9 -> 0.25+0+0.5=0.75, 0.8 -> 1+0.8+0=1.8
        c = _curve({1.0: (0.10, 0.30, 0.20), 0.9: (0.11, 0.20, 0.15), 0.8: (0.14, 0.28, 0.10)})
        rates, total = F.abstention_objective(c)
        np.testing.assert_allclose(total, [2.0, 0.75, 1.8])
        assert select_abstention_rate(c) == pytest.approx(0.1)

    def test_all_null(self):
        c = AbstentionCurve([0.0], [FairnessMetrics.null("x")], [1.0])
        with pytest.raises(ValueError):
            select_abstention_rate(c)


def _mix(rng, n):
    return MixtureCDF(rng.normal(0, 2, n), rng.uniform(0.2, 2, n))


class TestKS:
    def test_identical(self, rng):
        m = _mix(rng, 20)
        assert ks_uasp(m, MixtureCDF(m.mu.copy(), m.sigma.copy())) == 0

    def test_disjoint_points(self):
        assert ks_uasp(MixtureCDF([0.0], [0.0]), MixtureCDF([1.0], [0.0])) == 1

    def test_unit_normals(self):
        want = 2 * stats.norm.cdf(0.5) - 1
        got = ks_uasp(MixtureCDF([0.0], [1.0]), MixtureCDF([1.0], [1.0]))
        assert got == pytest.approx(want, abs=1e-8)
        assert want == pytest.approx(0.3829249225480262, abs=1e-15)

    def test_monte_carlo_unit_normals(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal(10**6)
        b = rng.standard_normal(10**6) + 1
        mc = stats.ks_2samp(a, b).statistic
        assert abs(mc - ks_uasp(MixtureCDF([0.0], [1.0]), MixtureCDF([1.0], [1.0]))) <= 0.01

    # scipy's p-value for tiny samples divides by zero; only its statistic is used
    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(-5, 5), min_size=1, max_size=30),
           st.lists(st.integers(-5, 5), min_size=1, max_size=30))
    def test_point_masses_equal_two_sample_ks(self, a, b):
        a, b = np.array(a, float), np.array(b, float)
        got = ks_uasp(MixtureCDF(a, np.zeros_like(a)), MixtureCDF(b, np.zeros_like(b)))
        exact = max(abs(Fraction(int(np.sum(a <= v)), len(a)) - Fraction(int(np.sum(b <= v)), len(b)))
                    for v in np.concatenate([a, b]))
        assert got == float(exact)
        assert got == pytest.approx(stats.ks_2samp(a, b, method="asymp").statistic, abs=1e-15)

    def test_symmetric_triangle_affine(self, rng):
        for _ in range(10):
            a, b, c = _mix(rng, 8), _mix(rng, 5), _mix(rng, 6)
            ab, ba = ks_uasp(a, b), ks_uasp(b, a)
            assert ab == pytest.approx(ba, abs=1e-7)
            assert ab <= ks_uasp(a, c) + ks_uasp(c, b) + 1e-7
            s, t = 2.5, -3.0
            moved = ks_uasp(MixtureCDF(s * a.mu + t, s * a.sigma), MixtureCDF(s * b.mu + t, s * b.sigma))
            assert moved == pytest.approx(ab, abs=1e-7)

    def test_decreasing_in_sigma(self):
        vals = [ks_uasp(MixtureCDF([0.0], [s]), MixtureCDF([0.7], [s])) for s in (0.1, 0.5, 1, 2, 4)]
        for s, v in zip((0.1, 0.5, 1, 2, 4), vals):
            assert v == pytest.approx(2 * stats.norm.cdf(0.7 / (2 * s)) - 1, abs=1e-8)
        assert all(x > y for x, y in zip(vals, vals[1:]))

    def test_mixed_atoms_and_normals(self):
        # F_a jumps to 1 at 0; F_b = Phi(y), sup is at the left limit of 0 or just after it
        got = ks_uasp(MixtureCDF([0.0], [0.0]), MixtureCDF([0.0], [1.0]))
        assert got == pytest.approx(0.5, abs=1e-9)

    def test_cdf_properties(self, rng):
        m = MixtureCDF(np.r_[rng.normal(size=5), 0.3], np.r_[rng.random(5), 0.0])
        ys = np.linspace(-30, 30, 2001)
        f = m(ys)
        assert f[0] == pytest.approx(0, abs=1e-12) and f[-1] == pytest.approx(1, abs=1e-12)
        assert np.all(np.diff(f) >= 0)
        assert m(0.3)[0] - m(np.nextafter(0.3, -1))[0] >= 1 / 6 - 1e-12

    def test_uasp_groups(self):
        with pytest.raises(ValueError):
            F.uasp([0.0, 1.0], [0.0, 0.0], [1, 1])


class TestWasserstein:
    def test_examples(self):
        assert wasserstein_1d([1.0, 2.0], [1.0, 2.0]) == 0
        assert wasserstein_1d([0.0], [1.0]) == 1
        assert wasserstein_1d([0.0, 1.0], [1.0, 2.0]) == 1

    def test_empty(self):
        with pytest.raises(ValueError):
            wasserstein_1d([], [1.0])

    def test_matches_scipy(self, rng):
        for _ in range(50):
            a = rng.normal(size=rng.integers(1, 40))
            b = rng.normal(1, 2, size=rng.integers(1, 40))
            assert wasserstein_1d(a, b) == pytest.approx(stats.wasserstein_distance(a, b), abs=1e-12)

    def test_equal_size_sorted_formula(self, rng):
        a, b = rng.normal(size=30), rng.normal(size=30)
        assert wasserstein_1d(a, b) == pytest.approx(np.mean(np.abs(np.sort(a) - np.sort(b))), abs=1e-12)


class TestFeatureShift:
    def test_all_included(self, rng):
        X = rng.normal(size=(100, 3))
        rep = F.feature_shift_report(X, np.ones(100, bool))
        np.testing.assert_array_equal(rep.distances, 0)

    def test_random_mask_small(self, rng):
        X = rng.normal(size=(10_000, 4))
        rep = F.feature_shift_report(X, rng.random(10_000) < 0.8)
        assert rep.distances.max() <= 0.05 * X.std(axis=0).min()

    def test_constructed_shift(self, rng):
        X = rng.normal(size=(2000, 5))
        rep = F.feature_shift_report(X, X[:, 3] > np.median(X[:, 3]), list("abcde"))
        assert rep.argmax == 3 and rep.top_feature == "d"

    def test_average_over_estimators(self, rng):
        X = rng.normal(size=(500, 2))
        m1, m2 = X[:, 0] > 0, X[:, 1] > 0
        rep = F.feature_shift_report(X, {"a": m1, "b": m2})
        np.testing.assert_allclose(rep.distances, (rep.per_estimator["a"] + rep.per_estimator["b"]) / 2)

    def test_empty_mask(self, rng):
        with pytest.raises(ValueError):
            F.feature_shift_report(rng.normal(size=(5, 2)), np.zeros(5, bool))
