import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uqfair import losses
from uqfair.losses import BetaNLL, FaithfulNLL, Logistic, NormalNLL, SquaredError, get_loss

EPS = 1e-5


def _points(loss, rng, n=100):
    y = rng.integers(0, 2, n).astype(float) if isinstance(loss, Logistic) else rng.normal(0, 2, n)
    s = np.column_stack([rng.normal(0, 2, n), rng.uniform(-1.5, 1.5, n)])[:, :loss.n_outputs]
    return y, s


def _fd(f, s, c):
    up, dn = s.copy(), s.copy()
    up[:, c] += EPS
    dn[:, c] -= EPS
    return (f(up) - f(dn)) / (2 * EPS)


def _rel_err(approx, exact):
    keep = np.abs(exact) > 1e-2     # finite differences are meaningless near zero
    return np.max(np.abs(approx[keep] - exact[keep]) / np.abs(exact[keep]))


ALL = [SquaredError(), Logistic(), NormalNLL(), BetaNLL(0.0), BetaNLL(0.5), BetaNLL(1.0), FaithfulNLL()]


@pytest.mark.parametrize("loss", ALL, ids=repr)
def test_gradient_matches_finite_differences(loss, rng):
    y, s = _points(loss, rng)
    g = loss.gradient(y, s)
    for c in range(loss.n_outputs):
        fd = _fd(lambda z: loss.objective(y, z, c, anchor=s), s, c)
        assert _rel_err(fd, g[:, c]) <= 1e-5


@pytest.mark.parametrize("loss", [SquaredError(), Logistic(), NormalNLL(), FaithfulNLL()], ids=repr)
def test_hessian_matches_finite_differences(loss, rng):
    y, s = _points(loss, rng)
    h = loss.hessian(y, s)
    for c in range(loss.n_outputs):
        fd = _fd(lambda z: loss.gradient(y, z)[:, c], s, c)
        assert _rel_err(fd, h[:, c]) <= 1e-5


def test_beta_hessian_scaled_by_weight(rng):
    y, s = _points(NormalNLL(), rng)
    w = np.exp(2 * 0.5 * s[:, 1])[:, None]
    np.testing.assert_allclose(BetaNLL(0.5).hessian(y, s), w * NormalNLL().hessian(y, s))


@pytest.mark.parametrize("loss", ALL, ids=repr)
def test_hessian_nonnegative(loss, rng):
    y, s = _points(loss, rng)
    assert np.all(loss.hessian(y, s) >= 0)


class TestSquaredError:
    def test_minimum(self):
        v, g, _ = losses.squared_error(3.0, 3.0)
        assert v[0] == 0 and g[0, 0] == 0

    def test_arithmetic(self):
        v, g, h = losses.squared_error(0.0, 2.0)
        assert (v[0], g[0, 0], h[0, 0]) == (2.0, 2.0, 1.0)

    def test_link(self):
        mu, sd = SquaredError().link(np.array([1.5, -2.0]))
        np.testing.assert_array_equal(mu, [1.5, -2.0])
        np.testing.assert_array_equal(sd, 0.0)


class TestLogistic:
    def test_symmetric_point(self):
        v, g, h = losses.logistic(1, 0.0)
        assert v[0] == pytest.approx(np.log(2), abs=1e-12)
        assert (g[0, 0], h[0, 0]) == (-0.5, 0.25)
        assert losses.logistic(0, 0.0)[1][0, 0] == 0.5

    def test_link_endpoints(self):
        L = Logistic()
        assert L.link(np.array([0.0]))[1][0] == 0.5
        _, sd = L.link(np.array([-800.0, 800.0]))
        np.testing.assert_array_equal(sd, 0.0)

    def test_rejects_nonbinary(self):
        with pytest.raises(ValueError):
            losses.logistic(0.5, 0.0)

    def test_matches_clipped_cross_entropy(self, rng):
        y = rng.integers(0, 2, 1000).astype(float)
        s = rng.uniform(-10, 10, 1000)
        p = np.clip(1 / (1 + np.exp(-s)), 1e-9, 1 - 1e-9)
        bce = -(y * np.log(p) + (1 - y) * np.log(1 - p))
        np.testing.assert_allclose(Logistic().value(y, s), bce, rtol=1e-12, atol=1e-12)


class TestNormalNLL:
    def test_residual_free(self):
        v, g, _ = losses.normal_nll(1.0, 1.0, 0.0)
        assert v[0] == 0 and g[0, 0] == 0 and g[0, 1] == 1

    def test_scale_stationarity(self):
        _, g, _ = losses.normal_nll(3.0, 1.0, np.log(2.0))
        assert g[0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_link(self):
        mu, sd = NormalNLL().link(np.array([[1.0, 0.0], [-1.0, np.log(3)]]))
        np.testing.assert_allclose(mu, [1.0, -1.0])
        np.testing.assert_allclose(sd, [1.0, 3.0])

    @given(st.floats(-50, 50), st.floats(-50, 50))
    def test_t_gradient_changes_sign_at_optimum(self, y, m):
        r = y - m
        if abs(r) < 1e-3:
            return
        t0 = np.log(abs(r))
        lo = losses.normal_nll(y, m, t0 - 1e-3)[1][0, 1]
        hi = losses.normal_nll(y, m, t0 + 1e-3)[1][0, 1]
        assert lo < 0 < hi

    def test_standard_sign(self):
        # +log sigma: a wider sigma with zero residual costs more
        assert losses.normal_nll(0.0, 0.0, 1.0)[0][0] > losses.normal_nll(0.0, 0.0, 0.0)[0][0]


class TestBetaNLL:
    @settings(max_examples=200)
    @given(st.floats(-20, 20), st.floats(-20, 20), st.floats(-3, 3))
    def test_beta_zero_is_normal(self, y, m, t):
        np.testing.assert_array_equal(losses.beta_nll(y, m, t, 0.0)[1],
                                      losses.normal_nll(y, m, t)[1])

    @settings(max_examples=200)
    @given(st.floats(-20, 20), st.floats(-20, 20), st.floats(-3, 3))
    def test_beta_one_mean_gradient_is_squared_error(self, y, m, t):
        g = losses.beta_nll(y, m, t, 1.0)[1][0, 0]
        assert g == pytest.approx(losses.squared_error(y, m)[1][0, 0], rel=1e-12, abs=1e-12)

    def test_arithmetic(self):
        g = losses.beta_nll(1.0, 0.0, np.log(4.0), 0.5)[1][0, 0]
        assert g == pytest.approx(-0.25, abs=1e-15)

    @pytest.mark.parametrize("beta", [-0.1, 1.1])
    def test_range(self, beta):
        with pytest.raises(ValueError):
            BetaNLL(beta)


class TestFaithfulNLL:
    def test_residual_free(self):
        g = losses.faithful_nll(2.0, 2.0, 0.7)[1]
        assert g[0, 0] == 0 and g[0, 1] == 1

    def test_mean_gradient_independent_of_scale(self):
        a = losses.faithful_nll(1.0, 3.0, 0.0)[1][0, 0]
        b = losses.faithful_nll(1.0, 3.0, 5.0)[1][0, 0]
        assert a == b == 2.0


def test_registry():
    for name in ("squared_error", "logistic", "normal_nll", "beta_nll", "faithful_nll"):
        assert get_loss(name).name == name
    assert get_loss("beta_nll", beta=0.25).beta == 0.25
    with pytest.raises(ValueError, match="unknown loss"):
        get_loss("hinge")


def test_base_scores():
    y = np.array([1.0, 2.0, 3.0, 6.0])
    assert SquaredError().base_score(y)[0] == 3.0
    np.testing.assert_allclose(NormalNLL().base_score(y), [3.0, np.log(np.std(y))])
    assert Logistic().base_score(np.array([1, 1, 1, 0.0]))[0] == pytest.approx(np.log(3))
