import numpy as np
import pytest

from conftest import dense_cov, rel_err, sym_sqrt
from lgcpgrid.covariance import (
    CovarianceModel,
    FieldState,
    NeedLargerExtension,
    WhiteNoiseState,
    cov_base,
    sample_field,
    whiten,
)
from lgcpgrid.grid_fft import CirculantBase, GridSpec


class TestCovarianceModel:
    def test_exponential_equals_matern_half(self):
        d = np.linspace(0, 2, 101)
        a = CovarianceModel("exponential", 1.3, 0.2)(d)
        b = CovarianceModel("matern12", 1.3, 0.2)(d)
        assert np.max(np.abs(a - b)) <= 1e-12

    @pytest.mark.parametrize("kind", ["exponential", "matern32", "matern52"])
    def test_shape(self, kind):
        m = CovarianceModel(kind, 2.0, 0.1)
        d = np.linspace(0, 5, 500)
        c = m(d)
        assert c[0] == pytest.approx(4.0)
        assert np.all(np.diff(c) <= 0)
        assert c[-1] < 1e-10

    def test_matern32_closed_form(self):
        m = CovarianceModel("matern32", 1.0, 0.5)
        d = 0.3
        s = np.sqrt(3) * d / 0.5
        assert m(d) == pytest.approx((1 + s) * np.exp(-s))

    def test_invalid(self):
        with pytest.raises(ValueError):
            CovarianceModel("gaussian", 1, 1)
        with pytest.raises(ValueError):
            CovarianceModel("exponential", 0.0, 1)

    def test_mean(self):
        assert CovarianceModel(sigma=2.0).mean == -2.0


class TestCovBase:
    def test_tiny_range_is_identity(self, grid8):
        b = cov_base(CovarianceModel("exponential", 1.0, 1e-9), grid8).base
        expected = np.zeros(grid8.shape)
        expected[0, 0] = 1
        assert np.allclose(b, expected)

    def test_hand_value(self, grid8):
        b = cov_base(CovarianceModel("exponential", 1.0, 0.1), grid8).base
        assert b[0, 1] == pytest.approx(np.exp(-2.5))
        assert b[1, 0] == b[0, 1] == b[-1, 0] == b[0, -1]

    def test_variance(self, grid8):
        assert cov_base(CovarianceModel("exponential", 2.0, 0.1), grid8).base[0, 0] == 4.0

    def test_dense_agreement(self, grid8):
        model = CovarianceModel("matern32", 1.0, 0.2)
        assert rel_err(cov_base(model, grid8).dense(), dense_cov(grid8, model)) < 1e-14

    def test_needs_extension(self):
        # smooth, long-range covariance on a short torus loses positive definiteness
        g = GridSpec(8, 2)
        with pytest.raises(NeedLargerExtension) as exc:
            cov_base(CovarianceModel("matern52", 1.0, 1.0), g)
        assert exc.value.min_eigenvalue <= 0


class TestSampling:
    def test_zero_noise(self, grid8):
        base = cov_base(CovarianceModel("exponential", 1.0, 0.1), grid8)
        f = sample_field(base, WhiteNoiseState(grid8, np.zeros(grid8.shape)), -0.5)
        assert np.all(f.Y_ext == -0.5)

    def test_identity_base(self, grid8, rng):
        b = np.zeros(grid8.shape)
        b[0, 0] = 1
        g = rng.standard_normal(grid8.shape)
        f = sample_field(CirculantBase(grid8, b), WhiteNoiseState(grid8, g), 0.0)
        assert np.allclose(f.Y_ext, g)

    def test_whiten_round_trip(self, grid8, rng):
        base = cov_base(CovarianceModel("exponential", 1.5, 0.2), grid8)
        g = WhiteNoiseState(grid8, rng.standard_normal(grid8.shape))
        back = whiten(base, sample_field(base, g, -1.125))
        assert rel_err(back.gamma, g.gamma) < 1e-8

    def test_whiten_mean_field(self, grid8):
        base = cov_base(CovarianceModel("exponential", 1.0, 0.1), grid8)
        w = whiten(base, FieldState(grid8, np.full(grid8.shape, -0.5), -0.5))
        assert np.allclose(w.gamma, 0)

    def test_whiten_dense(self, grid4, rng):
        model = CovarianceModel("exponential", 1.0, 0.1)
        base = cov_base(model, grid4)
        Y = rng.standard_normal(grid4.shape)
        w = whiten(base, FieldState(grid4, Y, 0.3))
        expected = np.linalg.solve(sym_sqrt(dense_cov(grid4, model)), (Y - 0.3).ravel())
        assert rel_err(w.gamma.ravel(), expected) < 1e-9

    def test_monte_carlo_covariance(self, grid4):
        model = CovarianceModel("exponential", 1.0, 0.5)
        base = cov_base(model, grid4)
        rng = np.random.default_rng(7)
        n = 100_000
        gam = rng.standard_normal((n, *grid4.shape))
        Y = sample_field(base, WhiteNoiseState(grid4, gam), 0.0).Y_ext.reshape(n, -1)
        emp = Y.T @ Y / n
        C = dense_cov(grid4, model)
        # per-entry standard error of a product-moment estimate; averaging entries that
        # share an offset can only shrink it
        se = np.sqrt((C**2 + np.outer(np.diag(C), np.diag(C))) / n)
        N = grid4.N
        for di in range(N):
            for dj in range(N):
                rows = [(i * N + j, ((i + di) % N) * N + (j + dj) % N) for i in range(N) for j in range(N)]
                e = np.mean([emp[r, c] for r, c in rows])
                assert abs(e - C[rows[0]]) <= 3 * se[rows[0]]
        assert np.mean(np.diag(emp)) == pytest.approx(1.0, abs=3 * np.sqrt(2 / n))
