import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_toral_distance, dense_cov, rel_err, sym_sqrt
from lgcpgrid.covariance import CovarianceModel, cov_base
from lgcpgrid.grid_fft import (
    CirculantBase,
    GridSpec,
    InvalidBase,
    NotPositiveDefinite,
    inv_matvec,
    inv_sqrt_matvec,
    matvec,
    spectrum,
    sqrt_matvec,
    toral_distance,
)


def exp_base(grid, sigma=1.0, phi=0.1):
    return cov_base(CovarianceModel("exponential", sigma, phi), grid)


def test_gridspec_derived_fields():
    g = GridSpec(64, 2)
    assert g.N == 128
    assert g.cell_area == pytest.approx(1 / 64**2)
    assert g.M_in == 64 * 64 == g.window_mask.sum()
    assert g.window_mask[:64, :64].all()


@pytest.mark.parametrize("M,ext", [(3, 2), (6, 2), (1, 2), (8, 3)])
def test_gridspec_rejects_bad_sizes(M, ext):
    with pytest.raises(ValueError):
        GridSpec(M, ext)


class TestToralDistance:
    def test_identity(self, grid8):
        assert toral_distance(grid8, (0, 0), (0, 0)) == 0.0

    def test_wraparound(self, grid8):
        assert toral_distance(grid8, (0, 0), (7, 0)) == pytest.approx(0.25)

    def test_diameter_16(self):
        g = GridSpec(8, 2)
        expected = brute_toral_distance(g, (0, 0), (8, 8))
        assert expected == pytest.approx(np.sqrt(2) * 8 * g.cell_width)
        assert toral_distance(g, (0, 0), (8, 8)) == pytest.approx(expected)

    def test_matches_enumeration_everywhere(self, grid8):
        for a in [(0, 0), (3, 5), (7, 7)]:
            for i in range(8):
                for j in range(8):
                    assert toral_distance(grid8, a, (i, j)) == pytest.approx(brute_toral_distance(grid8, a, (i, j)))
                    assert toral_distance(grid8, a, (i, j)) == toral_distance(grid8, (i, j), a)

    def test_out_of_range(self, grid8):
        with pytest.raises(IndexError):
            toral_distance(grid8, (0, 0), (8, 0))


class TestSpectrum:
    def test_identity(self, grid8):
        b = np.zeros(grid8.shape)
        b[0, 0] = 1
        assert np.allclose(spectrum(CirculantBase(grid8, b)).values, 1.0)

    def test_constant(self, grid8):
        s = spectrum(CirculantBase(grid8, np.full(grid8.shape, 0.3))).values.copy()
        assert s[0, 0] == pytest.approx(64 * 0.3)
        s[0, 0] = 0
        assert np.allclose(s, 0)

    @pytest.mark.parametrize("M", [2, 4])
    def test_dense_eigenvalues(self, M):
        g = GridSpec(M, 2)
        model = CovarianceModel("exponential", 1.0, 0.1)
        dense = dense_cov(g, model)
        ev = np.sort(np.linalg.eigvalsh(dense))
        assert rel_err(np.sort(spectrum(cov_base(model, g)).values.ravel()), ev) < 1e-10

    def test_asymmetric_base_rejected(self, grid8):
        b = np.zeros(grid8.shape)
        b[0, 1] = 1.0
        with pytest.raises(InvalidBase):
            spectrum(CirculantBase(grid8, b))

    def test_linearity(self, grid8):
        b1 = exp_base(grid8, 1.0, 0.1)
        b2 = exp_base(grid8, 0.7, 0.3)
        combo = CirculantBase(grid8, 2.5 * b1.base + b2.base)
        assert np.allclose(combo.spectrum.values, 2.5 * b1.spectrum.values + b2.spectrum.values, rtol=0, atol=1e-12)


class TestSpectralOps:
    @pytest.mark.parametrize("M", [2, 4])
    def test_against_dense(self, M, rng):
        g = GridSpec(M, 2)
        model = CovarianceModel("exponential", 1.0, 0.1)
        A = dense_cov(g, model)
        base = cov_base(model, g)
        v = rng.standard_normal(g.shape)
        vv = v.ravel()
        assert rel_err(matvec(base, v).ravel(), A @ vv) < 1e-10
        assert rel_err(sqrt_matvec(base, v).ravel(), sym_sqrt(A) @ vv) < 1e-10
        assert rel_err(inv_matvec(base, v).ravel(), np.linalg.solve(A, vv)) < 1e-10
        assert rel_err(inv_sqrt_matvec(base, v).ravel(), np.linalg.solve(sym_sqrt(A), vv)) < 1e-10

    def test_identity_ops(self, grid8, rng):
        b = np.zeros(grid8.shape)
        b[0, 0] = 1
        base = CirculantBase(grid8, b)
        v = rng.standard_normal(grid8.shape)
        for op in (matvec, sqrt_matvec, inv_matvec, inv_sqrt_matvec):
            assert np.allclose(op(base, v), v)

    def test_homogeneity(self, grid8, rng):
        base = exp_base(grid8)
        v = rng.standard_normal(grid8.shape)
        assert np.allclose(matvec(2 * base, v), 2 * matvec(base, v), rtol=1e-14, atol=1e-14)

    def test_shape_mismatch(self, grid8):
        with pytest.raises(ValueError):
            matvec(exp_base(grid8), np.zeros((4, 4)))

    def test_not_positive_definite(self, grid8, rng):
        b = np.zeros(grid8.shape)
        b[0, 0] = 1.0
        b[1, 0] = b[-1, 0] = b[0, 1] = b[0, -1] = 0.5  # eigenvalue 1 - 2 < 0
        base = CirculantBase(grid8, b)
        with pytest.raises(NotPositiveDefinite) as exc:
            sqrt_matvec(base, rng.standard_normal(grid8.shape))
        assert exc.value.min_eigenvalue == pytest.approx(-1.0)


@settings(max_examples=40, deadline=None)
@given(
    M=st.sampled_from([2, 4, 8]),
    sigma=st.floats(0.2, 3.0),
    phi=st.floats(0.02, 0.3),
    seed=st.integers(0, 2**32 - 1),
)
def test_spectral_identities(M, sigma, phi, seed):
    g = GridSpec(M, 4 if phi > 0.15 * M else 2)
    try:
        base = cov_base(CovarianceModel("exponential", sigma, phi), g)
    except ValueError:
        return
    v = np.random.default_rng(seed).standard_normal(g.shape)
    assert rel_err(matvec(base, inv_matvec(base, v)), v) < 1e-8
    assert rel_err(sqrt_matvec(base, sqrt_matvec(base, v)), matvec(base, v)) < 1e-8
    assert rel_err(inv_sqrt_matvec(base, sqrt_matvec(base, v)), v) < 1e-8
