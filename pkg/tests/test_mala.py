import numpy as np
import pytest
from scipy import special, stats

from lgcpgrid.covariance import CovarianceModel
from lgcpgrid.grid_fft import GridSpec
from lgcpgrid.lgcp_model import CellCounts, IntensitySurface, Posterior, Scenario, simulate_scenario
from lgcpgrid.mala import (
    H_FLOOR,
    Q_LADDER,
    ChainConfig,
    accept_prob,
    adapt_h,
    lag1_autocorrelation,
    log_hastings_ratio,
    propose,
    quantiles,
    run_chain,
)


def prior_only(M=2, sigma=0.5, phi=0.3):
    """Scenario whose posterior is the prior: zero counts and a negligible rate."""
    grid = GridSpec(M, 2)
    sc = Scenario(IntensitySurface.uniform(grid), 1e-12, CovarianceModel("exponential", sigma, phi))
    return sc, CellCounts(grid, np.zeros((M, M), dtype=int))


def data_scenario():
    grid = GridSpec(4, 2)
    sc = Scenario(IntensitySurface.uniform(grid), 200.0, CovarianceModel("exponential", 1.0, 0.3))
    _, counts = simulate_scenario(sc, np.random.default_rng(3))
    return sc, counts


def test_q_ladder():
    assert len(Q_LADDER) == 13 and Q_LADDER[0] == 0.01 and Q_LADDER[-1] == 0.99


class TestConfig:
    def test_defaults(self):
        cfg = ChainConfig()
        assert (cfg.n_iter, cfg.burn_in, cfg.thin, cfg.h_init, cfg.target_accept) == (100_000, 10_000, 90, 1.0, 0.574)
        assert cfg.n_retained == 1000

    @pytest.mark.parametrize("kw", [dict(burn_in=200, n_iter=100), dict(thin=0), dict(h_init=0), dict(target_accept=1.0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ChainConfig(**{"n_iter": 1000, "burn_in": 100, "thin": 10, **kw})


class TestProposal:
    def test_variance(self):
        rng = np.random.default_rng(0)
        x = np.zeros((200, 200))
        p = propose(x, np.zeros_like(x), 0.3, rng)
        assert abs(p.mean()) < 3 * 0.3 / 200
        assert p.var() == pytest.approx(0.09, rel=0.02)

    def test_drift(self):
        x = np.zeros((4, 4))
        g = np.ones((4, 4))

        class NoNoise:
            def standard_normal(self, shape):
                return np.zeros(shape)

        assert np.allclose(propose(x, g, 0.5, NoNoise()), 0.125)

    def test_rejects_bad_h(self):
        with pytest.raises(ValueError):
            propose(np.zeros(3), np.zeros(3), 0.0, np.random.default_rng())


class TestAcceptance:
    def test_equal_states(self):
        sc, counts = data_scenario()
        g = np.random.default_rng(1).standard_normal(sc.grid.shape)
        assert accept_prob(g, g.copy(), counts, sc, sc.base(), 0.2) == 1.0

    def test_antisymmetric(self):
        sc, counts = data_scenario()
        post = Posterior(counts, sc, sc.base())
        rng = np.random.default_rng(2)
        a, b = 0.3 * rng.standard_normal((2, *sc.grid.shape))
        la, ga, _ = post.value_and_grad(a)
        lb, gb, _ = post.value_and_grad(b)
        fwd = log_hastings_ratio(a, la, ga, b, lb, gb, 0.2)
        bwd = log_hastings_ratio(b, lb, gb, a, la, ga, 0.2)
        assert fwd == pytest.approx(-bwd, abs=1e-9)

    def test_in_unit_interval(self):
        sc, counts = data_scenario()
        rng = np.random.default_rng(4)
        for _ in range(20):
            a, b = rng.standard_normal((2, *sc.grid.shape))
            p = accept_prob(a, b, counts, sc, sc.base(), 0.5)
            assert 0.0 <= p <= 1.0


class TestAdaptation:
    def test_examples(self):
        assert adapt_h(1.0, 1.0, 1) == pytest.approx(1.426)
        assert adapt_h(1.0, 0.0, 4) == pytest.approx(1 - 0.287)
        assert adapt_h(0.5, 0.574, 10) == 0.5

    def test_floor(self):
        assert adapt_h(1e-3, 0.0, 1) == H_FLOOR

    def test_robbins_monro_schedule(self):
        i = np.arange(1, 10**6 + 1, dtype=float)
        eta = i**-0.5
        partial = np.cumsum(eta)
        # sum eta diverges (partial sums grow like 2 sqrt(n)); sum of eta^2.5 converges
        assert partial[-1] > 1000 and partial[-1] / partial[len(i) // 4 - 1] == pytest.approx(2, rel=1e-2)
        assert np.sum(eta**2.5) < special.zeta(1.25) + 1e-9

    def test_bad_iteration(self):
        with pytest.raises(ValueError):
            adapt_h(1.0, 0.5, 0)


class TestLag1:
    def test_iid_and_constant(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((20000, 2, 2))
        x[:, 1, 1] = 3.0
        r = lag1_autocorrelation(x)
        assert np.all(np.abs(r[[0, 0, 1], [0, 1, 0]]) < 0.03) and r[1, 1] == 0

    def test_ar1(self):
        rng = np.random.default_rng(1)
        e = rng.standard_normal(50000)
        x = np.empty_like(e)
        x[0] = e[0]
        for t in range(1, len(e)):
            x[t] = 0.7 * x[t - 1] + e[t]
        assert lag1_autocorrelation(x[:, None, None])[0, 0] == pytest.approx(0.7, abs=0.02)


@pytest.fixture(scope="module")
def prior_chain():
    sc, counts = prior_only()
    cfg = ChainConfig(n_iter=22000, burn_in=2000, thin=5)
    return sc, run_chain(counts, sc, sc.base(), cfg, np.random.default_rng(8))


class TestChain:

    def test_retention(self, prior_chain):
        _, out = prior_chain
        assert out.samples.shape == (4000, 2, 2)
        assert out.accept_trace.shape == out.h_trace.shape == (22000,)

    def test_adapts_to_target(self, prior_chain):
        _, out = prior_chain
        assert out.tail_acceptance() == pytest.approx(0.574, abs=0.05)

    def test_gaussian_marginals(self, prior_chain):
        sc, out = prior_chain
        x = out.samples[:, 0, 0]
        # thinned chain is close to independent; the KS test is on the known marginal
        p = stats.kstest(x, stats.norm(sc.cov.mean, sc.cov.sigma).cdf).pvalue
        assert p > 1e-3

    def test_quantiles_match_normal(self, prior_chain):
        sc, out = prior_chain
        qs = quantiles(out)
        expected = sc.cov.mean + sc.cov.sigma * stats.norm.ppf(qs.q)
        pooled = qs.c.mean(axis=(1, 2))
        assert np.max(np.abs(pooled - expected)) < 0.03

    def test_reproducible(self):
        sc, counts = data_scenario()
        cfg = ChainConfig(n_iter=600, burn_in=100, thin=5)
        a = run_chain(counts, sc, sc.base(), cfg, np.random.default_rng(42))
        b = run_chain(counts, sc, sc.base(), cfg, np.random.default_rng(42))
        assert np.array_equal(a.samples, b.samples) and np.array_equal(a.h_trace, b.h_trace)
        assert a.final_h == b.final_h

    def test_h_trace_starts_at_init(self):
        sc, counts = data_scenario()
        out = run_chain(counts, sc, sc.base(), ChainConfig(n_iter=300, burn_in=10, thin=5, h_init=0.7),
                        np.random.default_rng(0))
        assert out.h_trace[0] == 0.7 and np.all(out.h_trace >= H_FLOOR)


def test_quantiles_need_two_samples():
    with pytest.raises(ValueError):
        quantiles(np.zeros((1, 2, 2)))


def test_quantiles_linear_interpolation():
    s = np.arange(11, dtype=float)[:, None, None] * np.ones((1, 2, 2))
    qs = quantiles(s, (0.05, 0.5))
    assert np.allclose(qs.c[:, 0, 0], [0.5, 5.0])
