"""Metropolis-adjusted Langevin sampling of the whitened latent field.

The step size ``h`` follows a Robbins-Monro recursion driving the per-step
acceptance probability towards ``target_accept``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .grid_fft import CirculantBase
from .lgcp_model import CellCounts, Posterior, Scenario

log = logging.getLogger(__name__)

Q_LADDER = (0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99)
H_FLOOR = 1e-10


@dataclass
class ChainConfig:
    n_iter: int = 100_000
    burn_in: int = 10_000
    thin: int = 90
    h_init: float = 1.0
    target_accept: float = 0.574
    adapt_C: float = 1.0
    adapt_exp: float = 0.5

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("need 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.n_retained < 2:
            raise ValueError("configuration retains fewer than 2 samples")
        if not self.h_init > 0:
            raise ValueError("h_init must be positive")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if not 0.5 <= self.adapt_exp <= 1:
            raise ValueError("adapt_exp must lie in [0.5, 1]")

    @property
    def n_retained(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin


@dataclass(eq=False)
class ChainOutput:
    samples: np.ndarray  # retained Y over window cells, (retained, M, M)
    accept_trace: np.ndarray
    h_trace: np.ndarray
    final_h: float
    lag1: np.ndarray
    n_accepted: int
    n_nonfinite: int = 0
    n_clamped: int = 0

    @property
    def posterior_mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def tail_acceptance(self, fraction: float = 0.1) -> float:
        n = max(1, int(round(len(self.accept_trace) * fraction)))
        return float(self.accept_trace[-n:].mean())


@dataclass(eq=False)
class QuantileSummary:
    q: np.ndarray
    c: np.ndarray  # (len(q), M, M)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        if self.c.shape[0] != len(self.q):
            raise ValueError("thresholds must have one slice per probability")


def propose(gamma: np.ndarray, grad: np.ndarray, h: float, rng: np.random.Generator) -> np.ndarray:
    if not h > 0:
        raise ValueError("h must be positive")
    return gamma + 0.5 * h * h * grad + h * rng.standard_normal(gamma.shape)


def _log_q(a: np.ndarray, grad_a: np.ndarray, b: np.ndarray, h: float) -> float:
    # an overflowing residual gives -inf, i.e. the reverse move is impossible and alpha = 0
    with np.errstate(over="ignore"):
        r = b - a - 0.5 * h * h * grad_a
        return -float(np.sum(r * r)) / (2.0 * h * h)


def log_hastings_ratio(a, lp_a, grad_a, b, lp_b, grad_b, h: float) -> float:
    """``log[pi(b) q(b, a) / (pi(a) q(a, b))]``."""
    return (lp_b - lp_a) + _log_q(b, grad_b, a, h) - _log_q(a, grad_a, b, h)


def _prob_from_log_ratio(log_r: float) -> float:
    if not math.isfinite(log_r):
        if log_r == math.inf:
            return 1.0
        return 0.0
    return 1.0 if log_r >= 0 else math.exp(log_r)


def accept_prob(gamma, gamma_new, data: CellCounts, sc: Scenario, base: CirculantBase, h: float) -> float:
    post = Posterior(data, sc, base)
    lp_a, g_a, _ = post.value_and_grad(gamma)
    lp_b, g_b, _ = post.value_and_grad(gamma_new)
    if not (math.isfinite(lp_a) and math.isfinite(lp_b)):
        log.warning("non-finite log-target; treating proposal as rejected")
        return 0.0
    if np.array_equal(np.asarray(gamma), np.asarray(gamma_new)):
        return 1.0
    return _prob_from_log_ratio(log_hastings_ratio(gamma, lp_a, g_a, gamma_new, lp_b, g_b, h))


def adapt_h(h: float, accepted_prob: float, iteration: int, target: float = 0.574, C: float = 1.0, exponent: float = 0.5) -> float:
    """One Robbins-Monro step ``h + C / iteration**exponent * (alpha - target)``, floored at 1e-10."""
    if iteration < 1:
        raise ValueError("iteration must be >= 1")
    return max(h + C / iteration**exponent * (accepted_prob - target), H_FLOOR)


def lag1_autocorrelation(samples: np.ndarray) -> np.ndarray:
    """Per-cell lag-1 autocorrelation along axis 0; constant cells give 0."""
    x = samples - samples.mean(axis=0)
    num = np.sum(x[1:] * x[:-1], axis=0)
    den = np.sum(x * x, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, num / den, 0.0)
    return np.clip(r, -1.0, 1.0)


def run_chain(data: CellCounts, sc: Scenario, base: CirculantBase, cfg: ChainConfig, rng: np.random.Generator) -> ChainOutput:
    post = Posterior(data, sc, base)
    grid = sc.grid
    M = grid.M

    gamma = np.zeros(grid.shape)
    lp, grad, Y = post.value_and_grad(gamma)
    h = cfg.h_init

    samples = np.empty((cfg.n_retained, M, M))
    accept_trace = np.empty(cfg.n_iter)
    h_trace = np.empty(cfg.n_iter)
    n_acc = n_bad = 0
    k = 0
    for i in range(1, cfg.n_iter + 1):
        prop = gamma + 0.5 * h * h * grad + h * rng.standard_normal(grid.shape)
        lp_new, grad_new, Y_new = post.value_and_grad(prop)
        if math.isfinite(lp_new):
            alpha = _prob_from_log_ratio(log_hastings_ratio(gamma, lp, grad, prop, lp_new, grad_new, h))
        else:
            n_bad += 1
            alpha = 0.0
        if rng.random() < alpha:
            gamma, lp, grad, Y = prop, lp_new, grad_new, Y_new
            n_acc += 1
        accept_trace[i - 1] = alpha
        h_trace[i - 1] = h
        h = adapt_h(h, alpha, i + 1, cfg.target_accept, cfg.adapt_C, cfg.adapt_exp)
        if i > cfg.burn_in and (i - cfg.burn_in) % cfg.thin == 0:
            samples[k] = Y[:M, :M]
            k += 1

    if n_bad:
        log.warning("%d proposals had a non-finite log-target and were rejected", n_bad)
    return ChainOutput(
        samples=samples,
        accept_trace=accept_trace,
        h_trace=h_trace,
        final_h=float(h),
        lag1=lag1_autocorrelation(samples),
        n_accepted=n_acc,
        n_nonfinite=n_bad,
        n_clamped=post.n_clamped,
    )


def quantiles(out, q_ladder=Q_LADDER) -> QuantileSummary:
    """Per-cell empirical quantiles (linear interpolation between order statistics)."""
    samples = out.samples if isinstance(out, ChainOutput) else np.asarray(out)
    if samples.shape[0] < 2:
        raise ValueError("need at least 2 retained samples")
    q = np.asarray(q_ladder, dtype=float)
    return QuantileSummary(q, np.quantile(samples, q, axis=0, method="linear"))
