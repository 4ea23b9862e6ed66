"""Gaussian approximation to the latent-field posterior under a GMRF prior.

Hyperparameters are held fixed (precision scale ``tau = 1``, known ``sigma``
and ``phi``).  The posterior mode is found by damped Newton iterations on the
extended lattice and marginal variances of window cells are diagonal entries of
the inverse Hessian at the mode.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla
from scipy.stats import norm

from .grid_fft import CirculantBase, GridSpec, NotPositiveDefinite
from .lgcp_model import EXP_CLAMP, CellCounts, Scenario
from .mala import Q_LADDER, QuantileSummary

log = logging.getLogger(__name__)


class NonConvergence(RuntimeError):
    pass


@dataclass
class GaussianApproxConfig:
    tau: float = 1.0
    newton_tol: float = 1e-8
    max_newton: int = 50
    max_halvings: int = 30
    solve_block: int = 256


@dataclass(eq=False)
class ModeResult:
    grid: GridSpec
    mode: np.ndarray  # extended lattice
    marginal_sd: np.ndarray | None  # M x M
    newton_iters: int
    converged: bool
    grad_norm: float
    hessian: sparse.csc_matrix

    @property
    def mode_window(self) -> np.ndarray:
        return self.grid.restrict(self.mode)


def sparse_precision(prec: CirculantBase, tau: float = 1.0) -> sparse.csr_matrix:
    """Sparse ``N^2 x N^2`` block-circulant matrix from its base (row-major cell order)."""
    grid = prec.grid
    N = grid.N
    ii, jj = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    rows, cols, vals = [], [], []
    for a, b in zip(*np.nonzero(prec.base)):
        rows.append(ii * N + jj)
        cols.append(((ii + a) % N) * N + (jj + b) % N)
        vals.append(np.full(N * N, tau * prec.base[a, b]))
    Q = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N * N, N * N)
    )
    return Q.tocsr()


class _Objective:
    def __init__(self, data: CellCounts, sc: Scenario, Q: sparse.csr_matrix):
        grid = sc.grid
        self.Q = Q
        self.m = sc.cov.mean
        self.X = data.extended.ravel()
        self.rate = grid.extend(sc.mu * grid.cell_area * sc.surface.lam).ravel()

    def _exp(self, Y):
        return np.exp(np.minimum(Y, EXP_CLAMP))

    def value(self, Y):
        r = Y - self.m
        return float(-0.5 * r @ (self.Q @ r) + np.sum(Y * self.X - self.rate * self._exp(Y)))

    def grad(self, Y):
        return -(self.Q @ (Y - self.m)) + self.X - self.rate * self._exp(Y)

    def neg_hessian(self, Y):
        return (self.Q + sparse.diags(self.rate * self._exp(Y))).tocsc()


def _factorise(H: sparse.csc_matrix):
    try:
        return spla.splu(H, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise NotPositiveDefinite(float("nan"), f"factorisation failed: {exc}") from exc


def find_mode(data: CellCounts, sc: Scenario, prec: CirculantBase, cfg: GaussianApproxConfig | None = None) -> ModeResult:
    """Posterior mode of the latent field under the GMRF prior by damped Newton."""
    cfg = cfg or GaussianApproxConfig()
    grid = sc.grid
    Q = sparse_precision(prec, cfg.tau)
    obj = _Objective(data, sc, Q)
    Y = np.full(grid.N * grid.N, obj.m)
    f = obj.value(Y)
    g = obj.grad(Y)
    it = 0
    converged = bool(np.max(np.abs(g)) <= cfg.newton_tol)
    while not converged and it < cfg.max_newton:
        H = obj.neg_hessian(Y)
        step = _factorise(H).solve(g)
        t = 1.0
        for _ in range(cfg.max_halvings + 1):
            Y_new = Y + t * step
            f_new = obj.value(Y_new)
            if f_new >= f:
                break
            t *= 0.5
        else:
            log.warning("Newton line search failed to find ascent")
            break
        Y, f = Y_new, f_new
        g = obj.grad(Y)
        it += 1
        converged = bool(np.max(np.abs(g)) <= cfg.newton_tol)
    if not converged:
        log.warning("Newton iterations did not converge (|grad|_inf = %.3e)", np.max(np.abs(g)))
    return ModeResult(
        grid=grid,
        mode=Y.reshape(grid.shape),
        marginal_sd=None,
        newton_iters=it,
        converged=converged,
        grad_norm=float(np.max(np.abs(g))),
        hessian=obj.neg_hessian(Y),
    )


def marginal_sd(hessian: sparse.csc_matrix, grid: GridSpec, block: int = 256) -> np.ndarray:
    """Square roots of the window-cell diagonal of ``hessian^{-1}`` via one solve per cell."""
    lu = _factorise(hessian)
    N, M = grid.N, grid.M
    cells = (np.arange(M)[:, None] * N + np.arange(M)[None, :]).ravel()
    var = np.empty(len(cells))
    for start in range(0, len(cells), block):
        idx = cells[start : start + block]
        E = np.zeros((N * N, len(idx)))
        E[idx, np.arange(len(idx))] = 1.0
        Z = lu.solve(E)
        var[start : start + len(idx)] = Z[idx, np.arange(len(idx))]
    if np.any(var <= 0):
        raise NotPositiveDefinite(float(var.min()), "non-positive marginal variance")
    return np.sqrt(var).reshape(M, M)


def gaussian_approximation(
    data: CellCounts, sc: Scenario, prec: CirculantBase, cfg: GaussianApproxConfig | None = None
) -> ModeResult:
    cfg = cfg or GaussianApproxConfig()
    res = find_mode(data, sc, prec, cfg)
    res.marginal_sd = marginal_sd(res.hessian, sc.grid, cfg.solve_block)
    return res


def gaussian_quantiles(res: ModeResult, q_ladder=Q_LADDER) -> QuantileSummary:
    if res.marginal_sd is None:
        raise ValueError("marginal standard deviations have not been computed")
    q = np.asarray(q_ladder, dtype=float)
    z = norm.ppf(q)
    return QuantileSummary(q, res.mode_window[None] + z[:, None, None] * res.marginal_sd[None])
