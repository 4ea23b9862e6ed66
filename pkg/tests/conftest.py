import itertools

import numpy as np
import pytest

from lgcpgrid.grid_fft import GridSpec


def cells(N):
    return list(itertools.product(range(N), range(N)))


def brute_toral_distance(grid, a, b):
    """Minimum over all wrap images of the Euclidean distance between two cells."""
    N = grid.N
    best = np.inf
    for si in (-1, 0, 1):
        for sj in (-1, 0, 1):
            dx = (a[0] - b[0] + si * N) * grid.cell_width
            dy = (a[1] - b[1] + sj * N) * grid.cell_height
            best = min(best, np.hypot(dx, dy))
    return best


def dense_cov(grid, cov):
    """Covariance matrix assembled pair by pair from toral distances (row-major cell order)."""
    cs = cells(grid.N)
    return np.array([[cov(brute_toral_distance(grid, a, b)) for b in cs] for a in cs])


def dense_from_offsets(grid, entries):
    """Matrix with entry ``entries[(di, dj)]`` between cells whose wrapped offset is ``(di, dj)``."""
    N = grid.N
    cs = cells(N)
    A = np.zeros((N * N, N * N))
    for r, a in enumerate(cs):
        for c, b in enumerate(cs):
            A[r, c] = entries.get(((b[0] - a[0]) % N, (b[1] - a[1]) % N), 0.0)
    return A


def sym_sqrt(A):
    w, V = np.linalg.eigh(A)
    return (V * np.sqrt(w)) @ V.T


def rel_err(a, b):
    return np.max(np.abs(np.asarray(a) - np.asarray(b))) / max(np.max(np.abs(b)), 1e-300)


@pytest.fixture
def grid4():
    """4x4 extended lattice."""
    return GridSpec(2, 2)


@pytest.fixture
def grid8():
    """8x8 extended lattice over the unit square (cell width 1/4)."""
    return GridSpec(4, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
