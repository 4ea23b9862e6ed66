"""Lattice geometry and spectral algebra of symmetric block-circulant matrices.

A block-circulant matrix on an ``N x N`` torus is stored through its base
matrix ``b``: entry ``((i, j), (k, l))`` of the dense matrix equals
``b[(k - i) % N, (l - j) % N]``.  Its eigenvalues are the unnormalised 2-D DFT
of ``b`` and every product with the matrix is a circular convolution, so all
operations here cost ``O(N^2 log N)``.

Convention: forward transforms are unnormalised and inverse transforms carry
``1 / N^2`` (numpy / scipy default).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

SYMMETRY_RTOL = 1e-8


class InvalidBase(ValueError):
    """Base matrix is not toroidally symmetric (spectrum would be complex)."""


class NotPositiveDefinite(ValueError):
    """Spectrum has a non-positive eigenvalue."""

    def __init__(self, min_eigenvalue: float, msg: str | None = None):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(msg or f"matrix is not positive definite (min eigenvalue {min_eigenvalue:.3e})")


@dataclass(frozen=True)
class GridSpec:
    """Regular lattice over a rectangular window, extended and wrapped on a torus.

    ``M`` cells per side cover the window; the extended lattice has
    ``ext_factor * M`` cells per side with the same cell size, the window
    occupying the block ``[0:M, 0:M]``.
    """

    M: int
    ext_factor: int = 2
    window: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)

    def __post_init__(self):
        M = self.M
        if not isinstance(M, (int, np.integer)) or M < 2 or (M & (M - 1)) != 0:
            raise ValueError(f"M must be a power of two >= 2, got {M!r}")
        if self.ext_factor not in (2, 4):
            raise ValueError(f"ext_factor must be 2 or 4, got {self.ext_factor!r}")
        x0, x1, y0, y1 = self.window
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"degenerate window {self.window!r}")

    @property
    def N(self) -> int:
        """Cells per side of the extended lattice."""
        return self.ext_factor * self.M

    @property
    def shape(self) -> tuple[int, int]:
        return (self.N, self.N)

    @property
    def cell_width(self) -> float:
        return (self.window[1] - self.window[0]) / self.M

    @property
    def cell_height(self) -> float:
        return (self.window[3] - self.window[2]) / self.M

    @property
    def cell_area(self) -> float:
        return self.cell_width * self.cell_height

    @property
    def M_in(self) -> int:
        return self.M * self.M

    @cached_property
    def window_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[: self.M, : self.M] = True
        mask.flags.writeable = False
        return mask

    def centroids(self) -> tuple[np.ndarray, np.ndarray]:
        """x and y coordinates of the window cell centroids, each ``M x M``.

        Axis 0 indexes x, axis 1 indexes y.
        """
        xs = self.window[0] + (np.arange(self.M) + 0.5) * self.cell_width
        ys = self.window[2] + (np.arange(self.M) + 0.5) * self.cell_height
        return np.meshgrid(xs, ys, indexing="ij")

    def toral_offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """Wrapped absolute index offsets from the origin, each ``N x N``."""
        k = np.arange(self.N)
        k = np.minimum(k, self.N - k)
        return np.meshgrid(k, k, indexing="ij")

    def toral_distance_grid(self, cell_units: bool = False) -> np.ndarray:
        """Toroidal distance from cell (0, 0) to every cell of the extended lattice."""
        di, dj = self.toral_offsets()
        if cell_units:
            return np.hypot(di, dj).astype(float)
        return np.hypot(di * self.cell_width, dj * self.cell_height)

    def extend(self, window_values: np.ndarray, fill: float = 0.0) -> np.ndarray:
        """Embed an ``M x M`` array into the extended lattice."""
        window_values = np.asarray(window_values)
        if window_values.shape != (self.M, self.M):
            raise ValueError(f"expected shape {(self.M, self.M)}, got {window_values.shape}")
        out = np.full(self.shape, fill, dtype=np.result_type(window_values, float))
        out[: self.M, : self.M] = window_values
        return out

    def restrict(self, values: np.ndarray) -> np.ndarray:
        """Window block of an extended-lattice array."""
        values = np.asarray(values)
        if values.shape[-2:] != self.shape:
            raise ValueError(f"expected trailing shape {self.shape}, got {values.shape}")
        return values[..., : self.M, : self.M]

    def to_dict(self) -> dict:
        return {"M": int(self.M), "ext_factor": int(self.ext_factor), "window": list(self.window)}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        window = tuple(float(x) for x in d.get("window", (0.0, 1.0, 0.0, 1.0)))
        return cls(M=int(d["M"]), ext_factor=int(d.get("ext_factor", 2)), window=window)


def toral_distance(grid: GridSpec, cell_a, cell_b) -> float:
    """Shortest distance between two cell centroids of the extended lattice on the torus."""
    N = grid.N
    for idx in (*cell_a, *cell_b):
        if not 0 <= idx < N:
            raise IndexError(f"cell index {idx} outside extended lattice of side {N}")
    di = abs(cell_a[0] - cell_b[0])
    dj = abs(cell_a[1] - cell_b[1])
    dx = min(di, N - di) * grid.cell_width
    dy = min(dj, N - dj) * grid.cell_height
    return float(np.hypot(dx, dy))


@dataclass(frozen=True, eq=False)
class Spectrum:
    grid: GridSpec
    values: np.ndarray

    @property
    def min(self) -> float:
        return float(self.values.min())

    @cached_property
    def half(self) -> np.ndarray:
        # eigenvalues on the rfft2 half-plane
        return self.values[:, : self.grid.N // 2 + 1]


@dataclass(frozen=True, eq=False)
class CirculantBase:
    """Base matrix of a symmetric block-circulant matrix on ``grid``."""

    grid: GridSpec
    base: np.ndarray = field(repr=False)

    def __post_init__(self):
        base = np.array(self.base, dtype=float)
        if base.shape != self.grid.shape:
            raise ValueError(f"base shape {base.shape} does not match grid {self.grid.shape}")
        base.flags.writeable = False
        object.__setattr__(self, "base", base)

    @cached_property
    def spectrum(self) -> Spectrum:
        return spectrum(self)

    def __mul__(self, s: float) -> "CirculantBase":
        return CirculantBase(self.grid, self.base * s)

    __rmul__ = __mul__

    def dense(self) -> np.ndarray:
        """Assemble the full ``N^2 x N^2`` matrix (row-major vec). Small grids only."""
        N = self.grid.N
        if N > 32:
            raise ValueError("dense assembly is meant for small test grids")
        i, j = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
        i, j = i.ravel(), j.ravel()
        return self.base[(i[None, :] - i[:, None]) % N, (j[None, :] - j[:, None]) % N]


def spectrum(base: CirculantBase) -> Spectrum:
    """Eigenvalues of the block-circulant matrix: the unnormalised DFT of its base."""
    f = sfft.fft2(base.base)
    scale = np.abs(f.real).max()
    imag = np.abs(f.imag).max()
    if scale > 0 and imag > SYMMETRY_RTOL * scale:
        raise InvalidBase(f"base is not toroidally symmetric (max |imag|/max |real| = {imag / scale:.2e})")
    values = np.ascontiguousarray(f.real)
    values.flags.writeable = False
    return Spectrum(base.grid, values)


def _check_shape(base: CirculantBase, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-2:] != base.grid.shape:
        raise ValueError(f"vector shape {v.shape} does not match grid {base.grid.shape}")
    return v


def _apply(spec: Spectrum, v: np.ndarray, fn=None) -> np.ndarray:
    lam = spec.half if fn is None else fn(spec.half)
    return sfft.irfft2(lam * sfft.rfft2(v), s=v.shape[-2:])


def _positive(spec: Spectrum) -> Spectrum:
    if spec.min <= 0:
        raise NotPositiveDefinite(spec.min)
    return spec


def matvec(base: CirculantBase, v: np.ndarray) -> np.ndarray:
    """Product ``A v`` with ``v`` an ``N x N`` grid (leading batch axes allowed)."""
    return _apply(base.spectrum, _check_shape(base, v))


def sqrt_matvec(base: CirculantBase, v: np.ndarray) -> np.ndarray:
    """Product with the symmetric square root ``A^{1/2} v``."""
    return _apply(_positive(base.spectrum), _check_shape(base, v), np.sqrt)


def inv_matvec(base: CirculantBase, v: np.ndarray) -> np.ndarray:
    """Solve ``A x = v``."""
    return _apply(_positive(base.spectrum), _check_shape(base, v), np.reciprocal)


def inv_sqrt_matvec(base: CirculantBase, v: np.ndarray) -> np.ndarray:
    """Product with ``A^{-1/2}``."""
    return _apply(_positive(base.spectrum), _check_shape(base, v), lambda lam: 1.0 / np.sqrt(lam))
