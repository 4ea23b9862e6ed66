"""Isotropic covariance models, covariance bases on the torus and circulant-embedding simulation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid_fft import (
    CirculantBase,
    GridSpec,
    inv_sqrt_matvec,
    sqrt_matvec,
)

KINDS = ("exponential", "matern12", "matern32", "matern52")


class NeedLargerExtension(ValueError):
    """Circulant embedding is not positive definite on this lattice."""

    def __init__(self, min_eigenvalue: float, grid: GridSpec):
        self.min_eigenvalue = float(min_eigenvalue)
        self.grid = grid
        hint = "retry with ext_factor=4" if grid.ext_factor == 2 else "refine the window or shorten the range"
        super().__init__(
            f"covariance embedding on {grid.N}x{grid.N} torus has min eigenvalue {min_eigenvalue:.3e}; {hint}"
        )


@dataclass(frozen=True)
class CovarianceModel:
    """``cov(d) = sigma^2 r(d / phi)`` for a half-integer Matern correlation ``r``.

    ``kind="exponential"`` is the Matern nu=1/2 member.
    """

    kind: str = "exponential"
    sigma: float = 1.0
    phi: float = 0.1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown covariance kind {self.kind!r}; expected one of {KINDS}")
        if not (self.sigma > 0 and self.phi > 0):
            raise ValueError("sigma and phi must be positive")

    @property
    def variance(self) -> float:
        return self.sigma**2

    @property
    def mean(self) -> float:
        """Field mean giving ``E[exp(Y)] = 1``."""
        return -0.5 * self.sigma**2

    def correlation(self, d):
        t = np.asarray(d, dtype=float) / self.phi
        e = np.exp(-t)
        if self.kind in ("exponential", "matern12"):
            return e
        if self.kind == "matern32":
            s = np.sqrt(3.0) * t
            return (1.0 + s) * np.exp(-s)
        s = np.sqrt(5.0) * t
        return (1.0 + s + s * s / 3.0) * np.exp(-s)

    def __call__(self, d):
        return self.variance * self.correlation(d)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sigma": float(self.sigma), "phi": float(self.phi)}

    @classmethod
    def from_dict(cls, d: dict) -> "CovarianceModel":
        return cls(kind=d.get("kind", "exponential"), sigma=float(d["sigma"]), phi=float(d["phi"]))


@dataclass(frozen=True, eq=False)
class FieldState:
    grid: GridSpec
    Y_ext: np.ndarray
    mean: float

    @property
    def window(self) -> np.ndarray:
        return self.grid.restrict(self.Y_ext)


@dataclass(frozen=True, eq=False)
class WhiteNoiseState:
    grid: GridSpec
    gamma: np.ndarray

    @classmethod
    def draw(cls, grid: GridSpec, rng: np.random.Generator) -> "WhiteNoiseState":
        return cls(grid, rng.standard_normal(grid.shape))


def cov_base(model: CovarianceModel, grid: GridSpec) -> CirculantBase:
    """Covariance base of the field on the torus; raises if the embedding is not SPD."""
    base = CirculantBase(grid, model(grid.toral_distance_grid()))
    lam_min = base.spectrum.min
    if lam_min <= 0:
        raise NeedLargerExtension(lam_min, grid)
    return base


def sample_field(base: CirculantBase, gamma: WhiteNoiseState, mean: float) -> FieldState:
    """``Y_ext = mean + Sigma^{1/2} gamma``."""
    return FieldState(base.grid, mean + sqrt_matvec(base, gamma.gamma), mean)


def whiten(base: CirculantBase, field: FieldState) -> WhiteNoiseState:
    """Inverse of :func:`sample_field`."""
    return WhiteNoiseState(base.grid, inv_sqrt_matvec(base, field.Y_ext - field.mean))
