"""Discretised spatial log-Gaussian Cox process on a lattice.

Counts in window cell ``s`` are Poisson with mean ``mu * C_A * lambda(s) * exp(Y(s))``
where ``Y`` is a stationary Gaussian field with mean ``-sigma^2/2``.  Inference
works in whitened coordinates ``gamma`` with ``Y_ext = mean + Sigma^{1/2} gamma``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .covariance import CovarianceModel, FieldState, WhiteNoiseState, cov_base, sample_field
from .grid_fft import CirculantBase, GridSpec, sqrt_matvec

EXP_CLAMP = 700.0


@dataclass(frozen=True, eq=False)
class IntensitySurface:
    """Fixed spatial component over window cells, normalised to unit integral."""

    grid: GridSpec
    lam: np.ndarray

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float)
        if lam.shape != (self.grid.M, self.grid.M):
            raise ValueError(f"lambda must be {self.grid.M}x{self.grid.M}, got {lam.shape}")
        if np.any(lam < 0):
            raise ValueError("lambda must be non-negative")
        mass = lam.sum() * self.grid.cell_area
        if not abs(mass - 1.0) <= 1e-10:
            raise ValueError(f"lambda integrates to {mass}, expected 1")
        lam.flags.writeable = False
        object.__setattr__(self, "lam", lam)

    @classmethod
    def uniform(cls, grid: GridSpec) -> "IntensitySurface":
        return cls(grid, np.full((grid.M, grid.M), 1.0 / (grid.M_in * grid.cell_area)))

    @classmethod
    def normalised(cls, grid: GridSpec, raw: np.ndarray) -> "IntensitySurface":
        raw = np.asarray(raw, dtype=float)
        if np.any(raw < 0) or not raw.sum() > 0:
            raise ValueError("raw intensity must be non-negative with positive mass")
        return cls(grid, raw / (raw.sum() * grid.cell_area))


@dataclass(frozen=True, eq=False)
class Scenario:
    surface: IntensitySurface
    mu: float
    cov: CovarianceModel
    seed: int = 0
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")

    @property
    def grid(self) -> GridSpec:
        return self.surface.grid

    def base(self) -> CirculantBase:
        return cov_base(self.cov, self.grid)


@dataclass(frozen=True, eq=False)
class CellCounts:
    grid: GridSpec
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.shape != (self.grid.M, self.grid.M):
            raise ValueError(f"counts must be {self.grid.M}x{self.grid.M}, got {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        counts = counts.astype(np.int64)
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def extended(self) -> np.ndarray:
        return self.grid.extend(self.counts.astype(float))

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def build_lambda(points, bandwidth: float, grid: GridSpec) -> IntensitySurface:
    """Gaussian-kernel smoothing of ``points`` evaluated at cell centroids, normalised to unit mass."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("need at least one point")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    x0, x1, y0, y1 = grid.window
    if np.any((pts[:, 0] < x0) | (pts[:, 0] > x1) | (pts[:, 1] < y0) | (pts[:, 1] > y1)):
        raise ValueError("points must lie inside the window")
    cx, cy = grid.centroids()
    raw = np.zeros_like(cx)
    for px, py in pts:
        raw += np.exp(-((cx - px) ** 2 + (cy - py) ** 2) / (2.0 * bandwidth**2))
    return IntensitySurface.normalised(grid, raw)


def simulate_scenario(sc: Scenario, rng: np.random.Generator) -> tuple[FieldState, CellCounts]:
    grid = sc.grid
    gamma = WhiteNoiseState.draw(grid, rng)
    truth = sample_field(sc.base(), gamma, sc.cov.mean)
    rate = sc.mu * grid.cell_area * sc.surface.lam * np.exp(truth.window)
    return truth, CellCounts(grid, rng.poisson(rate))


class Posterior:
    """Log-target and gradient of ``pi(gamma | X)`` with cached spectral pieces.

    The additive constant of the log density is fixed at zero.
    """

    def __init__(self, data: CellCounts, sc: Scenario, base: CirculantBase):
        grid = sc.grid
        if data.grid != grid or base.grid != grid:
            raise ValueError("data, scenario and covariance base must share a grid")
        self.grid = grid
        self.base = base
        self.mean = sc.cov.mean
        self.X = data.extended
        self.rate = grid.extend(sc.mu * grid.cell_area * sc.surface.lam)
        self.n_clamped = 0

    def field(self, gamma: np.ndarray) -> np.ndarray:
        return self.mean + sqrt_matvec(self.base, gamma)

    def _exp(self, Y: np.ndarray) -> np.ndarray:
        over = Y > EXP_CLAMP
        if over.any():
            self.n_clamped += 1
            Y = np.minimum(Y, EXP_CLAMP)
        return np.exp(Y)

    def log_target_from_field(self, gamma: np.ndarray, Y: np.ndarray) -> float:
        # off-window X and rate are zero
        return float(-0.5 * np.sum(gamma * gamma) + np.sum(Y * self.X - self.rate * self._exp(Y)))

    def grad_from_field(self, gamma: np.ndarray, Y: np.ndarray) -> np.ndarray:
        return -gamma + sqrt_matvec(self.base, self.X - self.rate * self._exp(Y))

    def log_target(self, gamma: np.ndarray) -> float:
        gamma = self._check(gamma)
        return self.log_target_from_field(gamma, self.field(gamma))

    def grad(self, gamma: np.ndarray) -> np.ndarray:
        gamma = self._check(gamma)
        return self.grad_from_field(gamma, self.field(gamma))

    def value_and_grad(self, gamma: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        """Log-target, gradient and the window field ``Y``, sharing one transform."""
        gamma = self._check(gamma)
        Y = self.field(gamma)
        return self.log_target_from_field(gamma, Y), self.grad_from_field(gamma, Y), Y

    def _check(self, gamma) -> np.ndarray:
        if isinstance(gamma, WhiteNoiseState):
            gamma = gamma.gamma
        gamma = np.asarray(gamma, dtype=float)
        if gamma.shape != self.grid.shape:
            raise ValueError(f"gamma shape {gamma.shape} does not match grid {self.grid.shape}")
        return gamma


def log_target(gamma, data: CellCounts, sc: Scenario, base: CirculantBase) -> float:
    return Posterior(data, sc, base).log_target(gamma)


def grad_log_target(gamma, data: CellCounts, sc: Scenario, base: CirculantBase) -> np.ndarray:
    return Posterior(data, sc, base).grad(gamma)


# --- serialisation -------------------------------------------------------


def write_grid_csv(path, values: np.ndarray) -> None:
    """Row-major CSV with header ``i,j,value``."""
    values = np.asarray(values)
    i, j = np.indices(values.shape)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("i,j,value\n")
        is_int = np.issubdtype(values.dtype, np.integer)
        for a, b, v in zip(i.ravel(), j.ravel(), values.ravel()):
            fh.write(f"{a},{b},{int(v)}\n" if is_int else f"{a},{b},{float(v)!r}\n")


def read_grid_csv(path, dtype=float) -> np.ndarray:
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    i = raw[:, 0].astype(int)
    j = raw[:, 1].astype(int)
    out = np.zeros((i.max() + 1, j.max() + 1), dtype=dtype)
    out[i, j] = raw[:, 2]
    return out


def scenario_to_dict(sc: Scenario) -> dict:
    d = {
        "mu": float(sc.mu),
        "cov": sc.cov.to_dict(),
        "grid": sc.grid.to_dict(),
        "seed": int(sc.seed),
    }
    if "points" in sc.meta:
        d["points"] = [list(map(float, p)) for p in sc.meta["points"]]
        d["bandwidth"] = float(sc.meta["bandwidth"])
    else:
        d["lambda_grid"] = sc.surface.lam.tolist()
    if sc.name:
        d["name"] = sc.name
    return d


def scenario_from_dict(d: dict) -> Scenario:
    grid = GridSpec.from_dict(d["grid"])
    meta = {}
    if "points" in d:
        surface = build_lambda(d["points"], float(d["bandwidth"]), grid)
        meta = {"points": np.asarray(d["points"], dtype=float), "bandwidth": float(d["bandwidth"])}
    elif "lambda_grid" in d:
        surface = IntensitySurface.normalised(grid, np.asarray(d["lambda_grid"], dtype=float))
    else:
        surface = IntensitySurface.uniform(grid)
    return Scenario(
        surface=surface,
        mu=float(d["mu"]),
        cov=CovarianceModel.from_dict(d["cov"]),
        seed=int(d.get("seed", 0)),
        name=str(d.get("name", "")),
        meta=meta,
    )


def save_scenario(path, sc: Scenario) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2) + "\n", encoding="utf-8")


def load_scenario(path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
