"""The 18-scenario simulation design: two intensity surfaces x three sigma x three phi."""

from __future__ import annotations

import numpy as np

from ..covariance import CovarianceModel
from ..grid_fft import GridSpec
from ..lgcp_model import Scenario, build_lambda

SIGMAS = (0.5, 1.0, 2.0)
PHIS = (0.02, 0.04, 0.06)
BANDWIDTHS = (0.04, 0.1)
N_POINTS = 200
DEFAULT_MU = 2000.0


def scenario_seed(master_seed: int, number: int) -> int:
    state = np.random.SeedSequence([int(master_seed), int(number)]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def scenario_parameters(number: int) -> tuple[int, float, float]:
    """``(surface index, sigma, phi)`` of a numbered scenario (1-18; odd numbers use surface 0)."""
    if not 1 <= number <= 18:
        raise ValueError(f"scenario number must be in 1..18, got {number}")
    surface = (number - 1) % 2
    block = (number - 1) // 2
    return surface, SIGMAS[block // 3], PHIS[block % 3]


def generate_scenarios(
    master_seed: int,
    numbers=range(1, 19),
    M: int = 64,
    ext_factor: int = 2,
    mu: float = DEFAULT_MU,
    n_points: int = N_POINTS,
    bandwidths=BANDWIDTHS,
    kind: str = "exponential",
) -> list[Scenario]:
    grid = GridSpec(M, ext_factor)
    rng = np.random.default_rng(np.random.SeedSequence([int(master_seed), 0]))
    points = rng.uniform(size=(n_points, 2))
    surfaces = [build_lambda(points, bw, grid) for bw in bandwidths]
    out = []
    for n in numbers:
        s, sigma, phi = scenario_parameters(n)
        out.append(
            Scenario(
                surface=surfaces[s],
                mu=mu,
                cov=CovarianceModel(kind, sigma, phi),
                seed=scenario_seed(master_seed, n),
                name=f"scenario_{n:02d}",
                meta={"number": n, "points": points, "bandwidth": bandwidths[s], "surface": s + 1},
            )
        )
    return out
