"""Accuracy metrics for latent-field prediction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..covariance import FieldState
from ..mala import QuantileSummary


@dataclass
class Mse2Result:
    mse2: float
    bias: float
    q: np.ndarray
    qhat: np.ndarray


def _window(truth) -> np.ndarray:
    return truth.window if isinstance(truth, FieldState) else np.asarray(truth, dtype=float)


def field_mse(truth, estimate) -> float:
    """Mean squared error over window cells."""
    y = _window(truth)
    est = np.asarray(estimate, dtype=float)
    if est.shape != y.shape:
        raise ValueError(f"estimate shape {est.shape} does not match window {y.shape}")
    return float(np.mean((y - est) ** 2))


def exceedance_indicators(truth, qs: QuantileSummary) -> np.ndarray:
    """``Z[k, s] = 1`` when the true field at ``s`` is at or below threshold ``c_k(s)``."""
    y = _window(truth)
    if qs.c.shape[1:] != y.shape:
        raise ValueError(f"threshold grid {qs.c.shape[1:]} does not match window {y.shape}")
    return (y[None] <= qs.c).astype(float)


def mse2_from_indicators(Z: np.ndarray, q) -> Mse2Result:
    q = np.asarray(q, dtype=float)
    Z = Z.reshape(len(q), -1)
    mse2 = float(np.mean((q[:, None] - Z) ** 2))
    qhat = Z.mean(axis=1)
    return Mse2Result(mse2, float(np.mean(qhat - q)), q, qhat)


def mse2_decomposition(Z: np.ndarray, q) -> tuple[float, float]:
    """Mean over k of the spread of ``Z_k`` about its mean, and of the squared calibration bias.

    The two terms sum to the predictive MSE of the same indicator table.
    """
    q = np.asarray(q, dtype=float)
    Z = Z.reshape(len(q), -1)
    qhat = Z.mean(axis=1)
    spread = np.mean((Z - qhat[:, None]) ** 2, axis=1)
    return float(np.mean(spread)), float(np.mean((qhat - q) ** 2))


def predictive_mse2(truth, qs: QuantileSummary) -> Mse2Result:
    return mse2_from_indicators(exceedance_indicators(truth, qs), qs.q)
