"""Evaluation metrics and spatial diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .beamformers import SteeringLike, as_nu
from .linalg import ContractError
from .scenarios import ArrayGeometry, ScenarioTruth, steering_matrix


def sample_stride(T: int) -> int:
    """Weight sampling stride: every snapshot up to 5000, every 10th beyond."""
    return 1 if T <= 5000 else 10


@dataclass
class RunTrace:
    """Output of one beamformer on one record.

    ``weights`` holds the weight vectors that produced ``z`` at the times in
    ``weight_times``.
    """

    z: np.ndarray
    weight_times: np.ndarray
    weights: np.ndarray
    changepoints: List[int] = field(default_factory=list)

    @property
    def cumulative_cost(self) -> np.ndarray:
        return cumulative_power(self.z)

    @classmethod
    def from_full(cls, z, W, changepoints=(), stride: Optional[int] = None) -> "RunTrace":
        stride = stride or sample_stride(len(z))
        times = np.arange(0, len(z), stride)
        return cls(np.asarray(z), times, np.asarray(W)[times], list(changepoints))


def cumulative_power(z: np.ndarray) -> np.ndarray:
    return np.cumsum(np.abs(np.asarray(z)) ** 2)


def mse_trace(z: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Running mean of ``|z - s|^2``: element ``t`` averages the first ``t + 1`` errors."""
    z = np.asarray(z)
    target = np.asarray(target)
    if z.shape != target.shape:
        raise ContractError(f"length mismatch: {z.shape} vs {target.shape}")
    err = np.abs(z - target) ** 2
    return np.cumsum(err) / np.arange(1, len(err) + 1)


def wng(w: np.ndarray, nu: SteeringLike) -> float:
    """White-noise gain ``|w^H nu|^2 / ||w||^2``."""
    w = np.asarray(w)
    norm2 = float(np.real(np.vdot(w, w)))
    if not norm2 > 0:
        raise ContractError("white-noise gain of a zero weight vector")
    return float(abs(np.vdot(w, as_nu(nu))) ** 2 / norm2)


def beampattern(w: np.ndarray, geometry: ArrayGeometry, grid: Sequence[float]) -> np.ndarray:
    """Response ``20 log10 |w^H nu(theta)|`` over ``grid`` (degrees)."""
    if len(grid) == 0:
        raise ContractError("empty angle grid")
    gain = np.abs(np.asarray(w).conj() @ steering_matrix(geometry, grid))
    with np.errstate(divide="ignore"):
        return 20 * np.log10(gain)


def sinr_trace(
    weight_times: np.ndarray, weights: np.ndarray, truth: ScenarioTruth
) -> np.ndarray:
    """Output SINR in dB at each sampled time against the true covariance.

    Returns ``-inf`` wherever the signal power is zero.
    """
    if truth is None:
        raise ContractError("SINR needs scenario ground truth")
    weight_times = np.asarray(weight_times, dtype=int)
    R_in = truth.interference_covariances()[truth.regime_index[weight_times]]
    W = np.asarray(weights)
    noise = np.real(np.einsum("ti,tij,tj->t", W.conj(), R_in, W))
    signal = truth.target_power * np.abs(W.conj() @ truth.steering.nu) ** 2
    out = np.full(len(weight_times), -np.inf)
    ok = signal > 0
    out[ok] = 10 * np.log10(signal[ok] / noise[ok])
    return out


def btr(
    X: np.ndarray,
    method: Callable[[np.ndarray, np.ndarray], np.ndarray],
    grid: Sequence[float],
    geometry: ArrayGeometry,
    block: int = 1,
) -> np.ndarray:
    """Bearing-time record: ``|z_theta[t]|^2`` for each steering angle.

    ``method(X, nu)`` returns the output sequence when steered at ``nu``.
    With ``block > 1`` power is averaged over consecutive blocks of that
    many snapshots. Shape is ``(len(grid), T // block)`` (or ``T`` if ``block == 1``).
    """
    if len(grid) == 0:
        raise ContractError("empty angle grid")
    X = np.asarray(X)
    T = X.shape[1]
    steer = steering_matrix(geometry, grid)
    rows = np.empty((len(grid), T))
    for g in range(len(grid)):
        rows[g] = np.abs(method(X, steer[:, g])) ** 2 if T else rows[g]
    if block > 1:
        n = T // block
        rows = rows[:, : n * block].reshape(len(grid), n, block).mean(axis=2)
    return rows


def to_db(power: np.ndarray, floor: float = 1e-30) -> np.ndarray:
    return 10 * np.log10(np.maximum(power, floor))
