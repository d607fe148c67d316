"""Classical distortionless beamformers.

Snapshots are stored column-wise: ``X`` has shape ``(p, T)`` and ``X[:, t]``
is the array observation at time ``t``. Outputs are ``z[t] = w^H x[t]`` and
every weight vector satisfies ``w^H nu = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Optional, Union

import numpy as np

from .linalg import (
    ContractError,
    HermitianState,
    NumericError,
    hermitian_solve,
    rank1_update,
    regularized_gram_solve,
)

if TYPE_CHECKING:
    from .scenarios import ScenarioTruth

# Relative floor below which nu^H S^{-1} nu is treated as singular.
_DEN_FLOOR = 1e-300


@dataclass(frozen=True)
class SteeringVector:
    """Distortionless constraint direction, optionally tagged with its look angle."""

    nu: np.ndarray
    look_angle: Optional[float] = None

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=complex)
        if nu.ndim != 1 or not np.linalg.norm(nu) > 0:
            raise ContractError("steering vector must be a nonzero 1-D array")
        object.__setattr__(self, "nu", nu)

    def __len__(self) -> int:
        return self.nu.shape[0]


SteeringLike = Union[SteeringVector, np.ndarray]


def as_nu(nu: SteeringLike) -> np.ndarray:
    if isinstance(nu, SteeringVector):
        return nu.nu
    return SteeringVector(nu).nu


def default_loading(X: np.ndarray, n_init: int = 10, fraction: float = 1e-2) -> float:
    """Diagonal loading from the mean per-channel power of the first snapshots.

    Returns ``fraction * mean(|x|^2)`` over the first ``n_init`` snapshots,
    or ``1e-3`` when there is no data.
    """
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] == 0:
        return 1e-3
    power = float(np.mean(np.abs(X[:, :n_init]) ** 2))
    return fraction * power if power > 0 else 1e-3


def conventional_weights(nu: SteeringLike) -> np.ndarray:
    """Delay-and-sum weights ``nu / (nu^H nu)``."""
    nu = as_nu(nu)
    return nu / np.real(np.vdot(nu, nu))


def _normalize(num: np.ndarray, nu: np.ndarray) -> np.ndarray:
    den = np.real(np.vdot(nu, num))
    if not den > _DEN_FLOOR:
        raise NumericError(f"MVDR denominator not positive ({den:g})")
    return num / den


def mvdr_weights(cov: HermitianState, nu: SteeringLike) -> np.ndarray:
    """MVDR weights ``S^{-1} nu / (nu^H S^{-1} nu)`` from a maintained inverse."""
    nu = as_nu(nu)
    if nu.shape != (cov.dim,):
        raise ContractError("steering vector and covariance dimensions differ")
    return _normalize(cov.inv @ nu, nu)


def capon_weights(R: np.ndarray, nu: SteeringLike, delta: float = 0.0) -> np.ndarray:
    """MVDR weights from a covariance matrix by a direct Hermitian solve."""
    nu = as_nu(nu)
    R = np.asarray(R)
    if delta:
        R = R + delta * np.eye(R.shape[0])
    return _normalize(hermitian_solve(R, nu), nu)


def batch_capon_weights(X: np.ndarray, nu: SteeringLike, delta: float) -> np.ndarray:
    """Sample-matrix-inversion Capon weights over every column of ``X``."""
    nu = as_nu(nu)
    return _normalize(regularized_gram_solve(X, nu, delta), nu)


def batch_capon_run(X: np.ndarray, nu: SteeringLike, delta: float):
    """Apply one batch SMI weight vector to the whole record."""
    w = batch_capon_weights(X, nu, delta)
    return w.conj() @ X, w


def apply_weights(W: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Per-snapshot outputs ``z[t] = W[t]^H X[:, t]`` for a weight trace ``W`` of shape (T, p)."""
    return np.einsum("tp,pt->t", W.conj(), X)


# ---------------------------------------------------------------------------
# Recursive (growing window) MVDR
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MvdrFilterState:
    """Growing-window MVDR filter.

    ``num`` tracks ``S^{-1} nu`` and ``den`` tracks ``nu^H S^{-1} nu``;
    ``cost`` accumulates the output power of the post-update weights.
    """

    cov: HermitianState
    nu: np.ndarray
    num: np.ndarray
    den: float
    w: np.ndarray
    cost: float = 0.0
    start_index: int = 0
    n_updates: int = 0

    @classmethod
    def initial(cls, nu: SteeringLike, delta: float, start_index: int = 0) -> "MvdrFilterState":
        nu = as_nu(nu)
        cov = HermitianState.initial(nu.shape[0], delta)
        num = nu / delta
        den = float(np.real(np.vdot(nu, num)))
        return cls(cov, nu, num, den, num / den, 0.0, start_index, 0)


def adaptive_mvdr_step(state: MvdrFilterState, x: np.ndarray):
    """Filter one snapshot, then fold it into the covariance estimate.

    Returns ``(z, new_state)``. ``z`` uses the weights held before this
    snapshot was seen.
    """
    z = np.vdot(state.w, x)
    cov, k, gamma = rank1_update(state.cov, x)
    num = state.num - k * (np.vdot(k, state.nu) / gamma)
    den = float(np.real(np.vdot(state.nu, num)))
    w = _normalize(num, state.nu)
    post = np.vdot(w, x)
    cost = state.cost + float(post.real**2 + post.imag**2)
    return z, replace(
        state, cov=cov, num=num, den=den, w=w, cost=cost, n_updates=state.n_updates + 1
    )


def adaptive_mvdr_run(X: np.ndarray, nu: SteeringLike, delta: float):
    """Run the recursive MVDR over all snapshots.

    Returns ``(z, W)`` where ``W[t]`` are the weights that produced ``z[t]``.
    """
    X = np.asarray(X)
    state = MvdrFilterState.initial(nu, delta)
    T = X.shape[1]
    z = np.empty(T, dtype=complex)
    W = np.empty((T, X.shape[0]), dtype=complex)
    for t in range(T):
        W[t] = state.w
        z[t], state = adaptive_mvdr_step(state, X[:, t])
    return z, W


# ---------------------------------------------------------------------------
# Generalized sidelobe canceller
# ---------------------------------------------------------------------------


def blocking_matrix(nu: SteeringLike) -> np.ndarray:
    """Orthogonal projector onto the complement of ``nu``."""
    nu = as_nu(nu)
    B = np.eye(nu.shape[0], dtype=complex) - np.outer(nu, nu.conj()) / np.real(np.vdot(nu, nu))
    return 0.5 * (B + B.conj().T)


@dataclass(frozen=True)
class GscState:
    wq: np.ndarray
    B: np.ndarray
    wa: np.ndarray
    cov: HermitianState

    @classmethod
    def initial(cls, nu: SteeringLike, delta: float) -> "GscState":
        nu = as_nu(nu)
        p = nu.shape[0]
        return cls(
            conventional_weights(nu),
            blocking_matrix(nu),
            np.zeros(p, dtype=complex),
            HermitianState.initial(p, delta),
        )

    @property
    def weights(self) -> np.ndarray:
        return self.wq - self.B @ self.wa


def gsc_step(state: GscState, x: np.ndarray):
    """One causal GSC step: quiescent minus adaptive path, then RLS update of ``wa``."""
    d = np.vdot(state.wq, x)
    u = state.B.conj().T @ x
    z = d - np.vdot(state.wa, u)
    cov, k, gamma = rank1_update(state.cov, u)
    wa = state.wa + k * (np.conj(z) / gamma)
    return z, replace(state, wa=wa, cov=cov)


def gsc_run(X: np.ndarray, nu: SteeringLike, delta: float):
    X = np.asarray(X)
    state = GscState.initial(nu, delta)
    T = X.shape[1]
    z = np.empty(T, dtype=complex)
    W = np.empty((T, X.shape[0]), dtype=complex)
    for t in range(T):
        W[t] = state.weights
        z[t], state = gsc_step(state, X[:, t])
    return z, W


def batch_gsc_weights(X: np.ndarray, nu: SteeringLike, delta: float) -> np.ndarray:
    """Total weight ``wq - B wa`` with ``wa`` the ridge solution on the blocked data."""
    nu = as_nu(nu)
    wq = conventional_weights(nu)
    B = blocking_matrix(nu)
    d = wq.conj() @ X
    U = B.conj().T @ X
    wa = regularized_gram_solve(U, U @ d.conj(), delta)
    return wq - B @ wa


# ---------------------------------------------------------------------------
# Sliding window MPDR and omniscient bound
# ---------------------------------------------------------------------------


def sliding_mpdr_run(X: np.ndarray, nu: SteeringLike, K: int, delta: float):
    """MPDR with weights from the ``K`` snapshots strictly preceding each time.

    The window Gram is unnormalised, ``sum x x^H + delta I``, so ``K >= T``
    reproduces :func:`adaptive_mvdr_run`. Returns ``(z, W)``.
    """
    if K < 1:
        raise ContractError(f"window length must be >= 1, got {K}")
    if not delta > 0:
        raise ContractError(f"delta must be positive, got {delta}")
    nu = as_nu(nu)
    X = np.asarray(X)
    p, T = X.shape
    if T == 0:
        return np.empty(0, dtype=complex), np.empty((0, p), dtype=complex)
    outer = np.einsum("it,jt->tij", X, X.conj())
    prefix = np.zeros((T + 1, p, p), dtype=complex)
    np.cumsum(outer, axis=0, out=prefix[1:])
    t = np.arange(T)
    gram = prefix[t] - prefix[np.maximum(t - K, 0)]
    gram = 0.5 * (gram + gram.conj().swapaxes(-1, -2))
    gram += delta * np.eye(p)
    num = np.linalg.solve(gram, np.broadcast_to(nu, (T, p))[..., None])[..., 0]
    den = np.real(num @ nu.conj())
    if not np.all(den > _DEN_FLOOR):
        raise NumericError("sliding-window MVDR denominator not positive")
    W = num / den[:, None]
    return apply_weights(W, X), W


def omniscient_capon_run(truth: "ScenarioTruth", nu: SteeringLike, delta: float = 0.0):
    """Capon weights from the true per-snapshot ensemble covariance.

    Weights are computed once per distinct interference state and switch
    instantaneously at each state change. Returns ``(z, W)``.
    """
    nu = as_nu(nu)
    covs = truth.regime_covariances()
    per_regime = np.array([capon_weights(R, nu, delta) for R in covs])
    W = per_regime[truth.regime_index]
    return apply_weights(W, truth.snapshots), W
