"""Complex Hermitian primitives shared by every beamformer.

The central object is :class:`HermitianState`, the inverse of a diagonally
loaded Gram matrix ``delta * I + sum_t x_t x_t^H`` kept current by rank-1
(Sherman-Morrison) updates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class ContractError(ValueError):
    """Raised when an argument violates an operation's preconditions."""


class NumericError(ArithmeticError):
    """Raised on non-finite inputs or a numerically singular system."""


def _check_finite(*arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite entries in input")


@dataclass(frozen=True)
class HermitianState:
    """Inverse of ``loading * I + sum x x^H``.

    Attributes
    ----------
    dim : int
        Matrix dimension ``p``.
    inv : ndarray, shape (p, p)
        Current inverse.
    loading : float
        Diagonal loading ``delta`` the state was initialised with.
    """

    dim: int
    inv: np.ndarray
    loading: float

    @classmethod
    def initial(cls, dim: int, loading: float) -> "HermitianState":
        if dim < 1:
            raise ContractError(f"dimension must be positive, got {dim}")
        if not loading > 0:
            raise ContractError(f"loading must be positive, got {loading}")
        return cls(dim, np.eye(dim, dtype=complex) / loading, float(loading))


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().swapaxes(-1, -2))


def rank1_update(
    state: HermitianState, x: np.ndarray
) -> tuple[HermitianState, np.ndarray, float]:
    """Fold one snapshot into the inverse via the Woodbury identity.

    Returns the new state, the gain precursor ``k = inv @ x`` and the
    normalisation ``gamma = 1 + x^H k`` (real, >= 1).
    """
    x = np.asarray(x)
    if x.shape != (state.dim,):
        raise ContractError(f"expected vector of length {state.dim}, got shape {x.shape}")
    _check_finite(x)
    k = state.inv @ x
    gamma = 1.0 + float(np.real(np.vdot(x, k)))
    inv = hermitian_part(state.inv - np.outer(k, k.conj()) / gamma)
    return HermitianState(state.dim, inv, state.loading), k, gamma


def hermitian_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a @ y = b`` for Hermitian positive definite ``a`` by Cholesky."""
    try:
        factor = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError("matrix is not positive definite") from exc
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def regularized_gram_solve(X: np.ndarray, b: np.ndarray, delta: float) -> np.ndarray:
    """Return ``(X X^H + delta I)^{-1} b``.

    ``X`` has one column per snapshot and may have zero columns, in which
    case the result is ``b / delta``.
    """
    X = np.asarray(X)
    b = np.asarray(b)
    if not delta > 0:
        raise ContractError(f"delta must be positive, got {delta}")
    if X.ndim != 2 or X.shape[0] != b.shape[0]:
        raise ContractError(f"shape mismatch: X {X.shape}, b {b.shape}")
    _check_finite(X, b)
    gram = X @ X.conj().T + delta * np.eye(X.shape[0])
    return hermitian_solve(gram, b)
