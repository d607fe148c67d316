"""Penalized temporal segmentation by dynamic programming.

Batch engines (:func:`sls_batch`, :func:`bsb`) solve

    E[j] = min_{i < j} ( cost(i, j) + C + E[i] ),   E[0] = 0,

exactly over all contiguous partitions, where ``cost(i, j)`` is the error of
one model fitted to the half-open snapshot range ``[i, j)``. The online
engines (:func:`osrls`, :class:`OnlineSegmenter`) keep a bank of recursive
filters, one per hypothesised start of the current segment, and move an
irrevocable anchor forward when a later start wins by more than ``tau``.

Indices are 0-based and segments are half-open, so a partition of ``T``
snapshots starts at 0 and its last segment stops at ``T``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np

from .beamformers import SteeringLike, as_nu, capon_weights, conventional_weights
from .linalg import ContractError, NumericError, regularized_gram_solve

MAX_ORACLE_HORIZON = 20
_SYMMETRIZE_EVERY = 32
COST_CONVENTIONS = ("posterior", "prior")


class Segment(NamedTuple):
    start: int
    stop: int
    weights: np.ndarray
    cost: float

    def __len__(self) -> int:
        return self.stop - self.start


@dataclass
class Partition:
    """Contiguous segmentation of ``[0, T)`` with one weight vector per segment."""

    segments: List[Segment]
    penalty: float

    @property
    def total_cost(self) -> float:
        return sum(s.cost for s in self.segments) + self.penalty * len(self.segments)

    @property
    def starts(self) -> List[int]:
        return [s.start for s in self.segments]

    @property
    def boundaries(self) -> List[int]:
        """Start indices of every segment after the first."""
        return [s.start for s in self.segments[1:]]

    def __len__(self) -> int:
        return len(self.segments)

    def validate(self, T: int) -> None:
        expected = 0
        for seg in self.segments:
            if seg.start != expected or seg.stop <= seg.start:
                raise ContractError(f"segments are not contiguous at {seg.start}")
            expected = seg.stop
        if expected != T:
            raise ContractError(f"partition covers [0, {expected}) instead of [0, {T})")

    def synthesize(self, X: np.ndarray) -> np.ndarray:
        """Apply each segment's weights to its own snapshots: ``z = w^H x``."""
        out = np.zeros(X.shape[1], dtype=complex)
        for seg in self.segments:
            out[seg.start : seg.stop] = seg.weights.conj() @ X[:, seg.start : seg.stop]
        return out


@dataclass
class DpTable:
    """Forward-pass state. ``E[j]`` is the optimal penalized cost of ``[0, j)``;
    ``P[j]`` the start of the last segment in that optimum; ``W[j]`` its weights.
    """

    E: np.ndarray
    P: np.ndarray
    W: np.ndarray
    segment_cost: np.ndarray
    penalty: float

    def traceback(self) -> Partition:
        T = len(self.E) - 1
        segments = []
        j = T
        while j > 0:
            i = int(self.P[j])
            segments.append(Segment(i, j, self.W[j], float(self.segment_cost[j])))
            j = i
        segments.reverse()
        return Partition(segments, self.penalty)


def _check_problem(X: np.ndarray, C: float, delta: float) -> None:
    if X.ndim != 2 or X.shape[1] < 1:
        raise ContractError("need a (p, T) snapshot matrix with T >= 1")
    if C < 0:
        raise ContractError(f"penalty must be nonnegative, got {C}")
    if not delta > 0:
        raise ContractError(f"delta must be positive, got {delta}")
    if not np.all(np.isfinite(X)):
        raise NumericError("non-finite snapshots")


def _woodbury_bank(inv: np.ndarray, x: np.ndarray, symmetrize: bool = False):
    """Rank-1 update of a stack of inverses, in place. Returns ``(k, gamma)``.

    Re-symmetrizing a whole bank dominates the step cost, so callers request
    it periodically (every ``_SYMMETRIZE_EVERY`` updates); the asymmetry
    between calls stays at rounding level.
    """
    k = inv @ x
    gamma = 1.0 + np.real(k @ x.conj())
    outer = k[:, :, None] * k.conj()[:, None, :]
    outer *= (1.0 / gamma)[:, None, None]
    inv -= outer
    if symmetrize:
        inv += inv.conj().swapaxes(-1, -2)
        inv *= 0.5
    return k, gamma


def _quadratic(w: np.ndarray, G: np.ndarray) -> np.ndarray:
    Gw = np.matmul(G, w[..., None])[..., 0]
    return np.real(np.einsum("ni,ni->n", w.conj(), Gw))


def _run_dp(
    T: int,
    p: int,
    C: float,
    delta: float,
    update: Callable[[int, np.ndarray, np.ndarray], np.ndarray],
    weights_for: Callable[[int, int, np.ndarray], np.ndarray],
) -> DpTable:
    """Shared forward pass.

    ``update(t, inv, gram)`` receives banks already extended with the start
    ``t`` and must return segment costs for every start ``0..t`` of the
    segment ending at ``t`` (inclusive). ``weights_for(i, j, gram_i)``
    produces the stored weights of the winning segment ``[i, j)``.
    """
    E = np.full(T + 1, np.inf)
    E[0] = 0.0
    P = np.full(T + 1, -1, dtype=int)
    W = np.zeros((T + 1, p), dtype=complex)
    seg_cost = np.zeros(T + 1)
    inv = np.empty((T, p, p), dtype=complex)
    gram = np.empty((T, p, p), dtype=complex)
    eye = np.eye(p, dtype=complex)
    for t in range(T):
        inv[t] = eye / delta
        gram[t] = 0.0
        costs = update(t, inv[: t + 1], gram[: t + 1])
        total = costs + C + E[: t + 1]
        i = int(np.argmin(total))  # first minimum: earliest start wins ties
        E[t + 1] = total[i]
        P[t + 1] = i
        seg_cost[t + 1] = costs[i]
        W[t + 1] = weights_for(i, t + 1, gram[i])
    return DpTable(E, P, W, seg_cost, C)


# ---------------------------------------------------------------------------
# Batch segmented least squares
# ---------------------------------------------------------------------------


def sls_table(X: np.ndarray, d: np.ndarray, C: float, delta: float) -> DpTable:
    X = np.asarray(X, dtype=complex)
    d = np.asarray(d, dtype=complex)
    _check_problem(X, C, delta)
    p, T = X.shape
    if d.shape != (T,):
        raise ContractError(f"target length {d.shape} does not match T={T}")
    r = np.zeros((T, p), dtype=complex)
    rho = np.zeros(T)

    def update(t, inv, gram):
        x = X[:, t]
        r[t] = 0.0
        rho[t] = 0.0
        _woodbury_bank(inv, x, t % _SYMMETRIZE_EVERY == 0)
        gram += np.outer(x, x.conj())
        r[: t + 1] += x * np.conj(d[t])
        rho[: t + 1] += abs(d[t]) ** 2
        w = np.einsum("nij,nj->ni", inv, r[: t + 1])
        resid = rho[: t + 1] - 2.0 * np.real(np.einsum("ni,ni->n", w.conj(), r[: t + 1]))
        return np.maximum(resid + _quadratic(w, gram), 0.0)

    def weights_for(i, j, _gram):
        Xs = X[:, i:j]
        return regularized_gram_solve(Xs, Xs @ d[i:j].conj(), delta)

    return _run_dp(T, p, C, delta, update, weights_for)


def sls_batch(X: np.ndarray, d: np.ndarray, C: float, delta: float):
    """Globally optimal penalized piecewise ridge regression of ``d`` on ``X``.

    The model is ``d[t] ~ w^H x[t]``; each segment's error is its residual
    sum of squares. Returns ``(d_hat, partition)``.
    """
    partition = sls_table(X, d, C, delta).traceback()
    return partition.synthesize(np.asarray(X, dtype=complex)), partition


# ---------------------------------------------------------------------------
# Batch segmented beamformer
# ---------------------------------------------------------------------------


def bsb_table(X: np.ndarray, nu: SteeringLike, C: float, delta: float) -> DpTable:
    X = np.asarray(X, dtype=complex)
    _check_problem(X, C, delta)
    nu = as_nu(nu)
    p, T = X.shape
    if nu.shape != (p,):
        raise ContractError("steering vector length does not match the array")
    num = np.zeros((T, p), dtype=complex)

    def update(t, inv, gram):
        x = X[:, t]
        num[t] = nu / delta
        k, gamma = _woodbury_bank(inv, x, t % _SYMMETRIZE_EVERY == 0)
        gram += np.outer(x, x.conj())
        num[: t + 1] -= k * ((k.conj() @ nu) / gamma)[:, None]
        den = np.real(num[: t + 1] @ nu.conj())
        if not np.all(den > 0):
            raise NumericError("MVDR denominator not positive")
        w = num[: t + 1] / den[:, None]
        return np.maximum(_quadratic(w, gram), 0.0)

    def weights_for(i, j, G):
        return capon_weights(G, nu, delta)

    return _run_dp(T, p, C, delta, update, weights_for)


def bsb(X: np.ndarray, nu: SteeringLike, C: float, delta: float):
    """Batch segmented beamformer.

    Each segment's cost is the output power of loaded batch MVDR weights
    fitted on that segment. Returns ``(z, partition)``.
    """
    partition = bsb_table(X, nu, C, delta).traceback()
    return partition.synthesize(np.asarray(X, dtype=complex)), partition


def segment_output_power(X: np.ndarray, nu: SteeringLike, delta: float) -> float:
    """Output power of loaded MVDR weights fitted on ``X`` itself (direct solve)."""
    X = np.asarray(X, dtype=complex)
    G = X @ X.conj().T
    w = capon_weights(G, nu, delta)
    return float(np.sum(np.abs(w.conj() @ X) ** 2))


def segment_ls_cost(X: np.ndarray, d: np.ndarray, delta: float) -> float:
    """Residual sum of squares of the ridge fit ``d ~ w^H x`` on ``X`` (direct solve)."""
    X = np.asarray(X, dtype=complex)
    d = np.asarray(d, dtype=complex)
    w = regularized_gram_solve(X, X @ d.conj(), delta)
    return float(np.sum(np.abs(d - w.conj() @ X) ** 2))


def exhaustive_dp_oracle(
    cost_fn: Callable[[int, int], float], T: int, C: float
) -> tuple[float, List[int]]:
    """Brute-force the penalized optimum over all ``2**(T-1)`` partitions.

    ``cost_fn(i, j)`` is the cost of the half-open segment ``[i, j)``.
    Returns ``(best_cost, starts)``; among exact ties the lexicographically
    smallest boundary list wins.
    """
    if T < 1:
        raise ContractError("horizon must be >= 1")
    if T > MAX_ORACLE_HORIZON:
        raise ContractError(f"exhaustive search refused for T={T} > {MAX_ORACLE_HORIZON}")
    cache = {}

    def cost(i, j):
        if (i, j) not in cache:
            cache[(i, j)] = float(cost_fn(i, j))
        return cache[(i, j)]

    best_cost = np.inf
    best_bounds: Optional[tuple] = None
    for mask in itertools.product((False, True), repeat=T - 1):
        bounds = tuple(b for b, cut in zip(range(1, T), mask) if cut)
        edges = (0,) + bounds + (T,)
        total = sum(cost(a, b) for a, b in zip(edges[:-1], edges[1:])) + C * (len(edges) - 1)
        if total < best_cost or (total == best_cost and bounds < best_bounds):
            best_cost, best_bounds = total, bounds
    return best_cost, [0, *best_bounds]


def bellman_residuals(table: DpTable, cost_fn: Callable[[int, int], float]) -> np.ndarray:
    """``E[j] - min_i (cost(i, j) + C + E[i])`` recomputed from ``cost_fn``."""
    T = len(table.E) - 1
    out = np.empty(T)
    for j in range(1, T + 1):
        best = min(cost_fn(i, j) + table.penalty + table.E[i] for i in range(j))
        out[j - 1] = table.E[j] - best
    return out


def noise_floor(X: np.ndarray, n_init: Optional[int] = None) -> float:
    """Median eigenvalue of the sample covariance of the leading snapshots.

    Uses the first ``10 p`` snapshots by default. With fewer sources than
    half the sensors the median eigenvalue sits in the noise subspace.
    """
    X = np.asarray(X)
    p, T = X.shape
    n = min(T, n_init or 10 * p)
    if n < 1:
        raise ContractError("noise floor needs at least one snapshot")
    R = X[:, :n] @ X[:, :n].conj().T / n
    return float(np.median(np.linalg.eigvalsh(R)))


def relative_penalty(X: np.ndarray, c_rel: float, n_init: Optional[int] = None) -> float:
    """Segment penalty ``C = c_rel * p * noise_floor(X)``.

    A fresh candidate pays almost nothing for its first ``p`` snapshots, so
    a penalty below about ``p`` noise units lets it win on noise alone.
    """
    if c_rel < 0:
        raise ContractError(f"c_rel must be non-negative, got {c_rel}")
    return c_rel * X.shape[0] * noise_floor(X, n_init)


# ---------------------------------------------------------------------------
# Online engines
# ---------------------------------------------------------------------------


class Changepoint(NamedTuple):
    """Anchor jump declared at ``time`` moving the active segment to ``start``."""

    time: int
    start: int


class _CandidateBank:
    """Arrays indexed by candidate, kept sorted by start. Row 0 is the anchor."""

    def __init__(self, p: int):
        self.starts = np.empty(0, dtype=int)
        self.inv = np.empty((0, p, p), dtype=complex)

    def __len__(self) -> int:
        return len(self.starts)

    def _keep(self, mask):
        for name, value in vars(self).items():
            setattr(self, name, value[mask])

    def append(self, start: int, inv: np.ndarray, **rows):
        self.starts = np.append(self.starts, start)
        self.inv = np.concatenate([self.inv, inv[None]])
        for name, value in rows.items():
            setattr(self, name, np.concatenate([getattr(self, name), np.asarray(value)[None]]))

    def evict_beyond(self, cap: int):
        if len(self) > cap:
            mask = np.ones(len(self), dtype=bool)
            mask[1 : 1 + len(self) - cap] = False
            self._keep(mask)

    def drop_before(self, start: int):
        self._keep(self.starts >= start)


@dataclass
class OnlineSegmenter:
    """Online segmented beamformer.

    Parameters
    ----------
    nu : array_like
        Steering vector.
    penalty : float
        Per-segment penalty ``C`` in output-power units.
    delta : float
        Diagonal loading for every candidate's covariance.
    min_seg : int
        Guard ``tau``: the anchor moves only when the best start leads it by
        more than ``min_seg`` snapshots.
    max_candidates : int
        Bank size cap; the oldest non-anchor candidate is evicted beyond it.
    cost : {"posterior", "prior"}
        Which weights score each snapshot in a candidate's running cost:
        the weights after folding the snapshot in (default), or the causal
        weights held before it.
    """

    nu: np.ndarray
    penalty: float
    delta: float
    min_seg: int = 5
    max_candidates: int = 64
    cost: str = "posterior"
    cur: int = 0
    n: int = 0
    potentials: List[float] = field(default_factory=list)
    changepoints: List[Changepoint] = field(default_factory=list)

    def __post_init__(self):
        self.nu = as_nu(self.nu)
        if self.penalty < 0 or not self.delta > 0 or self.min_seg < 0 or self.max_candidates < 1:
            raise ContractError("invalid online segmenter parameters")
        if self.cost not in COST_CONVENTIONS:
            raise ContractError(f"cost must be one of {COST_CONVENTIONS}, got {self.cost!r}")
        p = self.nu.shape[0]
        self._bank = _CandidateBank(p)
        self._bank.vec = np.empty((0, p), dtype=complex)
        self._bank.w = np.empty((0, p), dtype=complex)
        self._bank.J = np.empty(0)
        self._eye = np.eye(p, dtype=complex) / self.delta
        self._w0 = conventional_weights(self.nu)

    @property
    def weights(self) -> np.ndarray:
        """Weights of the active segment, to be applied to the next snapshot."""
        return self._bank.w[0] if len(self._bank) else self._w0

    @property
    def candidate_starts(self) -> np.ndarray:
        return self._bank.starts.copy()

    @property
    def frozen_cost(self) -> float:
        return self._potential(self.cur - 1)

    def _potential(self, t: int) -> float:
        return self.potentials[t] if t >= 0 else 0.0

    def step(self, x: np.ndarray):
        """Process one snapshot. Returns ``(z, event)`` with ``event`` a
        :class:`Changepoint` or ``None``."""
        x = np.asarray(x, dtype=complex)
        if not np.all(np.isfinite(x)):
            raise NumericError("non-finite snapshot")
        nu, bank, n = self.nu, self._bank, self.n
        z = np.vdot(self.weights, x)

        bank.append(n, self._eye, vec=nu / self.delta, w=self._w0, J=0.0)
        bank.evict_beyond(self.max_candidates)

        y = bank.w.conj() @ x
        k, gamma = _woodbury_bank(bank.inv, x, n % _SYMMETRIZE_EVERY == 0)
        bank.vec -= k * ((k.conj() @ nu) / gamma)[:, None]
        den = np.real(bank.vec @ nu.conj())
        if not np.all(den > 0):
            raise NumericError("MVDR denominator not positive")
        bank.w = bank.vec / den[:, None]
        if self.cost == "posterior":
            y = bank.w.conj() @ x
        bank.J = bank.J + (y.real**2 + y.imag**2)

        prior = np.array([self._potential(s - 1) for s in bank.starts])
        total = prior + self.penalty + bank.J
        b = int(np.argmin(total))
        self.potentials.append(float(total[b]))
        best = int(bank.starts[b])

        event = None
        if best - self.cur > self.min_seg:
            self.cur = best
            bank.drop_before(best)
            event = Changepoint(n, best)
            self.changepoints.append(event)
        self.n += 1
        return z, event


def osb_step(state: OnlineSegmenter, x: np.ndarray):
    """Functional wrapper: ``(z, state, event)`` after one snapshot."""
    z, event = state.step(x)
    return z, state, event


@dataclass
class OnlineRun:
    z: np.ndarray
    W: np.ndarray
    changepoints: List[Changepoint]
    potentials: np.ndarray
    anchors: np.ndarray

    @property
    def starts(self) -> List[int]:
        return [c.start for c in self.changepoints]

    def penalized_cost(self, penalty: float) -> float:
        """Realized causal cost: output power of ``z`` plus ``C`` per segment."""
        return float(np.sum(np.abs(self.z) ** 2) + penalty * (1 + len(self.changepoints)))


def osb_run(
    X: np.ndarray,
    nu: SteeringLike,
    C: float,
    delta: float,
    tau: int = 5,
    max_candidates: int = 64,
    cost: str = "posterior",
) -> OnlineRun:
    X = np.asarray(X, dtype=complex)
    seg = OnlineSegmenter(as_nu(nu), C, delta, tau, max_candidates, cost)
    p, T = X.shape
    z = np.empty(T, dtype=complex)
    W = np.empty((T, p), dtype=complex)
    anchors = np.empty(T, dtype=int)
    for t in range(T):
        W[t] = seg.weights
        z[t], _ = seg.step(X[:, t])
        anchors[t] = seg.cur
    return OnlineRun(z, W, list(seg.changepoints), np.array(seg.potentials), anchors)


def osrls(
    X: np.ndarray,
    d: np.ndarray,
    C: float,
    delta: float,
    tau: int = 5,
    max_candidates: Optional[int] = None,
):
    """Online segmented recursive least squares.

    Predicts ``d[n]`` causally as ``w^H x[n]`` from the active candidate.
    Each candidate's segment cost is its ridge objective ``rho - r^H w``.
    Returns ``(d_hat, changepoints)`` where ``changepoints`` are the start
    indices adopted by the anchor.
    """
    X = np.asarray(X, dtype=complex)
    d = np.asarray(d, dtype=complex)
    _check_problem(X, C, delta)
    p, T = X.shape
    if d.shape != (T,):
        raise ContractError(f"target length {d.shape} does not match T={T}")
    cap = T if max_candidates is None else max_candidates
    bank = _CandidateBank(p)
    bank.r = np.empty((0, p), dtype=complex)
    bank.rho = np.empty(0)
    bank.w = np.empty((0, p), dtype=complex)
    eye = np.eye(p, dtype=complex) / delta
    E: List[float] = []
    cur = 0
    d_hat = np.empty(T, dtype=complex)
    starts: List[int] = []
    for n in range(T):
        x = X[:, n]
        d_hat[n] = np.vdot(bank.w[0], x) if len(bank) else 0.0
        bank.append(n, eye, r=np.zeros(p, dtype=complex), rho=0.0, w=np.zeros(p, dtype=complex))
        bank.evict_beyond(cap)
        _woodbury_bank(bank.inv, x, n % _SYMMETRIZE_EVERY == 0)
        bank.r = bank.r + x * np.conj(d[n])
        bank.rho = bank.rho + abs(d[n]) ** 2
        bank.w = np.einsum("nij,nj->ni", bank.inv, bank.r)
        e = bank.rho - np.real(np.einsum("ni,ni->n", bank.r.conj(), bank.w))
        prior = np.array([E[s - 1] if s > 0 else 0.0 for s in bank.starts])
        total = prior + C + e
        b = int(np.argmin(total))
        E.append(float(total[b]))
        best = int(bank.starts[b])
        if best - cur > tau:
            cur = best
            bank.drop_before(best)
            starts.append(best)
    return d_hat, starts


def batch_cost_table(X: np.ndarray, nu: SteeringLike, delta: float) -> Callable[[int, int], float]:
    """Direct-solve MVDR segment cost ``[i, j) -> output power``, for oracles."""
    X = np.asarray(X, dtype=complex)
    return lambda i, j: segment_output_power(X[:, i:j], nu, delta)


def split_starts(starts: Sequence[int], T: int) -> List[tuple]:
    """Turn a list of segment starts into half-open ``(start, stop)`` pairs."""
    edges = list(starts) + [T]
    return list(zip(edges[:-1], edges[1:]))
