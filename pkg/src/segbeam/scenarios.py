"""Uniform linear arrays and piecewise-stationary interference scenes.

Angles are in degrees measured from endfire, so broadside is 90 degrees.
All sources are temporally white circular complex Gaussian processes and
sensor noise has unit variance, so SNR and INR in dB are absolute powers.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .beamformers import SteeringVector, conventional_weights

logger = logging.getLogger(__name__)

KINDS = ("abrupt_blocks", "piecewise_bearing", "piecewise_time", "birth_death")


class ConfigError(ValueError):
    """Invalid or inconsistent scenario/experiment parameters."""


@dataclass(frozen=True)
class ArrayGeometry:
    num_elements: int
    spacing: float
    wave_speed: float
    frequency: float

    def __post_init__(self):
        if self.num_elements < 2:
            raise ConfigError("an array needs at least 2 elements")
        if not (self.spacing > 0 and self.wave_speed > 0 and self.frequency > 0):
            raise ConfigError("spacing, wave_speed and frequency must be positive")

    @property
    def wavelength(self) -> float:
        return self.wave_speed / self.frequency

    @property
    def aliasing_free(self) -> bool:
        """True when the spacing does not exceed half a wavelength."""
        return self.spacing <= self.wavelength / 2 * (1 + 1e-9)

    def check_aliasing(self) -> bool:
        if not self.aliasing_free:
            logger.warning(
                "element spacing %.4g m exceeds half wavelength %.4g m; grating lobes possible",
                self.spacing,
                self.wavelength / 2,
            )
        return self.aliasing_free

    @classmethod
    def half_wavelength(cls, num_elements: int, frequency: float, wave_speed: float):
        return cls(num_elements, wave_speed / frequency / 2, wave_speed, frequency)


# 9 elements at 0.2 m, designed for 3600 Hz in water (1440 m/s).
ABRUPT_GEOMETRY = ArrayGeometry(9, 0.2, 1440.0, 3600.0)
# 15 elements at half wavelength for 1000 Hz in air.
AIR_GEOMETRY = ArrayGeometry(15, 0.1715, 343.0, 1000.0)


def steering_matrix(geometry: ArrayGeometry, angles: Sequence[float]) -> np.ndarray:
    """Columns are ULA steering vectors, shape ``(M, len(angles))``."""
    m = np.arange(geometry.num_elements)[:, None]
    cos = np.cos(np.deg2rad(np.asarray(angles, dtype=float)))[None, :]
    phase = 2 * np.pi * geometry.frequency * m * geometry.spacing * cos / geometry.wave_speed
    return np.exp(-1j * phase)


def ula_steering(geometry: ArrayGeometry, angle: float) -> SteeringVector:
    """``nu_m = exp(-i 2 pi f m d cos(theta) / c)`` for ``m = 0..M-1``."""
    return SteeringVector(steering_matrix(geometry, [angle])[:, 0], look_angle=float(angle))


def quiescent_suppression_db(geometry: ArrayGeometry, target_angle: float, angles) -> np.ndarray:
    """How far below the look direction the delay-and-sum pattern sits, in dB."""
    w = conventional_weights(ula_steering(geometry, target_angle))
    gain = np.abs(w.conj() @ steering_matrix(geometry, np.atleast_1d(angles)))
    return -20 * np.log10(np.maximum(gain, 1e-300))


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of one simulated scene.

    ``inr_db`` is either a fixed level or a ``(low, high)`` range drawn
    uniformly per interferer per block. An empty ``interferer_pool`` is
    filled at generation time with ``pool_size`` angles whose quiescent
    suppression falls inside ``suppression_band``.
    """

    kind: str
    geometry: ArrayGeometry = AIR_GEOMETRY
    horizon: int = 5000
    target_angle: float = 90.0
    target_snr_db: float = -5.0
    inr_db: Tuple[float, float] = (12.0, 12.0)
    interferer_pool: Tuple[float, ...] = ()
    pool_size: int = 4
    suppression_band: Tuple[float, float] = (3.0, 15.0)
    n_active: int = 2
    block_len: int = 500
    jitter: int = 0
    switch_times: Tuple[int, ...] = ()
    p_birth: float = 0.02
    p_death: float = 0.001
    max_active: int = 2
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.inr_db, (int, float)):
            object.__setattr__(self, "inr_db", (float(self.inr_db), float(self.inr_db)))
        object.__setattr__(self, "inr_db", tuple(float(v) for v in self.inr_db))
        object.__setattr__(self, "interferer_pool", tuple(float(a) for a in self.interferer_pool))
        object.__setattr__(self, "suppression_band", tuple(float(v) for v in self.suppression_band))
        object.__setattr__(self, "switch_times", tuple(int(t) for t in self.switch_times))
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}; expected one of {KINDS}")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if len(self.inr_db) != 2 or self.inr_db[0] > self.inr_db[1]:
            raise ConfigError("inr_db must be a level or an ordered (low, high) pair")
        lo, hi = self.suppression_band
        if not 0 <= lo < hi:
            raise ConfigError("suppression_band must satisfy 0 <= low < high")
        if self.block_len < 1 or not 0 <= self.jitter < self.block_len:
            raise ConfigError("need block_len >= 1 and 0 <= jitter < block_len")
        if list(self.switch_times) != sorted(set(self.switch_times)) or any(
            t <= 0 for t in self.switch_times
        ):
            raise ConfigError("switch_times must be strictly increasing positive indices")
        if not (0 <= self.p_birth <= 1 and 0 <= self.p_death <= 1):
            raise ConfigError("p_birth and p_death must be probabilities")
        pool = len(self.interferer_pool) or self.pool_size
        needed = {
            "abrupt_blocks": self.n_active if self.interferer_pool else 0,
            "piecewise_bearing": 2,
            "piecewise_time": self.n_active + 1,
            "birth_death": self.max_active,
        }[self.kind]
        if self.kind == "piecewise_time" and self.n_active < 1:
            raise ConfigError("piecewise_time needs n_active >= 1")
        if pool < needed:
            raise ConfigError(f"{self.kind} needs an interferer pool of at least {needed} angles")

    @property
    def target_power(self) -> float:
        return 10 ** (self.target_snr_db / 10)

    def with_overrides(self, **kwargs) -> "ScenarioConfig":
        return replace(self, **kwargs)


Regime = Tuple[Tuple[float, float], ...]  # ((angle_deg, power), ...)


@dataclass
class Schedule:
    regimes: List[Regime]
    regime_index: np.ndarray
    # (angle, onset, offset, completed) for birth-death interferers
    episodes: List[Tuple[float, int, int, bool]] = field(default_factory=list)


def draw_pool(config: ScenarioConfig, rng: np.random.Generator, size: int) -> np.ndarray:
    """Rejection-sample angles whose quiescent suppression lies in the band."""
    lo, hi = config.suppression_band
    accepted: List[float] = []
    if size == 0:
        return np.empty(0)
    for _ in range(200):
        cand = rng.uniform(0.0, 180.0, size=256)
        sup = quiescent_suppression_db(config.geometry, config.target_angle, cand)
        for a in cand[(sup >= lo) & (sup <= hi)]:
            if all(abs(a - b) > 1.0 for b in accepted):
                accepted.append(float(a))
            if len(accepted) == size:
                return np.array(accepted)
    raise ConfigError(f"could not find {size} angles with suppression in {config.suppression_band} dB")


def _block_edges(config: ScenarioConfig, rng: np.random.Generator) -> List[int]:
    T = config.horizon
    if config.switch_times:
        return [0] + [t for t in config.switch_times if t < T] + [T]
    edges = [0]
    while edges[-1] < T:
        step = config.block_len
        if config.jitter:
            step += int(rng.integers(-config.jitter, config.jitter + 1))
        edges.append(min(edges[-1] + step, T))
    return edges


def _inr(config: ScenarioConfig, rng: np.random.Generator) -> float:
    lo, hi = config.inr_db
    return 10 ** ((rng.uniform(lo, hi) if hi > lo else lo) / 10)


_MAX_REDRAWS = 100


def realize_schedule(config: ScenarioConfig, rng: np.random.Generator) -> Schedule:
    """Draw the interference schedule (which sources are on when) for one trial."""
    T = config.horizon
    if config.kind == "birth_death":
        return _birth_death(config, rng)
    pool = np.asarray(config.interferer_pool) if config.interferer_pool else None
    if pool is None and config.kind != "abrupt_blocks":
        pool = draw_pool(config, rng, config.pool_size)

    edges = _block_edges(config, rng)
    regimes: List[Regime] = []
    index = np.empty(T, dtype=int)
    previous: frozenset = frozenset()
    for a, b in zip(edges[:-1], edges[1:]):
        # redraw until the active set changes; give up when the pool cannot change it
        for _ in range(_MAX_REDRAWS):
            if config.kind == "abrupt_blocks":
                if pool is None:
                    angles = draw_pool(config, rng, config.n_active)
                else:
                    angles = rng.choice(pool, size=config.n_active, replace=False)
            elif config.kind == "piecewise_bearing":
                angles = rng.choice(pool, size=1)
            else:
                angles = rng.choice(pool, size=config.n_active, replace=False)
            if frozenset(np.round(angles, 9)) != previous:
                break
        previous = frozenset(np.round(angles, 9))
        regimes.append(tuple((float(ang), _inr(config, rng)) for ang in sorted(angles)))
        index[a:b] = len(regimes) - 1
    return Schedule(regimes, index)


def _birth_death(config: ScenarioConfig, rng: np.random.Generator) -> Schedule:
    """Independent on/off Markov slots; a newborn takes a pool angle not in use."""
    T = config.horizon
    pool = np.asarray(config.interferer_pool) if config.interferer_pool else draw_pool(
        config, rng, config.pool_size
    )
    slots: List[Optional[Tuple[float, float, int]]] = [None] * config.max_active
    episodes: List[Tuple[float, int, int, bool]] = []
    regimes: List[Regime] = []
    lookup = {}
    index = np.empty(T, dtype=int)
    u = rng.random((T, config.max_active))
    for t in range(T):
        for s, slot in enumerate(slots):
            if slot is not None:
                if u[t, s] < config.p_death:
                    episodes.append((slot[0], slot[2], t, True))
                    slots[s] = None
            elif u[t, s] < config.p_birth:
                used = {sl[0] for sl in slots if sl is not None}
                free = [a for a in pool if float(a) not in used]
                slots[s] = (float(rng.choice(free)), _inr(config, rng), t)
        regime = tuple(sorted((sl[0], sl[1]) for sl in slots if sl is not None))
        if regime not in lookup:
            lookup[regime] = len(regimes)
            regimes.append(regime)
        index[t] = lookup[regime]
    episodes.extend((sl[0], sl[2], T, False) for sl in slots if sl is not None)
    return Schedule(regimes, index, episodes)


@dataclass
class ScenarioTruth:
    """Generated snapshots plus everything needed by oracle beamformers and metrics."""

    config: ScenarioConfig
    snapshots: np.ndarray
    target: np.ndarray
    steering: SteeringVector
    regimes: List[Regime]
    regime_index: np.ndarray
    episodes: List[Tuple[float, int, int, bool]] = field(default_factory=list)
    noise_power: float = 1.0

    @property
    def geometry(self) -> ArrayGeometry:
        return self.config.geometry

    @property
    def horizon(self) -> int:
        return self.snapshots.shape[1]

    @property
    def target_power(self) -> float:
        return self.config.target_power

    @property
    def true_changepoints(self) -> List[int]:
        """Every index whose active interferer set differs from the previous snapshot's."""
        idx = self.regime_index
        return [int(t) for t in np.flatnonzero(idx[1:] != idx[:-1]) + 1]

    @property
    def schedule(self) -> List[Regime]:
        return [self.regimes[i] for i in self.regime_index]

    def interference_covariances(self) -> np.ndarray:
        """Interference-plus-noise covariance per regime, shape (S, p, p)."""
        p = self.snapshots.shape[0]
        out = np.empty((len(self.regimes), p, p), dtype=complex)
        for r, regime in enumerate(self.regimes):
            R = self.noise_power * np.eye(p, dtype=complex)
            for angle, power in regime:
                a = steering_matrix(self.geometry, [angle])[:, 0]
                R += power * np.outer(a, a.conj())
            out[r] = R
        return out

    def regime_covariances(self) -> np.ndarray:
        nu = self.steering.nu
        return self.interference_covariances() + self.target_power * np.outer(nu, nu.conj())

    @property
    def ensemble_cov(self) -> np.ndarray:
        """Per-snapshot ensemble covariance, shape (T, p, p)."""
        return self.regime_covariances()[self.regime_index]

    def export_csv(self, path) -> None:
        """Write snapshots, target and active set per time index as columns."""
        p = self.snapshots.shape[0]
        header = ["t", "regime", "active", "target_re", "target_im"]
        for m in range(p):
            header += [f"x{m}_re", f"x{m}_im"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for t in range(self.horizon):
                regime = self.regimes[self.regime_index[t]]
                active = ";".join(f"{a:.6f}@{10 * math.log10(pw):.3f}dB" for a, pw in regime)
                s = complex(self.target[t])
                row = [t, int(self.regime_index[t]), active, repr(s.real), repr(s.imag)]
                for v in self.snapshots[:, t].tolist():
                    row += [repr(v.real), repr(v.imag)]
                writer.writerow(row)


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def generate(config: ScenarioConfig) -> ScenarioTruth:
    """Synthesize ``x[t] = s[t] nu + sum_k i_k[t] a_k + n[t]`` for one seeded trial."""
    sched_ss, signal_ss = np.random.SeedSequence(config.seed).spawn(2)
    schedule = realize_schedule(config, np.random.default_rng(sched_ss))
    rng = np.random.default_rng(signal_ss)
    geometry = config.geometry
    p, T = geometry.num_elements, config.horizon
    steering = ula_steering(geometry, config.target_angle)

    target = math.sqrt(config.target_power) * _cn(rng, T)
    X = np.outer(steering.nu, target) + _cn(rng, (p, T))
    idx = schedule.regime_index
    change = np.flatnonzero(np.diff(idx)) + 1
    starts = np.concatenate([[0], change])
    stops = np.concatenate([change, [T]])
    for a, b in zip(starts, stops):
        for angle, power in schedule.regimes[idx[a]]:
            steer = steering_matrix(geometry, [angle])[:, 0]
            X[:, a:b] += np.outer(steer, math.sqrt(power) * _cn(rng, b - a))
    return ScenarioTruth(config, X, target, steering, schedule.regimes, idx, schedule.episodes)
