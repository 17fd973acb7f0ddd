"""Sparse multipath channels and pilot-domain observations.

A channel is a handful of paths ``(tau_r, h_r)``.  With ``N`` subcarriers and a
reduced pilot grid of size ``L = N / V`` the pilot-domain response at reduced
index ``n'`` is

    h[n'] = sum_r h_r exp(-j 2 pi f_r n'),      f_r = tau_r / (L T_s),

so estimating delays is a line-spectral problem in the normalized frequency
``f`` on the torus ``[0, 1)``.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Sequence

import numpy as np

__all__ = [
    "ChannelRealization",
    "ConfigError",
    "OFDMConfig",
    "PilotObservation",
    "PriorBands",
    "SamplingError",
    "add_noise",
    "channel_frequency_response",
    "contiguous_positions",
    "delays_to_frequencies",
    "frequencies_to_delays",
    "observe",
    "pilot_positions",
    "sample_channel",
    "to_reduced_index",
    "wrap_distance",
]

MAX_SAMPLING_ATTEMPTS = 10_000


class ConfigError(ValueError):
    """Inconsistent system geometry or prior description."""


class SamplingError(RuntimeError):
    """Rejection sampling could not satisfy the separation constraint."""


@dataclasses.dataclass(frozen=True)
class OFDMConfig:
    """System geometry.

    Attributes
    ----------
    n_subcarriers : int
        ``N``.
    grid_size : int
        ``L``; must divide ``N``.
    pilot_count : int
        ``P <= L``.
    cp_length : int
        Cyclic prefix length in samples.
    sample_interval : float
        ``T_s`` in seconds.
    """

    n_subcarriers: int = 512
    grid_size: int = 64
    pilot_count: int = 36
    cp_length: int = 64
    sample_interval: float = 1e-6

    def __post_init__(self):
        for name in ("n_subcarriers", "grid_size", "pilot_count", "cp_length"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v <= 0:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not (self.sample_interval > 0 and math.isfinite(self.sample_interval)):
            raise ConfigError(f"sample_interval must be positive, got {self.sample_interval!r}")
        if self.n_subcarriers % self.grid_size:
            raise ConfigError(
                f"grid_size {self.grid_size} must divide n_subcarriers {self.n_subcarriers}"
            )
        if self.pilot_count > self.grid_size:
            raise ConfigError(f"pilot_count {self.pilot_count} exceeds grid_size {self.grid_size}")

    @property
    def decimation(self) -> int:
        """``V = N / L``."""
        return self.n_subcarriers // self.grid_size

    @property
    def max_delay(self) -> float:
        """``L T_s``; delays live in ``[0, L T_s)``."""
        return self.grid_size * self.sample_interval

    def replace(self, **changes) -> "OFDMConfig":
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass(frozen=True)
class ChannelRealization:
    delays: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.delays, dtype=float).ravel()
        g = np.asarray(self.gains, dtype=complex).ravel()
        if d.size < 1 or d.size != g.size:
            raise ValueError("a channel needs at least one path and matching delays/gains")
        if np.any(d < 0):
            raise ValueError("delays must be nonnegative")
        if np.unique(d).size != d.size:
            raise ValueError("delays must be distinct")
        object.__setattr__(self, "delays", d)
        object.__setattr__(self, "gains", g)

    @property
    def n_paths(self) -> int:
        return int(self.delays.size)

    def frequencies(self, config: OFDMConfig) -> np.ndarray:
        return delays_to_frequencies(self.delays, config)

    @classmethod
    def from_frequencies(cls, frequencies, gains, config: OFDMConfig) -> "ChannelRealization":
        return cls(frequencies_to_delays(frequencies, config), gains)


@dataclasses.dataclass(frozen=True)
class PriorBands:
    """Piecewise-constant prior: ``(f_low, f_high, weight)`` triples."""

    bands: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        bands = tuple((float(a), float(b), float(w)) for a, b, w in self.bands)
        if not bands:
            raise ConfigError("at least one band is required")
        for lo, hi, w in bands:
            if not (0.0 <= lo < hi <= 1.0):
                raise ConfigError(f"band ({lo}, {hi}) is not inside [0, 1]")
            if hi == 1.0 and lo != 0.0:
                raise ConfigError(f"band ({lo}, {hi}) must end below 1")
            if not (w > 0 and math.isfinite(w)):
                raise ConfigError(f"band weight must be positive, got {w}")
        ordered = sorted(bands)
        for (lo1, hi1, _), (lo2, _, _) in zip(ordered, ordered[1:]):
            if lo2 < hi1:
                raise ConfigError("bands overlap")
        object.__setattr__(self, "bands", bands)

    def __iter__(self):
        return iter(self.bands)

    def __len__(self):
        return len(self.bands)

    @property
    def total_length(self) -> float:
        return sum(hi - lo for lo, hi, _ in self.bands)

    def contains(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        inside = np.zeros(f.shape, dtype=bool)
        for lo, hi, _ in self.bands:
            inside |= (f >= lo) & (f <= hi)
        return inside

    @classmethod
    def from_list(cls, bands: Sequence[Sequence[float]]) -> "PriorBands":
        return cls(tuple(tuple(b) for b in bands))


@dataclasses.dataclass(frozen=True)
class PilotObservation:
    """Noisy pilot-domain samples on the reduced index set ``R``."""

    positions: np.ndarray
    values: np.ndarray
    noise_variance: float
    grid_size: int

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=int).ravel()
        val = np.asarray(self.values, dtype=complex).ravel()
        if pos.size != val.size:
            raise ValueError("positions and values differ in length")
        if pos.size and (pos.min() < 0 or pos.max() >= self.grid_size):
            raise ValueError("positions must lie in 0..grid_size-1")
        if np.any(np.diff(pos) <= 0):
            raise ValueError("positions must be strictly increasing")
        if not (self.noise_variance >= 0):
            raise ValueError("noise variance must be nonnegative")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "values", val)
        object.__setattr__(self, "noise_variance", float(self.noise_variance))
        object.__setattr__(self, "grid_size", int(self.grid_size))

    @property
    def pilot_count(self) -> int:
        return int(self.positions.size)

    @property
    def noise_std(self) -> float:
        return math.sqrt(self.noise_variance)

    def scaled(self, factor: complex) -> "PilotObservation":
        return dataclasses.replace(
            self, values=self.values * factor, noise_variance=self.noise_variance * abs(factor) ** 2
        )

    def to_json(self) -> dict:
        return {
            "grid_size": self.grid_size,
            "positions": [int(p) for p in self.positions],
            "values": [[float(v.real), float(v.imag)] for v in self.values],
            "noise_variance": self.noise_variance,
        }

    @classmethod
    def from_json(cls, data: dict) -> "PilotObservation":
        values = np.array([complex(re, im) for re, im in data["values"]], dtype=complex)
        return cls(np.array(data["positions"], dtype=int), values, float(data["noise_variance"]),
                   int(data["grid_size"]))


# --------------------------------------------------------------------------


def to_reduced_index(subcarrier, config: OFDMConfig):
    """Map pilot subcarrier indices ``n_p`` (multiples of ``V``) to ``n'_p = (L/N) n_p``."""
    n = np.asarray(subcarrier)
    if np.any(n % config.decimation):
        raise ValueError("pilot subcarriers must be multiples of N / L")
    return n // config.decimation


def pilot_positions(config: OFDMConfig, seed: int) -> np.ndarray:
    """``P`` distinct reduced indices drawn uniformly without replacement, sorted."""
    if config.pilot_count > config.grid_size:
        raise ConfigError("pilot_count exceeds grid_size")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(config.grid_size, size=config.pilot_count, replace=False))


def contiguous_positions(config: OFDMConfig) -> np.ndarray:
    """The first ``P`` reduced indices, used by subspace baselines that need uniform sampling."""
    return np.arange(config.pilot_count)


def delays_to_frequencies(delays, config: OFDMConfig) -> np.ndarray:
    d = np.asarray(delays, dtype=float)
    if np.any(d < 0) or np.any(d >= config.max_delay):
        raise ValueError(f"delays must lie in [0, {config.max_delay})")
    return d / config.max_delay


def frequencies_to_delays(frequencies, config: OFDMConfig) -> np.ndarray:
    return np.asarray(frequencies, dtype=float) * config.max_delay


def wrap_distance(a, b):
    """Distance on the unit torus."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 1.0
    return np.minimum(d, 1.0 - d)


def _steering(frequencies, positions) -> np.ndarray:
    """``Z[p, r] = exp(-j 2 pi f_r n_p)``."""
    return np.exp(-2j * np.pi * np.outer(np.asarray(positions, float), np.asarray(frequencies, float)))


def channel_frequency_response(channel: ChannelRealization, config: OFDMConfig, positions) -> np.ndarray:
    positions = np.asarray(positions)
    if positions.size and (positions.min() < 0 or positions.max() >= config.grid_size):
        raise ValueError("positions must lie in 0..L-1")
    return _steering(channel.frequencies(config), positions) @ channel.gains


def sample_channel(
    bands: PriorBands,
    n_paths: int,
    min_separation: float,
    seed,
    config: OFDMConfig | None = None,
) -> ChannelRealization:
    """Random in-band channel with separated frequencies.

    Frequencies are drawn uniformly on the union of bands (a band is picked
    with probability proportional to its length) and a draw is rejected until
    its wrap-around distance to every earlier path is at least
    ``min_separation``.  Gains have uniform phase and magnitude in [0.5, 1.5].

    Parameters
    ----------
    config : OFDMConfig, optional
        Sets the delay scale ``L T_s``; the default geometry is used if omitted.

    Raises
    ------
    SamplingError
        If the attempt budget runs out.
    """
    config = config or OFDMConfig()
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    rng = np.random.default_rng(seed)
    lows = np.array([b[0] for b in bands])
    lengths = np.array([b[1] - b[0] for b in bands])
    probs = lengths / lengths.sum()
    freqs: list[float] = []
    attempts = 0
    while len(freqs) < n_paths:
        attempts += 1
        if attempts > MAX_SAMPLING_ATTEMPTS:
            raise SamplingError(
                f"could not place {n_paths} paths with separation {min_separation} in the bands"
            )
        k = rng.choice(len(probs), p=probs)
        f = float(lows[k] + lengths[k] * rng.random())
        if f >= 1.0:
            continue
        if freqs and np.min(wrap_distance(f, freqs)) < min_separation:
            continue
        freqs.append(f)
    mags = rng.uniform(0.5, 1.5, size=n_paths)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_paths)
    return ChannelRealization.from_frequencies(np.array(freqs), mags * np.exp(1j * phases), config)


def add_noise(clean, snr_db: float, seed) -> tuple[np.ndarray, float]:
    """Add circular complex Gaussian noise at ``snr_db`` relative to the mean signal power.

    ``snr_db = inf`` returns an exact copy and zero variance.
    """
    clean = np.asarray(clean, dtype=complex)
    if clean.size == 0:
        raise ValueError("clean signal is empty")
    if math.isinf(snr_db) and snr_db > 0:
        return clean.copy(), 0.0
    power = float(np.mean(np.abs(clean) ** 2))
    var = power * 10.0 ** (-snr_db / 10.0)
    rng = np.random.default_rng(seed)
    w = rng.normal(scale=math.sqrt(var / 2.0), size=(2,) + clean.shape)
    return clean + (w[0] + 1j * w[1]), var


def observe(
    channel: ChannelRealization,
    config: OFDMConfig,
    positions,
    snr_db: float,
    seed,
) -> PilotObservation:
    """Noisy pilot observation of ``channel`` at ``positions``."""
    positions = np.asarray(positions, dtype=int)
    clean = channel_frequency_response(channel, config, positions)
    noisy, var = add_noise(clean, snr_db, seed)
    return PilotObservation(positions, noisy, var, config.grid_size)
