"""Monte Carlo sweeps comparing the weighted estimator with its baselines.

Every random draw of a trial comes from seeds derived from
``(master_seed, trial)`` only.  All methods and all sweep points therefore see
the same random draws for a given trial index, which pairs the comparisons and
removes most of the trial-to-trial variance from the curves.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import io
import logging
import math
import time
import warnings
from typing import Iterable, Sequence

import numpy as np

from .atomsr import estimate_channel_atomsr
from .recovery import least_squares_gains, reconstruct_response
from .signal_model import (
    ChannelRealization,
    OFDMConfig,
    PriorBands,
    SamplingError,
    contiguous_positions,
    observe,
    pilot_positions,
    sample_channel,
    wrap_distance,
)
from .spectral_baselines import music_frequencies
from .weighted_ast import estimate_channel_weighted

__all__ = [
    "METHODS",
    "SweepResult",
    "SweepSpec",
    "TrialRecord",
    "mse",
    "read_trials_csv",
    "rsr",
    "run_sweep",
    "summarize",
    "sweep_pilots",
    "sweep_separation",
    "sweep_snr",
    "summary_csv",
    "trials_csv",
]

log = logging.getLogger(__name__)

METHODS = ("weighted", "atomsr", "music")
FAILURE_LIMIT = 0.2
TRIAL_COLUMNS = ("trial", "method", "parameter", "mse", "rsr", "n_found", "wall_ms", "seed")
SUMMARY_COLUMNS = ("parameter", "method", "mean_mse", "median_mse", "mean_rsr", "trials")

DEFAULT_BANDS = PriorBands(((0.15, 0.30, 1.0), (0.70, 0.85, 1.0)))
SEPARATION_BAND = PriorBands(((0.15, 0.30, 1.0),))


def mse(estimated, truth) -> float:
    """Mean squared error over the subcarriers."""
    a = np.asarray(estimated, dtype=complex)
    b = np.asarray(truth, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b) ** 2))


def match_frequencies(found, truth, tolerance: float) -> list[tuple[int, int, float]]:
    """Greedy one-to-one matching by ascending wrap-around distance.

    Returns ``(found index, truth index, distance)`` for every pair within
    ``tolerance``.
    """
    found = np.asarray(found, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if found.size == 0 or truth.size == 0:
        return []
    d = wrap_distance(found[:, None], truth[None, :])
    order = np.argsort(d, axis=None, kind="stable")
    used_f, used_t, pairs = set(), set(), []
    for flat in order:
        i, j = divmod(int(flat), truth.size)
        if d[i, j] > tolerance:
            break
        if i in used_f or j in used_t:
            continue
        used_f.add(i)
        used_t.add(j)
        pairs.append((i, j, float(d[i, j])))
    return pairs


def rsr(found, truth, match_tolerance: float) -> float:
    """Fraction of found frequencies matched to a distinct true frequency."""
    found = np.asarray(found, dtype=float).ravel()
    if found.size == 0:
        return 0.0
    return len(match_frequencies(found, truth, match_tolerance)) / found.size


@dataclasses.dataclass(frozen=True)
class TrialRecord:
    trial: int
    method: str
    parameter: float
    seed: int
    mse: float
    rsr: float
    found: tuple
    truth: tuple
    iterations: int = 0
    wall_ms: float = 0.0
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def n_found(self) -> int:
        return len(self.found)


@dataclasses.dataclass
class SweepSpec:
    """Everything a sweep needs; picklable so workers can rebuild trials."""

    kind: str
    config: OFDMConfig
    bands: PriorBands
    parameters: tuple
    trials: int = 100
    seed: int = 0
    methods: tuple = ("weighted", "atomsr")
    n_paths: int = 4
    snr_db: float = 20.0
    min_separation: float | None = None
    fixed_frequency: float = 0.17
    match_tolerance: float | None = None
    record_timing: bool = True

    def __post_init__(self):
        if self.kind not in ("pilots", "snr", "separation"):
            raise ValueError(f"unknown sweep kind {self.kind!r}")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        self.parameters = tuple(float(p) for p in self.parameters)
        self.methods = tuple(self.methods)

    @property
    def separation(self) -> float:
        return 4.0 / self.config.n_subcarriers if self.min_separation is None else self.min_separation

    @property
    def tolerance(self) -> float:
        return 2.0 / self.config.n_subcarriers if self.match_tolerance is None else self.match_tolerance


@dataclasses.dataclass
class PointSummary:
    parameter: float
    method: str
    mean_mse: float
    median_mse: float
    mean_rsr: float
    trials: int
    failures: int

    @property
    def valid(self) -> bool:
        total = self.trials + self.failures
        return total > 0 and self.failures <= FAILURE_LIMIT * total


@dataclasses.dataclass
class SweepResult:
    spec: SweepSpec
    records: list[TrialRecord]

    @property
    def parameters(self) -> tuple:
        return self.spec.parameters

    def summary(self) -> list[PointSummary]:
        return summarize(self.records, self.spec.parameters, self.spec.methods)

    def point(self, parameter: float, method: str) -> PointSummary:
        for s in self.summary():
            if s.parameter == float(parameter) and s.method == method:
                return s
        raise KeyError((parameter, method))

    def select(self, parameter: float, method: str) -> list[TrialRecord]:
        return [r for r in self.records if r.parameter == float(parameter) and r.method == method]


def summarize(records: Iterable[TrialRecord], parameters: Sequence[float], methods: Sequence[str]) -> list[PointSummary]:
    """Per-(parameter, method) aggregates over successful trials, in trial order."""
    by_key: dict[tuple, list[TrialRecord]] = {}
    for r in records:
        by_key.setdefault((r.parameter, r.method), []).append(r)
    out = []
    for p in parameters:
        for m in methods:
            rs = sorted(by_key.get((float(p), m), []), key=lambda r: r.trial)
            ok = [r for r in rs if not r.failed]
            if ok:
                e = np.array([r.mse for r in ok])
                s = np.array([r.rsr for r in ok])
                out.append(PointSummary(float(p), m, float(np.mean(e)), float(np.median(e)), float(np.mean(s)),
                                        len(ok), len(rs) - len(ok)))
            else:
                out.append(PointSummary(float(p), m, math.nan, math.nan, math.nan, 0, len(rs)))
    return out


# --------------------------------------------------------------------- trials


def trial_seeds(master: int, trial: int) -> tuple[int, np.random.SeedSequence, np.random.SeedSequence, np.random.SeedSequence]:
    """Recorded seed followed by one child sequence per random stream."""
    root = np.random.SeedSequence([int(master), int(trial)])
    recorded = int(root.generate_state(1)[0])
    channel, pilots, noise = root.spawn(3)
    return recorded, channel, pilots, noise


def _point_setup(spec: SweepSpec, parameter: float) -> tuple[OFDMConfig, float]:
    cfg, snr = spec.config, spec.snr_db
    if spec.kind == "pilots":
        cfg = cfg.replace(pilot_count=int(round(parameter)))
    elif spec.kind == "snr":
        snr = float(parameter)
    return cfg, snr


def _channel_for(spec: SweepSpec, parameter: float, cfg: OFDMConfig, channel_seed) -> ChannelRealization:
    if spec.kind == "separation":
        if parameter <= 0:
            raise ValueError("separation must be positive; coincident frequencies are not a valid channel")
        rng = np.random.default_rng(channel_seed)
        freqs = np.array([spec.fixed_frequency, (spec.fixed_frequency + parameter) % 1.0])
        gains = rng.uniform(0.5, 1.5, 2) * np.exp(2j * np.pi * rng.uniform(size=2))
        return ChannelRealization.from_frequencies(freqs, gains, cfg)
    return sample_channel(spec.bands, spec.n_paths, spec.separation, channel_seed, cfg)


def _estimate(method: str, spec: SweepSpec, cfg: OFDMConfig, channel: ChannelRealization,
              pilot_seed, noise_seed, snr: float):
    """Run one method; returns (frequencies, gains, observation config, iterations)."""
    if method == "music":
        obs = observe(channel, cfg, contiguous_positions(cfg), snr, noise_seed)
        _, freqs = music_frequencies(obs, channel.n_paths)
        return freqs, least_squares_gains(freqs, obs), 0
    obs = observe(channel, cfg, pilot_positions(cfg, pilot_seed), snr, noise_seed)
    if method == "weighted":
        est = estimate_channel_weighted(obs, spec.bands, cfg)
        return est.frequencies, est.gains, est.certificate.iterations
    est = estimate_channel_atomsr(obs, cfg)
    return est.frequencies, est.gains, est.solution.iterations


def run_trial(spec: SweepSpec, parameter: float, trial: int) -> list[TrialRecord]:
    """All methods of one trial at one sweep point."""
    recorded, channel_seed, pilot_seed, noise_seed = trial_seeds(spec.seed, trial)
    cfg, snr = _point_setup(spec, parameter)
    try:
        channel = _channel_for(spec, parameter, cfg, channel_seed)
    except (ValueError, SamplingError) as exc:
        error = f"{type(exc).__name__}: {exc}"
        return [TrialRecord(trial, m, float(parameter), recorded, math.nan, math.nan, (), (), error=error)
                for m in spec.methods]
    truth_f = channel.frequencies(cfg)
    truth_h = reconstruct_response(truth_f, channel.gains, cfg)
    out = []
    for method in spec.methods:
        start = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                freqs, gains, iters = _estimate(method, spec, cfg, channel, pilot_seed, noise_seed, snr)
            err = mse(reconstruct_response(freqs, gains, cfg), truth_h)
            score = rsr(freqs, truth_f, spec.tolerance)
            error = None
        except Exception as exc:  # a failed trial is data, not a crash
            log.debug("trial %d method %s failed: %s", trial, method, exc)
            freqs, iters, err, score, error = np.zeros(0), 0, math.nan, math.nan, f"{type(exc).__name__}: {exc}"
        wall = (time.perf_counter() - start) * 1e3 if spec.record_timing else 0.0
        out.append(TrialRecord(trial, method, float(parameter), recorded, err, score,
                                tuple(float(f) for f in np.sort(freqs)), tuple(float(f) for f in np.sort(truth_f)),
                                int(iters), wall, error))
    return out


def _run_task(args) -> list[TrialRecord]:
    spec, parameter, trial = args
    return run_trial(spec, parameter, trial)


def run_sweep(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    """Run every (parameter, trial) pair, in parallel when ``jobs > 1``.

    Records come back in a fixed order that does not depend on scheduling.
    """
    tasks = [(spec, p, t) for p in spec.parameters for t in range(spec.trials)]
    if jobs > 1 and len(tasks) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_task, tasks, chunksize=1))
    else:
        chunks = [_run_task(t) for t in tasks]
    records = [r for chunk in chunks for r in chunk]
    p_index = {p: i for i, p in enumerate(spec.parameters)}
    m_index = {m: i for i, m in enumerate(spec.methods)}
    records.sort(key=lambda r: (p_index[r.parameter], r.trial, m_index[r.method]))
    result = SweepResult(spec, records)
    for s in result.summary():
        if not s.valid:
            log.warning("point %s for %s is invalid: %d of %d trials failed", s.parameter, s.method,
                        s.failures, s.trials + s.failures)
    return result


def sweep_pilots(config: OFDMConfig | None = None, pilot_counts: Sequence[int] = tuple(range(24, 43, 3)),
                 trials: int = 100, seed: int = 0, jobs: int = 1, **options) -> SweepResult:
    """Weighted against AtomSR as the pilot count varies, at 20 dB by default."""
    options.setdefault("bands", DEFAULT_BANDS)
    spec = SweepSpec("pilots", config or OFDMConfig(), parameters=tuple(pilot_counts), trials=trials,
                     seed=seed, **options)
    return run_sweep(spec, jobs)


def sweep_snr(config: OFDMConfig | None = None, snrs: Sequence[float] = (5, 10, 15, 20, 25, 30),
              trials: int = 100, seed: int = 0, jobs: int = 1, **options) -> SweepResult:
    """Weighted against AtomSR and MUSIC as the SNR varies, with 36 pilots by default."""
    options.setdefault("bands", DEFAULT_BANDS)
    options.setdefault("methods", METHODS)
    spec = SweepSpec("snr", config or OFDMConfig(pilot_count=36), parameters=tuple(snrs), trials=trials,
                     seed=seed, **options)
    return run_sweep(spec, jobs)


def sweep_separation(config: OFDMConfig | None = None,
                     separations: Sequence[float] = tuple(k / 256 for k in (0.5, 1, 2, 3, 4, 5, 6, 8)),
                     trials: int = 100, seed: int = 0, jobs: int = 1, **options) -> SweepResult:
    """Two noiseless paths, one fixed at 0.17 and one at ``0.17 + separation``."""
    options.setdefault("bands", SEPARATION_BAND)
    options.setdefault("methods", ("weighted",))
    options.setdefault("snr_db", math.inf)
    options.setdefault("n_paths", 2)
    cfg = config or OFDMConfig(n_subcarriers=256, grid_size=32, pilot_count=20)
    spec = SweepSpec("separation", cfg, parameters=tuple(separations), trials=trials, seed=seed, **options)
    return run_sweep(spec, jobs)


# ------------------------------------------------------------------------ csv


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def trials_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_COLUMNS)
    for r in result.records:
        w.writerow([_fmt(v) for v in (r.trial, r.method, r.parameter, r.mse, r.rsr, r.n_found, r.wall_ms, r.seed)])
    return buf.getvalue()


def summary_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for s in result.summary():
        w.writerow([_fmt(v) for v in (s.parameter, s.method, s.mean_mse, s.median_mse, s.mean_rsr, s.trials)])
    return buf.getvalue()


def read_trials_csv(text: str) -> list[TrialRecord]:
    """Parse a trial CSV back into records (frequencies are not stored)."""
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        err = float(row["mse"])
        out.append(TrialRecord(int(row["trial"]), row["method"], float(row["parameter"]), int(row["seed"]),
                               err, float(row["rsr"]), (math.nan,) * int(row["n_found"]), (),
                               wall_ms=float(row["wall_ms"]), error=None if not math.isnan(err) else "failed"))
    return out
