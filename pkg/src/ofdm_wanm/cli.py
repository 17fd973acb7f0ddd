"""Command-line interface with one subcommand per task.

Exit codes::

    1  configuration error
    2  solver failure
    3  I/O error

Every output file is written to a temporary name and renamed into
place, and no report contains a timestamp, so identical inputs give
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import metrics_harness as mh
from . import svg
from .atomsr import DegenerateSpectrumError, estimate_channel_atomsr
from .recovery import reconstruct_response
from .signal_model import (
    ConfigError,
    OFDMConfig,
    PilotObservation,
    PriorBands,
    SamplingError,
    observe,
    pilot_positions,
    sample_channel,
)
from .weighted_ast import EstimationError, dual_polynomial, estimate_channel_weighted, extract_frequencies, solve_dual

log = logging.getLogger("ofdm_wanm")

EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 1, 2, 3
SWEEPS = ("pilots", "snr", "separation")
CERTIFY_SAMPLES = 10_000

_OFDM_KEYS = ("n_subcarriers", "grid_size", "pilot_count", "cp_length", "sample_interval")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclasses.dataclass
class ExperimentConfig:
    """Everything a command needs, loadable from a JSON document."""

    ofdm: OFDMConfig = dataclasses.field(default_factory=OFDMConfig)
    bands: PriorBands = mh.DEFAULT_BANDS
    methods: tuple = ("weighted", "atomsr")
    sweep: str = "pilots"
    values: tuple = tuple(range(24, 43, 3))
    trials: int = 100
    seed: int = 0
    output_dir: str = "results"
    snr_db: float = 20.0
    n_paths: int = 4
    min_separation: float | None = None

    KEYS = ("bands", "methods", "sweep", "trials", "seed", "output_dir", "snr_db", "n_paths",
            "min_separation") + _OFDM_KEYS

    @classmethod
    def from_dict(cls, data: dict, base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = sorted(set(data) - set(cls.KEYS))
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        cfg = dataclasses.replace(base) if base is not None else cls()
        ofdm = {k: data[k] for k in _OFDM_KEYS if k in data}
        if ofdm:
            cfg.ofdm = cfg.ofdm.replace(**ofdm)
        if "bands" in data:
            try:
                cfg.bands = PriorBands.from_list(data["bands"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid bands: {exc}") from exc
        if "sweep" in data:
            sweep = data["sweep"]
            if not isinstance(sweep, dict) or set(sweep) - {"kind", "values"} or "kind" not in sweep:
                raise ConfigError('sweep must be an object with keys "kind" and optionally "values"')
            if sweep["kind"] not in SWEEPS:
                raise ConfigError(f"unknown sweep {sweep['kind']!r}; choose from {', '.join(SWEEPS)}")
            cfg.sweep = sweep["kind"]
            cfg.values = tuple(sweep.get("values", PRESET_VALUES[cfg.sweep]))
        if "methods" in data:
            cfg.methods = tuple(data["methods"])
        for key in ("trials", "seed", "n_paths"):
            if key in data:
                setattr(cfg, key, data[key])
        if "output_dir" in data:
            cfg.output_dir = str(data["output_dir"])
        if "snr_db" in data:
            cfg.snr_db = parse_snr(data["snr_db"])
        if "min_separation" in data:
            cfg.min_separation = None if data["min_separation"] is None else float(data["min_separation"])
        cfg.validate()
        return cfg

    def validate(self) -> None:
        bad = set(self.methods) - set(mh.METHODS)
        if bad or not self.methods:
            raise ConfigError(f"methods must be a nonempty subset of {', '.join(mh.METHODS)}")
        for key in ("trials", "n_paths"):
            v = getattr(self, key)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{key} must be a positive integer")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        if self.sweep not in SWEEPS:
            raise ConfigError(f"unknown sweep {self.sweep!r}")
        if not self.values:
            raise ConfigError("sweep values must be nonempty")
        if self.sweep == "pilots":
            for p in self.values:
                if int(p) != p or not 1 <= p <= self.ofdm.grid_size:
                    raise ConfigError(f"pilot count {p} must be an integer in [1, {self.ofdm.grid_size}]")
        if self.sweep == "separation" and any(v <= 0 for v in self.values):
            raise ConfigError("separations must be positive")

    def sweep_spec(self, record_timing: bool = True) -> mh.SweepSpec:
        return mh.SweepSpec(self.sweep, self.ofdm, self.bands, tuple(self.values), trials=self.trials,
                            seed=self.seed, methods=self.methods, n_paths=self.n_paths, snr_db=self.snr_db,
                            min_separation=self.min_separation, record_timing=record_timing)


PRESET_VALUES = {
    "pilots": tuple(range(24, 43, 3)),
    "snr": (5.0, 10.0, 15.0, 20.0, 25.0, 30.0),
    "separation": tuple(k / 256 for k in (0.5, 1, 1.5, 2, 3, 4, 5, 6, 8, 10)),
}

_SEPARATION_SETUP = dict(
    ofdm=OFDMConfig(n_subcarriers=256, grid_size=32, pilot_count=20),
    bands=mh.SEPARATION_BAND, methods=("weighted",), sweep="separation",
    values=PRESET_VALUES["separation"], snr_db=math.inf, n_paths=2, trials=100,
)

PRESETS = {
    "fig3": dict(sweep="pilots", values=PRESET_VALUES["pilots"], methods=("weighted", "atomsr"), trials=1000),
    "fig5": dict(ofdm=OFDMConfig(pilot_count=36), sweep="snr", values=PRESET_VALUES["snr"],
                 methods=mh.METHODS, trials=1000),
    "fig6": dict(_SEPARATION_SETUP),
    "fig7": dict(_SEPARATION_SETUP),
}


def parse_snr(value) -> float:
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "+inf", "infinity"):
            return math.inf
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"invalid SNR {value!r}; give a number in dB or 'inf'") from None
    if isinstance(value, (int, float)) and not isinstance(value, bool) and not math.isnan(value):
        return float(value)
    raise ConfigError(f"invalid SNR {value!r}")


def load_config(path: str | None, preset: str | None) -> ExperimentConfig:
    base = ExperimentConfig()
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        base = dataclasses.replace(base, **PRESETS[preset])
    if path is None:
        return base
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc.strerror or exc}", EXIT_IO) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data, base)


# ---------------------------------------------------------------------- output


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _emit(text: str, out: str | None, name: str) -> Path | None:
    if out is None:
        sys.stdout.write(text)
        return None
    path = Path(out) / name
    atomic_write(path, text)
    return path


def _complex_list(values) -> list:
    return [[float(v.real), float(v.imag)] for v in np.asarray(values, dtype=complex)]


# -------------------------------------------------------------------- commands


def _observation(args, cfg: ExperimentConfig):
    """Observation plus the true channel when it was synthesized."""
    if args.observation is not None:
        try:
            data = json.loads(Path(args.observation).read_text())
        except OSError as exc:
            raise CliError(f"cannot read observation file {args.observation}: {exc.strerror or exc}", EXIT_IO) from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"observation file {args.observation} is not valid JSON: {exc}") from exc
        try:
            obs = PilotObservation.from_json(data)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid observation file {args.observation}: {exc}") from exc
        if obs.grid_size != cfg.ofdm.grid_size:
            raise ConfigError(f"observation grid size {obs.grid_size} differs from config {cfg.ofdm.grid_size}")
        return obs, None
    if not args.synthesize:
        raise ConfigError("give an observation file with --observation or use --synthesize")
    snr = cfg.snr_db if args.snr is None else parse_snr(args.snr)
    n_paths = cfg.n_paths if args.paths is None else args.paths
    seed = cfg.seed if args.seed is None else args.seed
    _, channel_seed, pilot_seed, noise_seed = mh.trial_seeds(seed, 0)
    sep = cfg.min_separation if cfg.min_separation is not None else 4.0 / cfg.ofdm.n_subcarriers
    try:
        channel = sample_channel(cfg.bands, n_paths, sep, channel_seed, cfg.ofdm)
    except SamplingError as exc:
        raise ConfigError(str(exc)) from exc
    obs = observe(channel, cfg.ofdm, pilot_positions(cfg.ofdm, pilot_seed), snr, noise_seed)
    return obs, channel


def cmd_estimate(args) -> int:
    cfg = load_config(args.config, args.preset)
    obs, channel = _observation(args, cfg)
    method = args.method
    if method == "weighted":
        est = estimate_channel_weighted(obs, cfg.bands, cfg.ofdm)
        cert = est.certificate
        diagnostics = {"iterations": cert.iterations, "kkt_residuals": list(cert.residuals),
                       "dual_objective": cert.objective}
    else:
        est = estimate_channel_atomsr(obs, cfg.ofdm)
        diagnostics = {"iterations": est.solution.iterations, "mu": est.solution.mu,
                       "objective": est.solution.objective}
    report = {
        "method": method,
        "frequencies": [float(f) for f in est.frequencies],
        "delays": [float(d) for d in est.delays],
        "gains": _complex_list(est.gains),
        "n_paths": est.n_paths,
        "solver": diagnostics,
    }
    if channel is not None:
        truth_f = channel.frequencies(cfg.ofdm)
        truth_h = reconstruct_response(truth_f, channel.gains, cfg.ofdm)
        report["truth"] = {"frequencies": [float(f) for f in truth_f], "gains": _complex_list(channel.gains)}
        report["mse"] = mh.mse(reconstruct_response(est.frequencies, est.gains, cfg.ofdm), truth_h)
        report["observation"] = obs.to_json()
    _emit(_json(report), args.out, "estimate.json")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.preset)
    if args.name is not None:
        if args.name not in SWEEPS:
            raise ConfigError(f"unknown sweep {args.name!r}; choose from {', '.join(SWEEPS)}")
        if args.name != cfg.sweep:
            cfg.sweep = args.name
            cfg.values = PRESET_VALUES[args.name]
    if args.trials is not None:
        cfg.trials = args.trials
    if args.seed is not None:
        cfg.seed = args.seed
    if args.snr is not None:
        cfg.snr_db = parse_snr(args.snr)
    cfg.validate()
    out = Path(args.out if args.out is not None else cfg.output_dir)
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    result = mh.run_sweep(cfg.sweep_spec(record_timing=not args.no_timing), jobs=max(1, jobs))
    name = cfg.sweep
    atomic_write(out / f"{name}_trials.csv", mh.trials_csv(result))
    atomic_write(out / f"{name}_summary.csv", mh.summary_csv(result))
    summary = result.summary()
    xlabel = {"pilots": "pilot count P", "snr": "SNR (dB)", "separation": "frequency separation"}[name]
    if name == "separation":
        series = {m: ([s.parameter for s in summary if s.method == m],
                      [s.mean_rsr for s in summary if s.method == m]) for m in cfg.methods}
        atomic_write(out / f"{name}.svg", svg.line_plot(series, "Rate of successful recovery", xlabel, "mean RSR"))
        pts = {"estimated": ([r.parameter for r in result.records for _ in r.found],
                             [f for r in result.records for f in r.found])}
        atomic_write(out / f"{name}_frequencies.svg",
                     svg.scatter_plot(pts, "Estimated frequencies", xlabel, "f", ylim=(cfg.bands.bands[0][0], cfg.bands.bands[0][1])))
    else:
        series = {m: ([s.parameter for s in summary if s.method == m],
                      [s.median_mse for s in summary if s.method == m]) for m in cfg.methods}
        atomic_write(out / f"{name}.svg", svg.line_plot(series, "Median MSE", xlabel, "MSE", log_y=True))
    return 0


def certificate_report(obs: PilotObservation, bands: PriorBands, samples: int = CERTIFY_SAMPLES) -> tuple[dict, tuple]:
    cert = solve_dual(obs, bands)
    per_band = []
    for lo, hi, w in bands:
        f = np.linspace(lo, min(hi, 1.0), samples, endpoint=hi < 1.0)
        mag = np.abs(dual_polynomial(cert, f % 1.0))
        per_band.append({"f_low": lo, "f_high": hi, "weight": w, "max_ratio": float(mag.max() / w),
                         "argmax": float(f[int(np.argmax(mag))] % 1.0)})
    # points outside every band, evenly spaced over the complement
    grid = (np.arange(samples * 8) + 0.5) / (samples * 8)
    outside = grid[~bands.contains(grid)]
    if outside.size > samples:
        outside = outside[np.linspace(0, outside.size - 1, samples).astype(int)]
    out_max = float(np.abs(dual_polynomial(cert, outside)).max()) if outside.size else 0.0
    attain = extract_frequencies(cert, bands)
    report = {
        "bands": per_band,
        "outside_max": out_max,
        "attainment_points": [float(a) for a in attain],
        "dual_objective": cert.objective,
        "iterations": cert.iterations,
        "q": _complex_list(cert.q),
    }
    fine = np.arange(4000) / 4000
    return report, (fine, np.abs(dual_polynomial(cert, fine)))


def cmd_certify(args) -> int:
    cfg = load_config(args.config, args.preset)
    obs, channel = _observation(args, cfg)
    report, (f, mag) = certificate_report(obs, cfg.bands)
    truth = channel.frequencies(cfg.ofdm) if channel is not None else ()
    if channel is not None:
        report["truth"] = [float(t) for t in truth]
    _emit(_json(report), args.out, "certificate.json")
    if args.out is not None:
        atomic_write(Path(args.out) / "certificate.svg", svg.certificate_plot(f, mag, cfg.bands, truth))
    return 0


# ---------------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1), not argparse's exit 2."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ofdm-wanm", description="Weighted atomic-norm OFDM channel estimation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, synth: bool):
        p.add_argument("--config", metavar="PATH", help="JSON experiment configuration")
        p.add_argument("--preset", choices=sorted(PRESETS), help="start from a named configuration")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--snr", help="SNR in dB, or 'inf'")
        if synth:
            p.add_argument("--observation", metavar="PATH", help="observation JSON file")
            p.add_argument("--synthesize", action="store_true", help="draw a random channel and observation")
            p.add_argument("--paths", type=int, help="number of paths when synthesizing")

    p = sub.add_parser("estimate", help="estimate a channel from pilots")
    common(p, True)
    p.add_argument("--method", choices=("weighted", "atomsr"), default="weighted")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", help="run a Monte Carlo sweep")
    common(p, False)
    p.add_argument("name", nargs="?", help="sweep kind to run (default: from the config)")
    p.add_argument("--trials", type=int, help="trials per sweep point")
    p.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    p.add_argument("--no-timing", action="store_true", help="write wall_ms as 0 for byte-identical reruns")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("certify", help="solve the dual and inspect its certificate")
    common(p, True)
    p.set_defaults(func=cmd_certify)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, SamplingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EstimationError, DegenerateSpectrumError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
