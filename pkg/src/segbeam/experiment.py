"""Monte Carlo experiment runner.

Each trial regenerates its scene from ``base_seed + trial`` and runs the
whole roster, so trials are independent and may run in any process. Results
are reduced in trial order, which keeps every output file byte-identical
regardless of the worker count.

Files written to the output directory:

``summary.json`` / ``summary.csv``
    Per beamformer mean and standard deviation of ``final_cum_mse``,
    ``mean_sinr_db`` and ``n_changepoints``.
``trials.csv``
    One row per (trial, beamformer) with the same three metrics.
``changepoints.json``
    Per trial, the true changepoints and each segmenter's segment starts.
``traces.csv``
    Per-snapshot ``trial, t, algorithm, z_re, z_im, cum_cost, cum_mse``.
``btr.csv``
    Written by :func:`run_btr`: ``angle, t, power_db``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import beamformers as bf
from .config import DELTA_AUTO, BeamformerSpec, ExperimentConfig
from .linalg import NumericError
from .metrics import btr, cumulative_power, mse_trace, sample_stride, sinr_trace, to_db
from .scenarios import ScenarioTruth, generate
from .segmentation import bsb, osb_run, osrls, relative_penalty

log = logging.getLogger(__name__)

WORKERS_ENV = "SEGBEAM_WORKERS"
TRACE_HEADER = ("trial", "t", "algorithm", "z_re", "z_im", "cum_cost", "cum_mse")
METRICS = ("final_cum_mse", "mean_sinr_db", "n_changepoints")
CONSTRAINT_TOL = 1e-9
# Genie predictors fit the waveform, not a distortionless constraint.
UNCONSTRAINED = ("osrls",)


@dataclass
class BeamformerOutput:
    z: np.ndarray
    W: Optional[np.ndarray]
    starts: List[int] = field(default_factory=list)
    # detection time of each start, for online segmenters
    declared: Optional[List[int]] = None
    penalty: Optional[float] = None


def _delta(spec: BeamformerSpec, X: np.ndarray) -> float:
    delta = spec.params.get("delta", DELTA_AUTO)
    return bf.default_loading(X) if delta == DELTA_AUTO else float(delta)


def _penalty(spec: BeamformerSpec, X: np.ndarray) -> float:
    if "C" in spec.params:
        return float(spec.params["C"])
    return relative_penalty(X, float(spec.params["c_rel"]))


def run_beamformer(
    spec: BeamformerSpec, truth: ScenarioTruth, nu: Optional[np.ndarray] = None
) -> BeamformerOutput:
    """Run one roster entry on a scene, steered at ``nu`` (default: the target)."""
    X = truth.snapshots
    nu = truth.steering.nu if nu is None else nu
    T = X.shape[1]
    kind, params = spec.kind, spec.params

    if kind == "cbf":
        w = bf.conventional_weights(nu)
        return BeamformerOutput(w.conj() @ X, np.broadcast_to(w, (T, len(w))))
    if kind == "batch_capon":
        z, w = bf.batch_capon_run(X, nu, _delta(spec, X))
        return BeamformerOutput(z, np.broadcast_to(w, (T, len(w))))
    if kind == "adaptive_mvdr":
        return BeamformerOutput(*bf.adaptive_mvdr_run(X, nu, _delta(spec, X)))
    if kind == "gsc":
        return BeamformerOutput(*bf.gsc_run(X, nu, _delta(spec, X)))
    if kind == "sliding_mpdr":
        return BeamformerOutput(*bf.sliding_mpdr_run(X, nu, params["K"], _delta(spec, X)))
    if kind == "omniscient":
        return BeamformerOutput(*bf.omniscient_capon_run(truth, nu, float(params["delta"])))
    if kind == "bsb":
        C = _penalty(spec, X)
        z, part = bsb(X, nu, C, _delta(spec, X))
        W = np.concatenate([np.broadcast_to(s.weights, (len(s), X.shape[0])) for s in part.segments])
        return BeamformerOutput(z, W, part.starts[1:], None, C)
    if kind == "osb":
        C = _penalty(spec, X)
        run = osb_run(
            X, nu, C, _delta(spec, X), params["tau"], params["max_candidates"], params["cost"]
        )
        return BeamformerOutput(
            run.z, run.W, run.starts, [c.time for c in run.changepoints], C
        )
    if kind == "osrls":
        C = _penalty(spec, X)
        d_hat, starts = osrls(
            X, truth.target, C, _delta(spec, X), params["tau"], params["max_candidates"]
        )
        return BeamformerOutput(d_hat, None, starts, None, C)
    raise ValueError(f"unhandled beamformer kind {kind!r}")


def check_distortionless(label: str, W: np.ndarray, nu: np.ndarray, tol: float = CONSTRAINT_TOL):
    gain = np.asarray(W).conj() @ nu
    err = float(np.max(np.abs(gain - 1))) if len(gain) else 0.0
    if not err < tol:
        raise NumericError(f"{label}: distortionless constraint violated by {err:.3g}")


@dataclass
class AlgorithmResult:
    label: str
    metrics: Dict[str, float]
    starts: List[int]
    declared: Optional[List[int]]
    z: Optional[np.ndarray] = None
    cum_cost: Optional[np.ndarray] = None
    cum_mse: Optional[np.ndarray] = None


@dataclass
class TrialResult:
    trial: int
    seed: int
    true_changepoints: List[int]
    algorithms: List[AlgorithmResult]


def run_trial(config: ExperimentConfig, trial: int, keep_traces: Optional[bool] = None) -> TrialResult:
    """Generate one scene and run the roster on it."""
    keep = config.outputs.traces if keep_traces is None else keep_traces
    seed = config.base_seed + trial
    truth = generate(config.scenario.with_overrides(seed=seed))
    nu = truth.steering.nu
    times = np.arange(0, truth.horizon, sample_stride(truth.horizon))
    results = []
    for spec in config.beamformers:
        out = run_beamformer(spec, truth)
        if not np.all(np.isfinite(out.z)):
            raise NumericError(f"{spec.label}: non-finite output")
        cum_mse = mse_trace(out.z, truth.target)
        if out.W is not None and spec.kind not in UNCONSTRAINED:
            check_distortionless(spec.label, out.W, nu)
            sinr = sinr_trace(times, out.W[times], truth)
            mean_sinr = float(np.mean(sinr[np.isfinite(sinr)])) if np.isfinite(sinr).any() else math.nan
        else:
            mean_sinr = math.nan
        metrics = {
            "final_cum_mse": float(cum_mse[-1]),
            "mean_sinr_db": mean_sinr,
            "n_changepoints": float(len(out.starts)),
        }
        res = AlgorithmResult(spec.label, metrics, [int(s) for s in out.starts], out.declared)
        if keep:
            res.z, res.cum_cost, res.cum_mse = out.z, cumulative_power(out.z), cum_mse
        results.append(res)
    log.info("trial %d (seed %d) done", trial, seed)
    return TrialResult(trial, seed, truth.true_changepoints, results)


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        log.warning("ignoring non-integer %s=%r", WORKERS_ENV, raw)
        return 1


def run_trials(config: ExperimentConfig, workers: Optional[int] = None) -> List[TrialResult]:
    workers = workers or default_workers()
    trials = range(config.trials)
    if workers == 1 or config.trials == 1:
        return [run_trial(config, t) for t in trials]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_trial, [config] * config.trials, trials))


# ---------------------------------------------------------------------------
# Aggregation and output
# ---------------------------------------------------------------------------


def _stat(values: List[float]) -> Dict[str, Optional[float]]:
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    if not len(arr):
        return {"mean": None, "std": None}
    return {"mean": float(np.mean(arr)), "std": float(np.std(arr))}


def summarize(config: ExperimentConfig, trials: List[TrialResult]) -> Dict[str, Dict]:
    """Mean and (population) standard deviation of each metric per beamformer."""
    out = {}
    for i, spec in enumerate(config.beamformers):
        out[spec.label] = {
            m: _stat([t.algorithms[i].metrics[m] for t in trials]) for m in METRICS
        }
    return out


def _num(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def _write_traces(path: Path, trials: List[TrialResult]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(TRACE_HEADER) + "\n")
        for tr in trials:
            for alg in tr.algorithms:
                if alg.z is None:
                    continue
                buf = io.StringIO()
                rows = zip(
                    alg.z.real.tolist(), alg.z.imag.tolist(), alg.cum_cost.tolist(), alg.cum_mse.tolist()
                )
                for t, (re, im, c, m) in enumerate(rows):
                    buf.write(f"{tr.trial},{t},{alg.label},{re!r},{im!r},{c!r},{m!r}\n")
                fh.write(buf.getvalue())


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_safe(v) for v in obj]
    return obj


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_json_safe(data), indent=2) + "\n")


@dataclass
class ResultBundle:
    summary: Dict[str, Dict]
    trials: List[TrialResult]
    out_dir: Path
    files: List[Path]


def write_results(config: ExperimentConfig, trials: List[TrialResult], out_dir) -> ResultBundle:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = summarize(config, trials)
    files = []

    path = out_dir / "summary.json"
    _write_json(path, {"trials": config.trials, "base_seed": config.base_seed, "beamformers": summary})
    files.append(path)

    path = out_dir / "summary.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm"] + [f"{m}{s}" for m in METRICS for s in ("", "_std")])
        for label, stats in summary.items():
            w.writerow([label] + [_num(stats[m][k]) for m in METRICS for k in ("mean", "std")])
    files.append(path)

    path = out_dir / "trials.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "seed", "algorithm", *METRICS])
        for tr in trials:
            for alg in tr.algorithms:
                w.writerow([tr.trial, tr.seed, alg.label] + [_num(alg.metrics[m]) for m in METRICS])
    files.append(path)

    path = out_dir / "changepoints.json"
    _write_json(
        path,
        [
            {
                "trial": tr.trial,
                "seed": tr.seed,
                "truth": tr.true_changepoints,
                "detected": {
                    a.label: {"starts": a.starts, "declared": a.declared}
                    for a in tr.algorithms
                    if a.label in _segmenters(config)
                },
            }
            for tr in trials
        ],
    )
    files.append(path)

    if config.outputs.traces:
        path = out_dir / "traces.csv"
        _write_traces(path, trials)
        files.append(path)
    return ResultBundle(summary, trials, out_dir, files)


def _segmenters(config: ExperimentConfig) -> List[str]:
    return [b.label for b in config.beamformers if b.kind in ("bsb", "osb", "osrls")]


def run_experiment(
    config: ExperimentConfig, out_dir=None, workers: Optional[int] = None
) -> ResultBundle:
    """Run every trial and write the result files. Returns the bundle."""
    out_dir = Path(out_dir if out_dir is not None else config.outputs.dir)
    log.info(
        "running %d trial(s) of %s with %d beamformer(s)",
        config.trials,
        config.scenario.kind,
        len(config.beamformers),
    )
    trials = run_trials(config, workers)
    return write_results(config, trials, out_dir)


def run_btr(config: ExperimentConfig, out_dir=None, label: Optional[str] = None, trial: int = 0) -> Path:
    """Scan one roster entry across the angle grid and write ``btr.csv``.

    ``t`` in the file is the first snapshot of each averaging block.
    """
    label = label or config.btr.beamformer or config.beamformers[-1].label
    spec = config.spec(label)
    truth = generate(config.scenario.with_overrides(seed=config.base_seed + trial))
    angles = config.btr.angles()

    def method(X, nu):
        return run_beamformer(spec, truth, nu).z

    power = to_db(btr(truth.snapshots, method, angles, truth.geometry, config.btr.block))
    out_dir = Path(out_dir if out_dir is not None else config.outputs.dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "btr.csv"
    block = config.btr.block
    with open(path, "w", newline="") as fh:
        fh.write("angle,t,power_db\n")
        for g, angle in enumerate(angles):
            fh.writelines(f"{angle!r},{j * block},{p!r}\n" for j, p in enumerate(power[g].tolist()))
    return path
