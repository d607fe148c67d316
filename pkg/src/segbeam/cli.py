"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 IO error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from .config import ExperimentConfig, load_config
from .experiment import default_workers, run_btr, run_experiment
from .linalg import ContractError, NumericError
from .presets import PRESETS, preset
from .scenarios import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("segbeam")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segbeam", description="Segmented distortionless-response beamforming simulator."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def overrides(p):
        p.add_argument("--trials", type=int, help="override the trial count")
        p.add_argument("--seed", type=int, help="override the base seed")
        p.add_argument("--horizon", type=int, help="override the scene length T")
        p.add_argument("--out-dir", help="output directory (default: from config)")

    run = sub.add_parser("run", help="run a Monte Carlo experiment from a config file")
    run.add_argument("config", help="YAML config path")
    overrides(run)
    run.add_argument(
        "--workers", type=int, default=None, help="parallel trial workers (default: $SEGBEAM_WORKERS or 1)"
    )

    pre = sub.add_parser("preset", help="run a named preset, or print its config")
    pre.add_argument("name", choices=sorted(PRESETS))
    pre.add_argument("--emit-config", action="store_true", help="print the YAML config and exit")
    overrides(pre)
    pre.add_argument("--workers", type=int, default=None)

    oracle = sub.add_parser("oracle-check", help="exhaustive-DP and recursive-inverse self checks")
    oracle.add_argument("--instances", type=int, default=50)
    oracle.add_argument("--seed", type=int, default=0)

    b = sub.add_parser("btr", help="write a bearing-time record for one trial")
    b.add_argument("config", help="YAML config path")
    b.add_argument("--beamformer", help="roster label to scan (default: config btr.beamformer)")
    b.add_argument("--trial", type=int, default=0)
    overrides(b)
    return parser


def _apply(config: ExperimentConfig, args) -> ExperimentConfig:
    return config.with_overrides(
        trials=args.trials, base_seed=args.seed, horizon=args.horizon, out_dir=args.out_dir
    )


def _report(bundle) -> None:
    width = max(len(k) for k in bundle.summary)
    print(f"{'algorithm':<{width}}  final_cum_mse  mean_sinr_db  n_changepoints")
    for label, stats in bundle.summary.items():
        cells = []
        for m in ("final_cum_mse", "mean_sinr_db", "n_changepoints"):
            v = stats[m]["mean"]
            cells.append("nan" if v is None else f"{v:.5g}")
        print(f"{label:<{width}}  {cells[0]:>13}  {cells[1]:>12}  {cells[2]:>14}")
    print(f"results written to {bundle.out_dir}")


def oracle_check(instances: int = 50, seed: int = 0) -> int:
    """Compare DP engines with exhaustive search and recursive inverses with direct ones.

    Returns the number of failed instances.
    """
    from .beamformers import SteeringVector
    from .linalg import HermitianState, rank1_update
    from .segmentation import (
        batch_cost_table,
        bsb,
        exhaustive_dp_oracle,
        segment_ls_cost,
        sls_batch,
    )

    rng = np.random.default_rng(seed)
    failures = 0
    for i in range(instances):
        p = int(rng.integers(1, 5))
        T = int(rng.integers(1, 11))
        C = float(rng.uniform(0.05, 3.0))
        delta = float(10 ** rng.uniform(-2, 0))
        X = (rng.standard_normal((p, T)) + 1j * rng.standard_normal((p, T))) / np.sqrt(2)
        nu = SteeringVector(np.exp(1j * rng.uniform(0, 2 * np.pi, p)))
        d = rng.standard_normal(T) + 1j * rng.standard_normal(T)

        _, part = bsb(X, nu, C, delta)
        best, _ = exhaustive_dp_oracle(batch_cost_table(X, nu, delta), T, C)
        ok_bsb = abs(part.total_cost - best) <= 1e-10 * max(1.0, abs(best))
        _, part = sls_batch(X, d, C, delta)
        best, _ = exhaustive_dp_oracle(lambda a, b: segment_ls_cost(X[:, a:b], d[a:b], delta), T, C)
        ok_sls = abs(part.total_cost - best) <= 1e-10 * max(1.0, abs(best))

        state = HermitianState.initial(p, delta)
        for t in range(T):
            state, _, _ = rank1_update(state, X[:, t])
        direct = np.linalg.inv(X @ X.conj().T + delta * np.eye(p))
        ok_inv = np.linalg.norm(state.inv - direct) <= 1e-8 * np.linalg.norm(direct)

        if not (ok_bsb and ok_sls and ok_inv):
            failures += 1
            log.error("instance %d failed (bsb=%s sls=%s woodbury=%s)", i, ok_bsb, ok_sls, ok_inv)
    print(f"oracle-check: {instances - failures}/{instances} instances passed")
    return failures


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "oracle-check":
            return EXIT_OK if oracle_check(args.instances, args.seed) == 0 else EXIT_NUMERIC
        if args.command == "preset":
            config = _apply(preset(args.name), args)
            if args.emit_config:
                sys.stdout.write(config.dump())
                return EXIT_OK
        else:
            config = _apply(load_config(args.config), args)
        if args.command == "btr":
            path = run_btr(config, label=args.beamformer, trial=args.trial)
            print(f"bearing-time record written to {path}")
            return EXIT_OK
        start = time.perf_counter()
        bundle = run_experiment(config, workers=args.workers or default_workers())
        log.info("finished in %.1f s", time.perf_counter() - start)
        _report(bundle)
        return EXIT_OK
    except (ConfigError, ContractError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (NumericError, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except OSError as exc:
        log.error("IO error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
