"""Command line entry point: ``nettopo <subcommand> ...``.

Exit codes: 0 success, 2 invalid argument, 3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import io
from .dynamics import NoiseConfig, TrajectoryBundle, simulate_linear
from .errors import InvalidArgumentError, NetTopoError
from .estimators import (causality_estimate, correlation_modified_estimate, granger_estimate,
                         ols_estimate, tls_estimate)
from .harness import Experiment, ExperimentConfig, load_config, preset, run_online_demo, run_sweep
from .nonlinear import infer_nonlinear
from .topology import random_digraph, scale_to_asymptotic, weights_laplacian, weights_metropolis


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InvalidArgumentError(message)


def _noise_value(text: str):
    parts = [float(p) for p in text.split(",")]
    return parts[0] if len(parts) == 1 else np.array(parts)


def _cmd_generate(args) -> int:
    g = random_digraph(args.n, args.density, args.seed)
    w = weights_laplacian(g, args.gamma) if args.rule == "laplacian" else weights_metropolis(g)
    if args.alpha is not None:
        w = scale_to_asymptotic(w, args.alpha)
    out = Path(args.out)
    io.save_matrix(out / "W.csv", w.w)
    io.save_graph(out / "graph.csv", g)
    print(f"wrote {out / 'W.csv'} ({w.stability.value}) and {out / 'graph.csv'}")
    return 0


def _initial_state(args, n: int) -> np.ndarray:
    if args.x0 is not None:
        x0 = np.array([float(v) for v in args.x0.split(",")])
        if x0.size == 1:
            x0 = np.full(n, x0[0])
        return x0
    lo, hi = args.x0_range
    return np.random.default_rng([args.seed, 1]).uniform(lo, hi, n)


def _cmd_simulate(args) -> int:
    w = io.load_matrix(args.matrix)
    noise = NoiseConfig(args.sigma_theta_sq, _noise_value(args.sigma_upsilon_sq))
    traj = simulate_linear(w, _initial_state(args, w.shape[0]), args.T, noise, args.seed)
    io.save_trajectory(args.out, traj)
    print(f"wrote {args.out} (n={traj.n}, T={traj.horizon})")
    return 0


def _cmd_estimate(args) -> int:
    if args.method == "granger":
        members = [io.load_trajectory(p) for p in args.trajectory]
        t = args.t if args.t is not None else members[0].horizon
        result = granger_estimate(TrajectoryBundle(members), t, observed=True)
    else:
        if len(args.trajectory) != 1:
            raise InvalidArgumentError(f"method {args.method} takes exactly one trajectory")
        traj = io.load_trajectory(args.trajectory[0])
        if args.method == "ols":
            result = ols_estimate(traj)
        elif args.method == "causality":
            if args.sigma_upsilon_sq is None:
                raise InvalidArgumentError("--sigma-upsilon-sq is required for the causality method")
            result = causality_estimate(traj, _noise_value(args.sigma_upsilon_sq))
        elif args.method == "corr":
            result = correlation_modified_estimate(traj)
        else:
            result = tls_estimate(traj)
    io.save_estimate(args.out, result)
    print(f"wrote {args.out} (method={result.method.value}, conditioning={result.conditioning:.3e})")
    return 0


def _config_from(args, experiment=None) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    elif experiment is not None:
        cfg = preset(experiment)
    else:
        raise InvalidArgumentError("--config is required")
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _cmd_sweep(args) -> int:
    cfg = _config_from(args)
    out = args.out if args.out is not None else cfg.output_dir
    paths = run_sweep(cfg, out)
    print(f"wrote results for '{cfg.experiment.value}' (config {cfg.config_hash()}) to {out}")
    return 0 if paths else 1


def _cmd_nonlinear(args) -> int:
    y = io.observations_from_csv(args.observations)
    tally = infer_nonlinear(y, per_window=args.per_window)
    io.save_matrix(args.out, tally.a_hat)
    print(f"wrote {args.out} ({int(tally.a_hat.sum())} edges from {tally.n_windows} windows, "
          f"{len(tally.skipped)} skipped)")
    return 0


def _cmd_online(args) -> int:
    cfg = _config_from(args, Experiment.ONLINE)
    out = args.out if args.out is not None else cfg.output_dir
    paths = run_online_demo(cfg, out, switch=not args.no_switch)
    detected = sum(o.first_flag_after_switch is not None for o in paths["outcomes"])
    print(f"wrote stream logs to {out}; {detected}/{len(paths['outcomes'])} seeds flagged after the switch")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nettopo", description="Directed topology inference for network systems.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="random graph and weight matrix")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--density", type=float, default=0.3)
    p.add_argument("--rule", choices=("laplacian", "metropolis"), default="laplacian")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=None, help="scale into the asymptotically stable class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("simulate", help="simulate one trajectory to CSV")
    p.add_argument("--matrix", required=True, help="matrix CSV")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--sigma-theta-sq", type=float, default=1.0)
    p.add_argument("--sigma-upsilon-sq", default="1.0", help="scalar or comma-separated per-node values")
    p.add_argument("--x0", default=None, help="comma-separated initial state (or one value for all)")
    p.add_argument("--x0-range", type=float, nargs=2, default=(400.0, 600.0))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate", help="trajectory CSV to estimated matrix CSV")
    p.add_argument("trajectory", nargs="+", help="trajectory CSV (several for granger)")
    p.add_argument("--method", choices=("ols", "causality", "corr", "granger", "tls"), required=True)
    p.add_argument("--sigma-upsilon-sq", default=None)
    p.add_argument("--t", type=int, default=None, help="time index for granger (default T)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("sweep", help="run an experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("nonlinear", help="observations CSV to binary adjacency CSV")
    p.add_argument("observations")
    p.add_argument("--per-window", action="store_true", help="normalise each window separately")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_nonlinear)

    p = sub.add_parser("online", help="recursive estimation with change detection")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--no-switch", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_online)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except NetTopoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
