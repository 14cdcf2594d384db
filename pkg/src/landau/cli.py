"""Command-line interface.

    landau run <config|preset> [--seed N] [--threads N] [--out DIR]
    landau sweep <config|preset> --n a,b,c [--solvers sbtm,blob] [--seeds K]
    landau presets list | show <name>

Exit codes: 0 success, 1 config error, 2 runtime error, 3 training
non-convergence.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import (
    ConfigError,
    load_config,
    load_preset,
    preset_names,
    preset_text,
    with_overrides,
)


def _load(ref: str):
    if os.path.isfile(ref):
        return load_config(ref)
    if ref in preset_names():
        return load_preset(ref)
    raise ConfigError(f"no config file or preset named {ref!r}")


def _add_common(p):
    p.add_argument("config", help="path to a TOML config, or a preset name")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=1,
                   help="worker thread count recorded with the run "
                        "(kernels are single-threaded)")
    p.add_argument("--out", default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="landau",
        description="Particle solvers for the homogeneous Landau equation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment")
    _add_common(run_p)

    sweep_p = sub.add_parser("sweep", help="run a (solver, n, seed) comparison grid")
    _add_common(sweep_p)
    sweep_p.add_argument("--n", required=True,
                         help="comma-separated particle counts, e.g. 100,1600")
    sweep_p.add_argument("--solvers", default=None,
                         help="comma-separated solver kinds (default: config solver)")
    sweep_p.add_argument("--seeds", type=int, default=1,
                         help="number of consecutive seeds per combination")

    presets_p = sub.add_parser("presets", help="list or show shipped experiment presets")
    presets_sub = presets_p.add_subparsers(dest="presets_command", required=True)
    presets_sub.add_parser("list", help="list preset names")
    show_p = presets_sub.add_parser("show", help="print a preset config")
    show_p.add_argument("name")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            if args.presets_command == "list":
                for name in preset_names():
                    print(name)
            else:
                print(preset_text(args.name), end="")
            return 0

        cfg = _load(args.config)
        if args.seed is not None:
            cfg = with_overrides(cfg, seed=args.seed)
        out = args.out or cfg.output_dir or "out"

        from .runner import run_sweep, run_to_files

        if args.command == "run":
            summary = run_to_files(cfg, out, threads=args.threads)
            print(f"wrote {out}/metrics.csv ({cfg.n_steps + 1} rows)")
            print(f"momentum drift {summary['momentum_drift_final']:.3e}, "
                  f"energy drift {summary['energy_drift_final']:.3e}, "
                  f"wall {summary['wall_seconds']:.1f}s")
            return 0

        n_list = [int(tok) for tok in args.n.split(",") if tok]
        solvers = (
            [tok for tok in args.solvers.split(",") if tok]
            if args.solvers else [cfg.solver.kind]
        )
        path = run_sweep(cfg, n_list, solvers, args.seeds, out)
        print(f"wrote {path}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        from .scores import TrainingNotConverged

        if isinstance(exc, TrainingNotConverged):
            print(f"training did not converge: {exc}", file=sys.stderr)
            return 3
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
