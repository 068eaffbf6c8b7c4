"""Command-line entry point: consensus runs, matrix checks, optimizer runs.

Examples:
    ceca consensus --n 34 --mode 1p --seed 7 --out res.csv
    ceca matrix-verify --sizes 2,3,5,6,10,17,32
    ceca lsq --preset paper --topology ceca-2p --seeds 5 --out lsq.csv

Values may also come from a flat ``key = value`` config file via
--config; explicit flags win over file values.  Relative output paths
are resolved against $CECA_OUT_DIR when that variable is set.
"""

from __future__ import annotations

import argparse
import sys

from .harness import (
    ConfigError,
    DEFAULT_VERIFY_SIZES,
    RunConfig,
    format_matrix_report,
    load_config_file,
    run_consensus_experiment,
    run_lsq_experiment,
    run_matrix_verification,
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--seed", type=int, help="base RNG seed (default 0)")
    parser.add_argument("--out", help="output CSV path")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ceca",
        description=(
            "Finite-time exact consensus and the decentralized optimizer "
            "built on it, at desk scale."
        ),
    )
    sub = parser.add_subparsers(dest="experiment", required=True)

    consensus = sub.add_parser(
        "consensus", help="average random vectors over a topology, log residue"
    )
    consensus.add_argument("--n", type=int, help="agent count (default 16)")
    consensus.add_argument("--d", type=int, help="payload dimension (default 10)")
    consensus.add_argument(
        "--mode", choices=["1p", "2p", "one-port", "two-port"],
        help="communication model for the exact topology (default two-port)",
    )
    consensus.add_argument(
        "--topology", choices=["ceca", "ring", "one-peer-exp"],
        help="which topology to run (default ceca)",
    )
    consensus.add_argument("--rounds", type=int, dest="T",
                           help="rounds to simulate (default: a few past convergence)")
    _add_common(consensus)

    verify = sub.add_parser(
        "matrix-verify", help="check all mixing-matrix properties numerically"
    )
    verify.add_argument(
        "--sizes",
        help=f"comma-separated agent counts (default {','.join(map(str, DEFAULT_VERIFY_SIZES))})",
    )
    verify.add_argument(
        "--mode", choices=["both", "1p", "2p", "one-port", "two-port"],
        help="which communication model to check (default both)",
    )
    _add_common(verify)

    lsq = sub.add_parser(
        "lsq", help="decentralized SGD on a synthetic least-squares problem"
    )
    lsq.add_argument("--preset", choices=["paper", "desk"],
                     help="named problem size (overrides --n/--d/--N and noise levels)")
    lsq.add_argument("--n", type=int, help="agent count")
    lsq.add_argument("--d", type=int, help="model dimension")
    lsq.add_argument("--N", type=int, help="measurement rows per agent")
    lsq.add_argument("--sigma-s", type=float, dest="sigma_s",
                     help="measurement noise std")
    lsq.add_argument("--sigma-n", type=float, dest="sigma_n",
                     help="gradient noise std")
    lsq.add_argument(
        "--topology", choices=["ceca-2p", "ceca-1p", "ring", "one-peer-exp"],
        help="optimizer communication pattern (default ceca-2p)",
    )
    lsq.add_argument("--T", type=int, help="iterations (default 300)")
    lsq.add_argument("--gamma0", type=float, help="initial step size (default 0.02)")
    lsq.add_argument("--decay-factor", type=float, dest="decay_factor",
                     help="step-size decay factor (default 1.5)")
    lsq.add_argument("--decay-interval", type=int, dest="decay_interval",
                     help="iterations between decays (default 20)")
    lsq.add_argument("--seeds", type=int, help="independent runs to average (default 1)")
    _add_common(lsq)
    return parser


_CONSENSUS_DEFAULTS = {"n": 16, "d": 10, "topology": "ceca"}
_LSQ_DEFAULTS = {"topology": "ceca-2p"}
_VERIFY_DEFAULTS = {"mode": "both"}


def _merge_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {"experiment": args.experiment}
    if args.experiment == "consensus":
        values.update(_CONSENSUS_DEFAULTS)
    elif args.experiment == "lsq":
        values.update(_LSQ_DEFAULTS)
    else:
        values.update(_VERIFY_DEFAULTS)
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for key, value in vars(args).items():
        if key in ("experiment", "config") or value is None:
            continue
        if key == "sizes" and isinstance(value, str):
            value = tuple(int(v) for v in value.split(",") if v.strip())
        values[key] = value
    return RunConfig(**values)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _merge_config(args).validated()
        if config.experiment == "consensus":
            result = run_consensus_experiment(config)
            final = result.rows[-1]
            print(
                f"consensus over {config.topology} (n={config.n}): "
                f"final residue {final[1]:.3e} after {final[0]} rounds"
            )
            if result.path:
                print(f"wrote {result.path}")
        elif config.experiment == "matrix-verify":
            report = run_matrix_verification(config)
            print(format_matrix_report(report))
            if not report.passed:
                return 1
        else:
            result = run_lsq_experiment(config)
            final = result.mean[-1]
            print(
                f"lsq over {config.topology} (n={config.n}, seeds={config.seeds}): "
                f"mean final residue {final.residue:.6g} at k={final.k}"
            )
            for path in result.paths:
                print(f"wrote {path}")
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
