"""Command-line front end.

Subcommands: simulate | crossing | lead | theta | two-bbm | cohort |
validate | fit.  Flag values override config-file values, which override
defaults; the master seed additionally falls back to the BBM_SEED
environment variable.  Exit codes: 0 success, 2 budget-truncated replicates
(results still written), 3 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import InvalidConfig
from .experiments import ExperimentSpec, run

_EXIT_BAD_CONFIG = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; the CLI contract is 3
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(_EXIT_BAD_CONFIG)


def _add_common(p: _Parser):
    p.add_argument("--seed", type=int, default=None,
                   help="master seed (fallback: BBM_SEED env, then 0)")
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--max-particles", type=int, default=None, dest="max_particles")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: machine parallelism)")
    p.add_argument("--out", type=str, default=None, help="JSONL output path")
    p.add_argument("--config", type=str, default=None, help="JSON config file")


def build_parser() -> _Parser:
    parser = _Parser(prog="bbmsim",
                     description="Branching Brownian motion waiting-time experiments")
    sub = parser.add_subparsers(dest="kind", required=True)

    p = _Parser(add_help=False)

    sim = sub.add_parser("simulate", parents=[p], help="population snapshot at the horizon")
    _add_common(sim)
    sim.add_argument("--prune-gap", type=float, default=None, dest="prune_gap")

    cr = sub.add_parser("crossing", parents=[p], help="front exceedance times T(y)")
    _add_common(cr)
    cr.add_argument("--y", type=float, action="append", default=None,
                    help="threshold above the centering; repeatable")
    cr.add_argument("--prune-gap", type=float, default=None, dest="prune_gap")
    cr.add_argument("--bridge-refine", action="store_true", default=None,
                    dest="bridge_refine")

    ld = sub.add_parser("lead", parents=[p], help="per-label descendant lead times")
    _add_common(ld)
    ld.add_argument("--s", type=float, default=None, help="snapshot time")

    th = sub.add_parser("theta", parents=[p], help="cohort completion times")
    _add_common(th)
    th.add_argument("--s", type=float, default=None, help="snapshot time")

    tb = sub.add_parser("two-bbm", parents=[p], help="paired-population lead times")
    _add_common(tb)
    tb.add_argument("--z", type=float, action="append", default=None,
                    help="lead threshold; repeatable")
    tb.add_argument("--prune-gap", type=float, default=None, dest="prune_gap")

    co = sub.add_parser("cohort", parents=[p], help="sub-level cohort counts")
    _add_common(co)
    co.add_argument("--k", type=float, default=None, help="observation time")
    co.add_argument("--a", type=float, default=None, help="threshold slope")
    co.add_argument("--delta", type=float, default=None,
                    help="use the slope sqrt(2)(1 - delta/2)")

    va = sub.add_parser("validate", parents=[p], help="run the invariant suite")
    _add_common(va)
    va.add_argument("--quick", action="store_true", default=None)

    ft = sub.add_parser("fit", parents=[p], help="exponent fit over JSONL results")
    _add_common(ft)
    ft.add_argument("--in", type=str, action="append", default=None, dest="inputs",
                    help="input JSONL path; repeatable")
    ft.add_argument("--prefix", type=str, default=None,
                    help="observable key prefix (default T_)")
    ft.add_argument("--csv", type=str, default=None, help="CSV export path")

    return parser


_PARAM_KEYS = {
    "simulate": ("horizon", "dt", "max_particles", "prune_gap"),
    "crossing": ("y", "horizon", "dt", "max_particles", "prune_gap", "bridge_refine"),
    "lead": ("s", "horizon", "dt", "max_particles"),
    "theta": ("s", "horizon", "dt", "max_particles"),
    "two-bbm": ("z", "horizon", "dt", "max_particles", "prune_gap"),
    "cohort": ("k", "a", "delta", "dt", "max_particles"),
    "validate": ("quick",),
    "fit": ("inputs", "prefix", "csv"),
}


def parse_flags(argv) -> ExperimentSpec:
    """argv -> validated ExperimentSpec.

    Precedence: explicit flags, then --config file values, then BBM_SEED for
    the seed, then built-in defaults.  Raises SystemExit(3) with a message
    naming the offending flag on bad input.
    """
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    kind = ns.pop("kind")
    config = {}
    if ns.get("config"):
        try:
            with open(ns["config"]) as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            print(f"bbmsim: error: --config: {e}", file=sys.stderr)
            raise SystemExit(_EXIT_BAD_CONFIG)

    def pick(key, default=None):
        if ns.get(key) is not None:
            return ns[key]
        if key in config and config[key] is not None:
            return config[key]
        return default

    seed = pick("seed")
    if seed is None:
        env = os.environ.get("BBM_SEED")
        if env is not None:
            try:
                seed = int(env)
            except ValueError:
                print(f"bbmsim: error: BBM_SEED={env!r} is not an integer",
                      file=sys.stderr)
                raise SystemExit(_EXIT_BAD_CONFIG)
        else:
            seed = 0

    params = {}
    for key in _PARAM_KEYS[kind]:
        val = pick(key)
        if val is not None:
            params[key] = val
    spec = ExperimentSpec(
        kind=kind,
        params=params,
        replicates=int(pick("replicates", 1)),
        master_seed=int(seed),
        output_path=pick("out"),
        threads=int(pick("threads", os.cpu_count() or 1)),
    )
    try:
        spec.validate()
        _early_config_check(spec)
    except InvalidConfig as e:
        print(f"bbmsim: error: {e}", file=sys.stderr)
        raise SystemExit(_EXIT_BAD_CONFIG)
    return spec


def _early_config_check(spec: ExperimentSpec):
    """Reject simulation configs that would fail inside every replicate."""
    if spec.kind in ("simulate", "crossing", "lead", "theta", "two-bbm"):
        from .core import SimConfig
        dt = spec.params.get("dt")
        max_particles = spec.params.get("max_particles")
        SimConfig(
            seed=0,
            horizon=float(spec.params["horizon"]),
            dt=1e-3 if dt is None else float(dt),
            max_particles=1_000_000 if max_particles is None else int(max_particles),
            prune_gap=spec.params.get("prune_gap"),
        )
    if spec.kind == "cohort" and float(spec.params["k"]) < 0:
        raise InvalidConfig("cohort time k must be >= 0")


def main(argv=None) -> int:
    spec = parse_flags(sys.argv[1:] if argv is None else argv)
    try:
        outcome = run(spec)
    except InvalidConfig as e:
        print(f"bbmsim: error: {e}", file=sys.stderr)
        return _EXIT_BAD_CONFIG
    if spec.kind == "fit" and outcome.report is not None:
        print(json.dumps(outcome.report, indent=2))
    elif spec.kind not in ("validate", "fit"):
        n = len(outcome.results)
        trunc = sum(r.truncated for r in outcome.results)
        dest = spec.output_path or "(not written)"
        print(f"{spec.kind}: {n} replicates, {trunc} truncated, output: {dest}")
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
