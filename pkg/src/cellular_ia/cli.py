"""
Command line entry point.

Subcommands::

    feasibility INSTANCE            print FEASIBLE or INFEASIBLE
    assign --config FILE            print the proposed stream table
    dof-bound --G .. --R2 ..        print the symmetric-network bound d*
    sweep --config FILE --out CSV   run a seeded SNR sweep
    trace --config FILE --out CSV   leakage per half-iteration for one seed

Exit status is 0 on success and 2 on invalid input.
"""

import argparse
import sys

from .allocation import assign_greedy_partial
from .evaluation import DoFBoundQuery, dof_bound, dof_bound_enumerate
from .experiment import ConfigError, load_config, parse_seeds, rows_to_text, run_sweep
from .feasibility import feasible_tree, read_instance
from .network import build_connectivity, sample_channels
from .transceiver import TransceiverOptions, suppress_inter_cell, write_trace_csv

__all__ = ["main", "build_parser"]


def _snr_list(text):
    return [float(x.lower().replace("db", "")) for x in text.split(",") if x.strip()]


def _load(args):
    spec = load_config(args.config)
    if getattr(args, "seeds", None) is not None:
        spec.seeds = parse_seeds(args.seeds)
    if getattr(args, "snr", None) is not None:
        spec.snr_grid_db = _snr_list(args.snr)
    spec.validate()
    return spec


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def cmd_feasibility(args):
    with open(args.instance) as fh:
        inst = read_instance(fh)
    result = feasible_tree(inst)
    print("FEASIBLE" if result else "INFEASIBLE")
    if not result and args.verbose:
        rx, tx = result.witness
        name = lambda idx: " ".join("{},{}".format(*inst.users[i]) for i in sorted(idx))  # noqa: E731
        print(f"witness: receivers {name(rx)} | transmitters {name(tx)}")
    return 0


def cmd_assign(args):
    spec = _load(args)
    cfg = spec.config_for(spec.seeds[0])
    assignment, _ = assign_greedy_partial(cfg, build_connectivity(cfg))
    lines = ["g,k,d_max,d"]
    for g, k in cfg.users():
        lines.append(f"{g},{k},{cfg.d_max[g][k]},{assignment.d[g, k]}")
    lines.append(f"# total {assignment.total}")
    _write("\n".join(lines) + "\n", args.out)
    return 0


def cmd_dof_bound(args):
    q = DoFBoundQuery(args.G, args.K, args.J, args.Nt, args.Nr, args.R1, args.R2, args.d_f)
    value = dof_bound_enumerate(q) if args.enumerate else dof_bound(q)
    print(value)
    return 0


def cmd_sweep(args):
    spec = _load(args)
    rows = run_sweep(spec, workers=args.workers)
    _write(rows_to_text(rows), args.out or spec.output_path)
    return 0


def cmd_trace(args):
    spec = _load(args)
    seed = parse_seeds(args.seed)[0] if args.seed else spec.seeds[0]
    cfg = spec.config_for(seed)
    conn = build_connectivity(cfg)
    assignment, plan = assign_greedy_partial(cfg, conn)
    channels = sample_channels(conn, seed)
    options = TransceiverOptions(seed=seed, max_iters=spec.max_iters)
    _, report = suppress_inter_cell(channels, plan, assignment.d, options)
    if args.out in (None, "-"):
        write_trace_csv(report, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            write_trace_csv(report, fh)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cellular-ia",
        description="Interference alignment for partially connected MIMO cellular networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("feasibility", help="decide a counting instance file")
    p.add_argument("instance", help="instance file with vt/vr/c lines")
    p.add_argument("-v", "--verbose", action="store_true", help="print the violated MS set")
    p.set_defaults(func=cmd_feasibility)

    def scenario_args(p, out_help):
        p.add_argument("--config", required=True, help="scenario config file")
        p.add_argument("--out", help=out_help)
        p.add_argument("--seeds", help='override seeds, e.g. "0-9,12"')
        p.add_argument("--snr", help='override SNR grid in dB, e.g. "40,60"')

    p = sub.add_parser("assign", help="stream assignment table for a scenario")
    scenario_args(p, "CSV output path (default stdout)")
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("dof-bound", help="per-MS stream bound of a symmetric network")
    for name in ("G", "K", "J", "Nt", "Nr", "R1", "R2"):
        p.add_argument(f"--{name}", type=int, required=True)
    p.add_argument("--d-f", dest="d_f", type=int, default=1, help="requested streams per MS")
    p.add_argument("--enumerate", action="store_true", help="solve the counting program instead")
    p.set_defaults(func=cmd_dof_bound)

    p = sub.add_parser("sweep", help="seeded SNR sweep to CSV")
    scenario_args(p, "CSV output path (default: config output, else stdout)")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("trace", help="per-half-iteration leakage of one seed")
    scenario_args(p, "CSV output path (default stdout)")
    p.add_argument("--seed", help="seed to trace (default: first config seed)")
    p.set_defaults(func=cmd_trace)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        parser.error("--workers must be positive")
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
