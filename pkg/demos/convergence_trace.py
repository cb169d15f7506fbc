"""Leakage per half-iteration of the inter-cell stage for one channel draw."""

import argparse

from cellular_ia import NetworkConfig
from cellular_ia.allocation import assign_greedy_partial
from cellular_ia.network import Symmetric, build_connectivity, sample_channels
from cellular_ia.transceiver import TransceiverOptions, suppress_inter_cell, write_trace_csv


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="trace.csv")
    parser.add_argument("--symmetric", action="store_true", help="use the 6-cell ring instead")
    args = parser.parse_args()

    if args.symmetric:
        cfg = NetworkConfig.uniform(6, 2, 4, 2, 2, Symmetric(1, 2, 1))
    else:
        cfg = NetworkConfig.uniform(3, 2, 5, 2, 1)
    spec = build_connectivity(cfg)
    assignment, plan = assign_greedy_partial(cfg, spec)
    channels = sample_channels(spec, args.seed)
    _, report = suppress_inter_cell(channels, plan, assignment.d, TransceiverOptions(seed=args.seed))
    with open(args.out, "w", newline="") as fh:
        write_trace_csv(report, fh)
    step = max(1, len(report.trace) // 10)
    for i in range(0, len(report.trace), step):
        print(f"half-step {i:5d}  leakage {report.trace[i]:.3e}")
    print(f"{report.iterations} iterations, converged={report.converged}, final {report.inter_cell:.3e}")
    print(f"trace written to {args.out}")


if __name__ == "__main__":
    main()
