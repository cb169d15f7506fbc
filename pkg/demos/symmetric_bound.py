"""Compare the symmetric-network bound with the greedy stream assignment."""

import argparse

from cellular_ia import NetworkConfig
from cellular_ia.allocation import assign_greedy_partial
from cellular_ia.evaluation import DoFBoundQuery, dof_bound, dof_bound_enumerate
from cellular_ia.network import Symmetric, build_connectivity


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--J", type=int, default=1)
    parser.add_argument("--Nt", type=int, default=4)
    parser.add_argument("--Nr", type=int, default=2)
    parser.add_argument("--R1", type=int, default=2)
    parser.add_argument("--R2", type=int, default=1)
    args = parser.parse_args()

    print(f"{'G':>3s} {'K':>3s} {'d*':>4s} {'d_enum':>7s} {'G*K*d*':>7s} {'assigned':>9s}")
    for G in range(3, 9):
        for K in (1, 2):
            dm = min(args.Nr, args.Nt // K)
            q = DoFBoundQuery(G, K, args.J, args.Nt, args.Nr, args.R1, args.R2, d_f=dm)
            cfg = NetworkConfig.uniform(G, K, args.Nt, args.Nr, dm, Symmetric(args.J, args.R1, args.R2))
            assignment, _ = assign_greedy_partial(cfg, build_connectivity(cfg))
            d_star = dof_bound(q)
            print(f"{G:3d} {K:3d} {d_star:4d} {dof_bound_enumerate(q):7d} {G * K * d_star:7d} {assignment.total:9d}")


if __name__ == "__main__":
    main()
