"""Decide a few small counting instances and show the stuck MS sets."""

import numpy as np

from cellular_ia import NetworkConfig
from cellular_ia.feasibility import build_instance_full, feasible_bruteforce, feasible_tree

CASES = [
    ("two single-antenna cells", NetworkConfig.uniform(2, 1, 1, 1, 1), 1),
    ("three users, 2x2 antennas", NetworkConfig.uniform(3, 1, 2, 2, 1), 1),
    ("three cells, two MSs, Nt=5", NetworkConfig.uniform(3, 2, 5, 2, 1), 1),
    ("three cells, two MSs, two streams", NetworkConfig.uniform(3, 2, 4, 2, 2), 2),
]


def main():
    for name, cfg, d in CASES:
        inst = build_instance_full(np.full((cfg.G, cfg.K), d), cfg)
        res = feasible_tree(inst)
        line = f"{name:36s} tree={'FEASIBLE' if res else 'INFEASIBLE':10s} brute={feasible_bruteforce(inst)}"
        if not res:
            rx, tx = res.witness
            line += f" margin={inst.subset_margin(rx, tx)} rx={sorted(inst.users[i] for i in rx)}"
        print(line)


if __name__ == "__main__":
    main()
