"""
Counting-based IA feasibility.

An instance abstracts a stream assignment into integer freedoms at each
precoder (``v_t``) and decorrelator (``v_r``) plus the number of scalar
alignment equations ``c[rx, tx]`` each cross link imposes. It is feasible
when no group of precoders and decorrelators faces more equations than it
has freedoms.

Two deciders are provided. `feasible_bruteforce` checks every pair of MS
subsets and is exponential. `feasible_tree` splits every constraint between
its transmit and receive end and repairs overloaded nodes by pushing
pressure along augmenting paths, which is polynomial.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .subspace import effective_dim, subspace_sum

__all__ = [
    "FeasibilityInstance",
    "ConstraintAssignment",
    "FeasibilityResult",
    "build_instance_full",
    "build_instance_partial",
    "feasible_bruteforce",
    "violated_subsets",
    "feasible_tree",
    "read_instance",
    "write_instance",
    "iter_full_instances",
    "MAX_BRUTEFORCE_USERS",
]

MAX_BRUTEFORCE_USERS = 12


@dataclass
class FeasibilityInstance:
    """Freedoms and constraint counts on the MS set.

    Attributes
    ----------
    users : list of (g, k)
        Node order. ``c``, ``v_t`` and ``v_r`` are indexed by position.
    v_t, v_r : ndarray of int, shape (N,)
    c : ndarray of int, shape (N, N)
        ``c[a, b]`` counts equations between receiver ``users[a]`` and
        transmitter ``users[b]``. Zero when both belong to the same BS.
    """

    users: list
    v_t: np.ndarray
    v_r: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.users = [tuple(int(x) for x in u) for u in self.users]
        self.v_t = np.asarray(self.v_t, dtype=np.int64).reshape(-1)
        self.v_r = np.asarray(self.v_r, dtype=np.int64).reshape(-1)
        self.c = np.asarray(self.c, dtype=np.int64)
        n = len(self.users)
        if self.v_t.shape != (n,) or self.v_r.shape != (n,) or self.c.shape != (n, n):
            raise ValueError("instance arrays do not match the user list")
        if (self.v_t < 0).any() or (self.v_r < 0).any() or (self.c < 0).any():
            raise ValueError("freedoms and constraints must be nonnegative")
        cell = np.array([u[0] for u in self.users])
        if n and (self.c[cell[:, None] == cell[None, :]] != 0).any():
            raise ValueError("constraints between MSs of the same BS must be zero")

    @property
    def size(self):
        return len(self.users)

    def subset_margin(self, rx_subset, tx_subset):
        """Freedoms minus constraints for the given receiver/transmitter groups."""
        rx = list(rx_subset)
        tx = list(tx_subset)
        cons = self.c[np.ix_(rx, tx)].sum() if rx and tx else 0
        return int(self.v_t[tx].sum() + self.v_r[rx].sum() - cons)


@dataclass
class ConstraintAssignment:
    """Split of every constraint into a transmit share and a receive share.

    ``c_t[b, a]`` is the part of ``c[a, b]`` charged to transmitter ``b``;
    ``c_r[a, b]`` is the part charged to receiver ``a``.
    """

    c_t: np.ndarray
    c_r: np.ndarray
    p_t: np.ndarray
    p_r: np.ndarray

    @classmethod
    def from_split(cls, inst, c_t, c_r):
        c_t = np.asarray(c_t, dtype=np.int64)
        c_r = np.asarray(c_r, dtype=np.int64)
        return cls(c_t, c_r, inst.v_t - c_t.sum(axis=1), inst.v_r - c_r.sum(axis=1))

    def check(self, inst):
        if not np.array_equal(self.c_t.T + self.c_r, inst.c):
            raise AssertionError("constraint split does not sum to c")
        if (self.c_t < 0).any() or (self.c_r < 0).any():
            raise AssertionError("negative constraint share")
        if not np.array_equal(self.p_t, inst.v_t - self.c_t.sum(axis=1)):
            raise AssertionError("transmit pressures inconsistent")
        if not np.array_equal(self.p_r, inst.v_r - self.c_r.sum(axis=1)):
            raise AssertionError("receive pressures inconsistent")


@dataclass
class FeasibilityResult:
    feasible: bool
    assignment: ConstraintAssignment
    steps: int = 0
    rounds: int = 0
    witness: tuple | None = field(default=None)

    def __bool__(self):
        return self.feasible


def build_instance_full(d, cfg):
    """Counts for fully connected networks.

    ``v_t = d (Nt - sum of the BS's streams)``, ``v_r = d (Nr - d)`` and
    ``c = d_rx * d_tx`` for every cross-cell pair.
    """
    d = np.asarray(d, dtype=np.int64).reshape(cfg.G, cfg.K)
    users = cfg.users()
    load = d.sum(axis=1)
    v_t = [d[n, j] * (cfg.Nt[n] - load[n]) for n, j in users]
    v_r = [d[g, k] * (cfg.Nr[g][k] - d[g, k]) for g, k in users]
    flat = np.array([d[u] for u in users])
    cell = np.array([u[0] for u in users])
    c = np.outer(flat, flat) * (cell[:, None] != cell[None, :])
    return FeasibilityInstance(users, np.maximum(v_t, 0), np.maximum(v_r, 0), c)


def build_instance_partial(d, plan, spec):
    """Counts for partially connected networks under a subspace plan.

    Freedoms are ``d * dim(free)`` at the precoder and
    ``d * (dim(receive) - d)`` at the decorrelator. A cross link contributes
    ``min(d_rx, r) * min(d_tx, t)`` equations, where ``r`` and ``t`` are
    the dimensions of the receive space and of core-plus-free space that the
    link does not annihilate.
    """
    cfg = spec.config
    d = np.asarray(d, dtype=np.int64).reshape(cfg.G, cfg.K)
    users = cfg.users()
    n_users = len(users)
    v_t = np.zeros(n_users, dtype=np.int64)
    v_r = np.zeros(n_users, dtype=np.int64)
    c = np.zeros((n_users, n_users), dtype=np.int64)
    tx_space = {}
    for i, u in enumerate(users):
        if d[u] == 0:
            continue
        v_t[i] = d[u] * plan.free[u].dim
        v_r[i] = d[u] * max(plan.receive[u].dim - d[u], 0)
        tx_space[u] = subspace_sum(plan.core[u], plan.free[u])
    for a, (g, k) in enumerate(users):
        if d[g, k] == 0:
            continue
        for b, (n, j) in enumerate(users):
            if n == g or d[n, j] == 0:
                continue
            link = spec[g, k, n]
            if not link.connected:
                continue
            r = effective_dim(plan.receive[g, k], link.rx_null)
            t = effective_dim(tx_space[n, j], link.tx_null)
            c[a, b] = min(d[g, k], r) * min(d[n, j], t)
    return FeasibilityInstance(users, v_t, v_r, c)


def _subset_masks(n):
    idx = np.arange(1 << n)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(np.int64)


def violated_subsets(inst, limit=None, chunk=256):
    """Yield ``(rx_subset, tx_subset, margin)`` for every violated pair.

    Enumerates all ``4**N`` pairs of subsets, chunked over receiver subsets.
    """
    n = inst.size
    if n > MAX_BRUTEFORCE_USERS:
        raise ValueError(f"{n} users exceed the enumeration guard of {MAX_BRUTEFORCE_USERS}")
    masks = _subset_masks(n)
    vt_sum = masks @ inst.v_t
    vr_sum = masks @ inst.v_r
    found = 0
    for start in range(0, len(masks), chunk):
        rx = masks[start : start + chunk]
        load = (rx @ inst.c) @ masks.T
        margin = vr_sum[start : start + chunk, None] + vt_sum[None, :] - load
        for a, b in zip(*np.nonzero(margin < 0)):
            rx_set = tuple(np.flatnonzero(rx[a]))
            tx_set = tuple(np.flatnonzero(masks[b]))
            yield rx_set, tx_set, int(margin[a, b])
            found += 1
            if limit is not None and found >= limit:
                return


def feasible_bruteforce(inst):
    """True iff every pair of MS subsets has at least as many freedoms as constraints."""
    return next(violated_subsets(inst, limit=1), None) is None


def _initial_split(inst, rng):
    c = inst.c
    if rng is None:
        c_r = c // 2
    else:
        c_r = rng.integers(0, c + 1)
    c_t = (c - c_r).T
    return c_t.copy(), c_r.copy()


def _find_branch(root, p, c_t, c_r, n):
    """Depth-first search from `root` for a node with positive pressure.

    Nodes ``0..n-1`` are transmit nodes and ``n..2n-1`` receive nodes. A
    transmit node passes pressure to receiver ``a`` through ``c_t[b, a]``; a
    receive node passes it to transmitter ``b`` through ``c_r[a, b]``.
    Returns the path as a node list, or None with the reached set.
    """
    parent = {root: None}
    stack = [root]
    while stack:
        node = stack.pop()
        if node != root and p[node] > 0:
            path = [node]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return path[::-1], parent
        if node < n:
            nbrs = np.flatnonzero(c_t[node] > 0) + n
        else:
            nbrs = np.flatnonzero(c_r[node - n] > 0)
        for nb in nbrs[::-1]:
            nb = int(nb)
            if nb not in parent:
                parent[nb] = node
                stack.append(nb)
    return None, parent


def feasible_tree(inst, seed=None, max_steps=None):
    """Decide feasibility by pressure transfer.

    Every constraint starts split between its two ends. While some node has
    negative pressure (more charged constraints than freedoms), the most
    overloaded node roots a depth-first tree over links that still carry a
    movable share. Pressure flows from the root to the first positive node
    found, by the largest integer amount the path allows. The instance is
    infeasible as soon as a root cannot reach any positive node.

    Parameters
    ----------
    inst : FeasibilityInstance
    seed : int, optional
        Randomize the initial split. The default splits each constraint
        into its ceiling half at the transmitter and floor half at the
        receiver.

    Returns
    -------
    FeasibilityResult
        Truthy when feasible. ``steps`` counts pressure transfers and
        ``witness`` holds the stuck ``(rx_subset, tx_subset)`` when not.
    """
    n = inst.size
    rng = None if seed is None else np.random.default_rng(seed)
    c_t, c_r = _initial_split(inst, rng)
    steps = 0
    rounds = 0
    if max_steps is None:
        max_steps = int(inst.c.sum()) + 1
    while True:
        p = np.concatenate([inst.v_t - c_t.sum(axis=1), inst.v_r - c_r.sum(axis=1)])
        if n == 0 or p.min() >= 0:
            return FeasibilityResult(
                True, ConstraintAssignment.from_split(inst, c_t, c_r), steps, rounds
            )
        root = int(np.argmin(p))
        rounds += 1
        path, reached = _find_branch(root, p, c_t, c_r, n)
        if path is None:
            tx = tuple(sorted(x for x in reached if x < n))
            rx = tuple(sorted(x - n for x in reached if x >= n))
            return FeasibilityResult(
                False, ConstraintAssignment.from_split(inst, c_t, c_r), steps, rounds, (rx, tx)
            )
        strengths = []
        for a, b in zip(path, path[1:]):
            strengths.append(c_t[a, b - n] if a < n else c_r[a - n, b])
        eps = int(min(-p[root], p[path[-1]], *strengths))
        for a, b in zip(path, path[1:]):
            if a < n:
                c_t[a, b - n] -= eps
                c_r[b - n, a] += eps
            else:
                c_r[a - n, b] -= eps
                c_t[b, a - n] += eps
        steps += 1
        if steps > max_steps:
            raise RuntimeError("pressure transfer did not terminate")


def write_instance(inst, fh):
    """Write an instance in the line format read by `read_instance`."""
    fh.write("# vt g k value | vr g k value | c g k n j value (receiver gk, transmitter nj)\n")
    for i, (g, k) in enumerate(inst.users):
        fh.write(f"vt {g} {k} {inst.v_t[i]}\n")
    for i, (g, k) in enumerate(inst.users):
        fh.write(f"vr {g} {k} {inst.v_r[i]}\n")
    for a, (g, k) in enumerate(inst.users):
        for b, (n, j) in enumerate(inst.users):
            if inst.c[a, b]:
                fh.write(f"c {g} {k} {n} {j} {inst.c[a, b]}\n")


def read_instance(fh):
    """Parse an instance file.

    Lines are ``vt g k value``, ``vr g k value`` or ``c g k n j value``;
    ``#`` starts a comment. Users absent from every line are not created.
    Raises ValueError with the offending line number.
    """
    v_t, v_r, cons = {}, {}, {}
    for lineno, raw in enumerate(fh, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            kind, nums = parts[0], [int(x) for x in parts[1:]]
            if kind in ("vt", "vr") and len(nums) == 3:
                (v_t if kind == "vt" else v_r)[nums[0], nums[1]] = nums[2]
            elif kind == "c" and len(nums) == 5:
                cons[(nums[0], nums[1]), (nums[2], nums[3])] = nums[4]
            else:
                raise ValueError(f"unrecognized record {parts[0]!r}")
            if nums[-1] < 0:
                raise ValueError("counts must be nonnegative")
        except (ValueError, IndexError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    users = set(v_t) | set(v_r)
    for rx, tx in cons:
        users.update((rx, tx))
    users = sorted(users)
    pos = {u: i for i, u in enumerate(users)}
    c = np.zeros((len(users), len(users)), dtype=np.int64)
    for (rx, tx), value in cons.items():
        c[pos[rx], pos[tx]] = value
    return FeasibilityInstance(
        users,
        [v_t.get(u, 0) for u in users],
        [v_r.get(u, 0) for u in users],
        c,
    )


def iter_full_instances(G, K, nt, nr, d_cap):
    """All full-connectivity instances of a uniform network with ``d <= d_cap``.

    Assignments that exceed a BS's antennas are skipped.
    """
    from .network import NetworkConfig

    cfg = NetworkConfig.uniform(G, K, nt, nr, max(1, min(d_cap, nr)))
    top = min(d_cap, nr)
    for flat in itertools.product(range(top + 1), repeat=G * K):
        d = np.array(flat).reshape(G, K)
        if (d.sum(axis=1) > nt).any():
            continue
        yield d, build_instance_full(d, cfg)
