"""
Stage 1: stream assignment and subspace planning.

`assign_greedy_full` serves fully connected networks: start from the
requested streams and drop one stream at a time, always from the MS whose
removal relieves the most constraints net of lost freedoms, until the
counting test passes.

`assign_greedy_partial` does the same for partially connected networks, but
first shapes every precoder as a core block plus a free block and every
decorrelator as a receive subspace. The shapes favor directions that many
cross links cannot hear, which is where partial connectivity pays off.
"""

import weakref
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .feasibility import build_instance_full, build_instance_partial, feasible_tree
from .network import build_full_connectivity
from .subspace import (
    EQUAL_TOL,
    Subspace,
    complement,
    effective_dim,
    intersect,
    intersect_all,
    orthonormal_basis,
    subspace_sum,
    sum_all,
    zero_space,
)

__all__ = [
    "StreamAssignment",
    "SubspacePlan",
    "NullSpaceLattice",
    "removal_score_full",
    "removal_scores",
    "assign_greedy_full",
    "common_null_spaces",
    "common_receive_null_spaces",
    "design_core_spaces",
    "design_free_spaces",
    "plan_subspaces",
    "full_structure_plan",
    "structural_violations",
    "assign_greedy_partial",
]


@dataclass
class StreamAssignment:
    """Streams per MS, ``d[g, k]``, with the history of the greedy descent."""

    d: np.ndarray
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=np.int64)

    @property
    def total(self):
        return int(self.d.sum())

    def __getitem__(self, key):
        return int(self.d[key])


@dataclass(eq=False)
class SubspacePlan:
    """Per-MS core, free and receive subspaces, keyed by ``(g, k)``.

    ``flexible`` lists the BSs whose cores carry no structure: nothing in
    the connectivity favors one core over another, and all of the BS's MSs
    share the complement of the cores as free space.
    """

    core: dict
    free: dict
    receive: dict
    flexible: frozenset = frozenset()

    def dims(self):
        return {
            u: (self.core[u].dim, self.free[u].dim, self.receive[u].dim) for u in self.core
        }


def removal_score_full(d, cfg, g, k):
    """Net constraint relief from dropping one stream of MS ``(g, k)``.

    Closed form for full connectivity:
    ``2 * (streams of every other MS) - (Nt + Nr - 4 d + 2)``.
    """
    d = np.asarray(d)
    others = int(d.sum()) - int(d[g, k])
    return 2 * others - (cfg.Nt[g] + cfg.Nr[g][k] - 4 * int(d[g, k]) + 2)


def removal_scores(d, counts):
    """Constraint relief minus freedom loss of dropping each MS's stream.

    Parameters
    ----------
    d : ndarray (G, K)
    counts : callable
        ``counts(d) -> (total constraints, total freedoms)``.

    Returns
    -------
    dict mapping ``(g, k)`` to the score; MSs with no stream are omitted.
    """
    base_c, base_f = counts(d)
    scores = {}
    for g, k in np.ndindex(*d.shape):
        if d[g, k] == 0:
            continue
        trial = d.copy()
        trial[g, k] -= 1
        c, f = counts(trial, (g, k))
        scores[g, k] = (base_c - c) - (base_f - f)
    return scores


def _pick_removal(scores):
    best = max(scores.values())
    return min(u for u, s in scores.items() if s == best)


def assign_greedy_full(cfg, seed=None):
    """Greedy stream assignment for fully connected networks.

    Returns the first assignment on the descent from ``d_max`` that passes
    `feasible_tree`. Ties in the removal score go to the smallest ``(g, k)``.
    """
    d = np.array(cfg.d_max, dtype=np.int64)
    for n in range(cfg.G):
        if d[n].sum() > cfg.Nt[n]:
            raise ValueError(f"BS {n} is asked for more streams than antennas")
    history = []
    while True:
        ok = feasible_tree(build_instance_full(d, cfg), seed=seed)
        history.append((d.copy(), bool(ok)))
        if ok:
            return StreamAssignment(d, history)
        scores = {
            (g, k): removal_score_full(d, cfg, g, k)
            for g, k in cfg.users()
            if d[g, k] > 0
        }
        d[_pick_removal(scores)] -= 1


class NullSpaceLattice(Mapping):
    """Common null spaces of a set of links, keyed by member sets.

    Only closed member sets are stored: a key lists every member whose null
    space contains the stored subspace, so distinct keys hold distinct
    subspaces and no floating-point hashing is needed. Singleton keys are
    always present, even when the subspace is ``{0}``.

    Looking up any other member set computes the intersection on demand.
    """

    def __init__(self, spaces, weights, ambient_dim, entries=None):
        self._spaces = dict(spaces)
        self._weights = dict(weights)
        self.ambient_dim = ambient_dim
        self._entries = dict(entries or {})
        self._members = list(self._spaces)
        eye = np.eye(ambient_dim, dtype=complex)
        self._residual = np.stack(
            [eye - s.projector() for s in self._spaces.values()]
        ) if self._spaces else np.zeros((0, ambient_dim, ambient_dim), dtype=complex)

    def _closure(self, x):
        b = x.basis
        res = np.linalg.norm(self._residual @ b, axis=(1, 2))
        tol = EQUAL_TOL * max(np.linalg.norm(b), 1.0)
        return frozenset(m for m, r in zip(self._members, res) if r <= tol)

    def _build(self):
        entries = {frozenset([m]): s for m, s in self._spaces.items()}
        queue = [s for s in self._spaces.values() if not s.is_zero]
        seen = set()
        while queue:
            x = queue.pop()
            key = self._closure(x)
            if key in seen:
                continue
            seen.add(key)
            entries[key] = x
            for m, s in self._spaces.items():
                if m in key:
                    continue
                y = intersect(x, s)
                if not y.is_zero:
                    queue.append(y)
        self._entries = entries

    def __getitem__(self, members):
        members = frozenset(members)
        if not self._entries:
            self._build()
        if members in self._entries:
            return self._entries[members]
        out = None
        for m in members:
            s = self._spaces[m]
            out = s if out is None else intersect(out, s)
        if out is None:
            raise KeyError("empty member set")
        return out

    def __iter__(self):
        if not self._entries:
            self._build()
        return iter(self._entries)

    def __len__(self):
        if not self._entries:
            self._build()
        return len(self._entries)

    def weight(self, members):
        return sum(self._weights[m] for m in members)

    def candidates(self):
        """Nonzero closed subspaces with positive weight, best first.

        Ordered by decreasing weight, then by the sorted member tuple.
        """
        out = []
        for key, space in self.items():
            if space.is_zero:
                continue
            w = self.weight(key)
            if w > 0:
                out.append((-w, tuple(sorted(key)), space))
        out.sort(key=lambda item: (item[0], item[1]))
        return [(key, -neg, space) for neg, key, space in out]


_LATTICES = weakref.WeakKeyDictionary()


def _cached_lattice(spec, key, spaces, weights, dim):
    """Lattice with closed sets reused across calls; only weights change."""
    cache = _LATTICES.setdefault(spec, {})
    if key not in cache:
        lattice = NullSpaceLattice(spaces, weights, dim)
        lattice._build()
        cache[key] = lattice._entries
    return NullSpaceLattice(spaces, weights, dim, cache[key])


def common_null_spaces(spec, n, d=None):
    """Lattice of transmit null spaces at BS `n` over MSs of other cells.

    Each MS ``(g, k)`` with ``g != n`` weighs ``min(d_gk, rank)`` where the
    rank of its link from BS `n` comes from the connectivity spec.
    Disconnected links carry the full space and weight zero.
    """
    cfg = spec.config
    if d is None:
        d = np.array(cfg.d_max)
    spaces, weights = {}, {}
    for g, k in cfg.users():
        if g == n:
            continue
        spaces[g, k] = spec.tx_null(g, k, n)
        weights[g, k] = min(int(d[g][k]), spec.rank(g, k, n))
    return _cached_lattice(spec, ("tx", n), spaces, weights, cfg.Nt[n])


def common_receive_null_spaces(spec, g, k, d=None):
    """Lattice of receive null spaces at MS ``(g, k)`` over the other BSs.

    BS ``n`` weighs ``min(streams sent by n, rank of the link)``.
    """
    cfg = spec.config
    if d is None:
        d = np.array(cfg.d_max)
    spaces, weights = {}, {}
    for n in range(cfg.G):
        if n == g:
            continue
        spaces[n] = spec.rx_null(g, k, n)
        weights[n] = min(int(np.sum(d[n])), spec.rank(g, k, n))
    return _cached_lattice(spec, ("rx", g, k), spaces, weights, cfg.Nr[g][k])


def _remove_direction(space, v):
    """`space` with the unit vector ``v`` (which lies in it) projected out."""
    basis = space.basis - np.outer(v, v.conj() @ space.basis)
    return orthonormal_basis(basis, ref=1.0)


def _priority_chain(allowed, candidates, count):
    """Pick `count` orthonormal directions from `allowed` by candidate priority.

    Each direction is the first basis vector of the best candidate's
    intersection with what is still allowed; when no candidate intersects,
    the first basis vector of the allowed space is used.
    """
    vectors = []
    live = list(candidates)
    for _ in range(count):
        if allowed.is_zero:
            break
        pick = None
        still_live = []
        for key, weight, space in live:
            inter = intersect(space, allowed)
            if inter.is_zero:
                continue
            still_live.append((key, weight, space))
            if pick is None:
                pick = inter.basis[:, 0]
        live = still_live
        if pick is None:
            pick = allowed.basis[:, 0]
        vectors.append(pick)
        allowed = _remove_direction(allowed, pick)
    return vectors, allowed


def _from_vectors(n, vectors):
    if not vectors:
        return zero_space(n)
    return Subspace(n, np.column_stack(vectors))


def design_core_spaces(spec, d):
    """Core subspaces for every MS, clipping streams that do not fit.

    At each BS the MSs are handled in index order. MS ``j`` may use the
    directions orthogonal to the cores already placed and outside the
    transmit null space of its own direct link; its stream count is clipped
    to that dimension. Its core directions are then drawn with priority to
    the heaviest common null space of the other cells' MSs.

    Returns
    -------
    cores : dict mapping ``(n, j)`` to Subspace
    d : ndarray
        Updated stream counts.
    """
    cfg = spec.config
    d = np.array(d, dtype=np.int64).reshape(cfg.G, cfg.K)
    cores = {}
    for n in range(cfg.G):
        candidates = common_null_spaces(spec, n, d).candidates()
        placed = zero_space(cfg.Nt[n])
        for j in range(cfg.K):
            blocked = subspace_sum(placed, spec.tx_null(n, j, n))
            allowed = complement(blocked)
            d[n, j] = min(d[n, j], allowed.dim)
            vectors, _ = _priority_chain(allowed, candidates, int(d[n, j]))
            cores[n, j] = _from_vectors(cfg.Nt[n], vectors)
            placed = subspace_sum(placed, cores[n, j])
    return cores, d


def _transmit_penalty(spec, d, n, j, tx_space):
    cfg = spec.config
    total = 0
    for g, k in cfg.users():
        if g == n or d[g, k] == 0:
            continue
        link = spec[g, k, n]
        if not link.connected:
            continue
        t = effective_dim(tx_space, link.tx_null)
        total += min(int(d[g, k]), link.rank) * min(int(d[n, j]), t)
    return total


def design_free_spaces(spec, d, cores):
    """Free and receive subspaces given the cores.

    Each BS orders the directions orthogonal to all of its cores into one
    nested chain, again favoring heavy common null spaces. Every MS takes
    the chain prefix whose length maximizes freedoms gained minus
    constraints created, preferring the shorter prefix on ties. Receive
    subspaces are chosen the same way inside the complement of the direct
    link's receive null space, with at least ``d`` dimensions.
    """
    cfg = spec.config
    d = np.asarray(d, dtype=np.int64).reshape(cfg.G, cfg.K)
    free, receive = {}, {}
    flexible = set()
    for n in range(cfg.G):
        nt = cfg.Nt[n]
        residual = complement(sum_all([cores[n, j] for j in range(cfg.K)], nt))
        candidates = common_null_spaces(spec, n, d).candidates()
        if not candidates and all(spec.tx_null(n, j, n).is_zero for j in range(cfg.K)):
            flexible.add(n)
        chain, _ = _priority_chain(residual, candidates, residual.dim)
        for j in range(cfg.K):
            if d[n, j] == 0:
                free[n, j] = zero_space(nt)
                continue
            best, best_score = 0, None
            for s in range(len(chain) + 1):
                space = subspace_sum(cores[n, j], _from_vectors(nt, chain[:s]))
                score = int(d[n, j]) * s - _transmit_penalty(spec, d, n, j, space)
                if best_score is None or score > best_score:
                    best, best_score = s, score
            free[n, j] = _from_vectors(nt, chain[:best])
            if best != len(chain):
                flexible.discard(n)
    tx_space = {u: subspace_sum(cores[u], free[u]) for u in cfg.users()}
    for g, k in cfg.users():
        nr = cfg.Nr[g][k]
        if d[g, k] == 0:
            receive[g, k] = zero_space(nr)
            continue
        allowed = complement(spec.rx_null(g, k, g))
        candidates = common_receive_null_spaces(spec, g, k, d).candidates()
        chain, _ = _priority_chain(allowed, candidates, allowed.dim)
        best, best_score = None, None
        for size in range(int(d[g, k]), len(chain) + 1):
            space = _from_vectors(nr, chain[:size])
            penalty = 0
            for n, j in cfg.users():
                if n == g or d[n, j] == 0:
                    continue
                link = spec[g, k, n]
                if not link.connected:
                    continue
                r = effective_dim(space, link.rx_null)
                t = effective_dim(tx_space[n, j], link.tx_null)
                penalty += min(int(d[g, k]), r) * min(int(d[n, j]), t)
            score = int(d[g, k]) * (size - int(d[g, k])) - penalty
            if best_score is None or score > best_score:
                best, best_score = size, score
        receive[g, k] = _from_vectors(nr, chain[:best])
    return SubspacePlan(dict(cores), free, receive, frozenset(flexible))


def plan_subspaces(spec, d):
    """Cores then free and receive spaces; returns ``(plan, clipped d)``."""
    cores, d = design_core_spaces(spec, d)
    return design_free_spaces(spec, d, cores), d


def full_structure_plan(cfg, d):
    """Subspace plan that ignores partial connectivity.

    Cores are laid out as on a fully connected network, the free space is
    the common complement of a BS's cores and every receive space is the
    whole MS space.
    """
    return plan_subspaces(build_full_connectivity(cfg), d)


def _partial_counts(spec, plan, d):
    """Count oracle for `removal_scores` with the plan held fixed.

    Dropping a stream of ``(g, k)`` releases one core dimension, so every
    MS of cell ``g`` whose free space was the whole residual space gains a
    free dimension. Receive spaces keep their dimension.
    """
    cfg = spec.config
    max_free = {}
    for n in range(cfg.G):
        used = sum(plan.core[n, j].dim for j in range(cfg.K))
        max_free[n] = cfg.Nt[n] - used
    eff_r, eff_t = {}, {}
    for g, k in cfg.users():
        for n, j in cfg.users():
            if n == g:
                continue
            link = spec[g, k, n]
            if not link.connected:
                continue
            eff_r[g, k, n] = effective_dim(plan.receive[g, k], link.rx_null)
            eff_t[g, k, n, j] = effective_dim(
                subspace_sum(plan.core[n, j], plan.free[n, j]), link.tx_null
            )

    def counts(trial, dropped=None):
        free_dim = {u: plan.free[u].dim for u in cfg.users()}
        if dropped is not None:
            g0 = dropped[0]
            for j in range(cfg.K):
                if free_dim[g0, j] == max_free[g0]:
                    free_dim[g0, j] += 1
        freedoms = 0
        for u in cfg.users():
            if trial[u] == 0:
                continue
            freedoms += trial[u] * free_dim[u]
            freedoms += trial[u] * max(plan.receive[u].dim - trial[u], 0)
        cons = 0
        for (g, k, n, j), t in eff_t.items():
            if trial[g, k] == 0 or trial[n, j] == 0:
                continue
            r = eff_r[g, k, n]
            cons += min(trial[g, k], r) * min(trial[n, j], t)
        return cons, freedoms

    return counts


def structural_violations(d, plan, spec):
    """Cross links whose leakage the plan cannot cancel regardless of channels.

    On link ``(g, k) <- n`` with generic rank ``rho``, the part of BS
    ``n``'s precoder image that its free spaces cannot steer has rank at
    least ``min(rho, t_all) - min(rho, t_free)``, where ``t_all`` and
    ``t_free`` are the dimensions of core-plus-free and of free space that
    the link does not annihilate. Summed over interfering BSs, these fixed
    dimensions must fit in the ``dim(receive) - d_gk`` directions the
    decorrelator leaves unused.

    Returns
    -------
    list of ``((g, k), (n, j))`` pairs on receivers that fail the test.
    """
    cfg = spec.config
    d = np.asarray(d).reshape(cfg.G, cfg.K)
    bad = []
    for g, k in cfg.users():
        if d[g, k] == 0:
            continue
        recv = plan.receive[g, k]
        spare = recv.dim - int(d[g, k])
        seen, nulls, culprits = 0, [], []
        for n in range(cfg.G):
            link = spec[g, k, n]
            ms = [j for j in range(cfg.K) if d[n, j] > 0]
            if n == g or not ms or not link.connected:
                continue
            free = sum_all([plan.free[n, j] for j in ms])
            both = subspace_sum(sum_all([plan.core[n, j] for j in ms]), free)
            rho = link.rank
            stuck = min(rho, effective_dim(both, link.tx_null)) - min(
                rho, effective_dim(free, link.tx_null)
            )
            if stuck > 0:
                seen += min(stuck, effective_dim(recv, link.rx_null))
                nulls.append(link.rx_null)
                culprits += [(n, j) for j in ms]
        if nulls:
            seen = min(seen, effective_dim(recv, intersect_all(nulls)))
        if seen > spare:
            bad += [((g, k), u) for u in culprits]
    return bad


def assign_greedy_partial(cfg, spec=None, seed=None, max_rounds=None, structural=True):
    """Joint stream assignment and subspace planning.

    Streams start at ``min(rank of the direct link, d_max)``. Each round
    plans the subspaces, builds the partial counting instance and tests it
    with `feasible_tree`; on failure one stream is dropped from the MS with
    the best removal score.

    With `structural`, an assignment that passes the count but has links
    listed by `structural_violations` is also rejected, and the dropped
    stream is chosen among the MSs on those links.

    Returns
    -------
    StreamAssignment, SubspacePlan
    """
    if spec is None:
        from .network import build_connectivity

        spec = build_connectivity(cfg)
    d = np.zeros((cfg.G, cfg.K), dtype=np.int64)
    for g, k in cfg.users():
        d[g, k] = min(spec.rank(g, k, g), cfg.d_max[g][k])
    history = []
    rounds = 0
    while True:
        plan, d = plan_subspaces(spec, d)
        ok = bool(feasible_tree(build_instance_partial(d, plan, spec), seed=seed))
        stuck = structural_violations(d, plan, spec) if ok and structural else []
        history.append((d.copy(), ok and not stuck))
        if ok and not stuck:
            return StreamAssignment(d, history), plan
        rounds += 1
        if max_rounds is not None and rounds > max_rounds:
            raise RuntimeError("stream assignment did not converge")
        scores = removal_scores(d, _partial_counts(spec, plan, d))
        if stuck:
            involved = {u for pair in stuck for u in pair}
            scores = {u: v for u, v in scores.items() if u in involved}
        d[_pick_removal(scores)] -= 1
