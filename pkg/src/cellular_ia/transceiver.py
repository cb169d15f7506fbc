"""
Stages 2 and 3: precoder and decorrelator design.

`suppress_inter_cell` alternates between decorrelators and the free part of
structured precoders ``V^I = V^C + S V^F`` to drive inter-cell leakage to
zero. `zero_force_intra_cell` then rotates each BS's intermediate precoders
so that MSs of the same cell stop hearing each other, without leaving the
span the inter-cell stage aligned. `naive_iteration` is the unstructured
alternating minimization used as a baseline.

All link products are batched over a zero-padded channel tensor of shape
``(G, K, G, Nr_max, Nt_max)``; eigen-decompositions and solves stay per node.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "diagonalize_direct",
    "TransceiverOptions",
    "TransceiverSet",
    "LeakageReport",
    "ZeroForcingReport",
    "leakage",
    "suppress_inter_cell",
    "zero_force_intra_cell",
    "naive_iteration",
    "random_transceivers",
    "write_trace_csv",
    "smallest_eigvecs",
    "free_update",
]


@dataclass
class TransceiverOptions:
    """Stopping and initialization settings of the iterative stages.

    Iteration stops when the relative leakage decrease of a full iteration
    is at most `tol`, when leakage after either half-step is at most
    `floor`, or after `max_iters` iterations. `reanchor` bounds the free
    element norm on flexible BSs before their cores are refreshed; None
    disables it.
    """

    tol: float = 1e-10
    max_iters: int = 2000
    floor: float = 1e-24
    seed: int | None = 0
    init_scale: float = 1.0
    reanchor: float | None = 1.0


@dataclass(eq=False)
class TransceiverSet:
    """Per-MS precoders and decorrelators keyed by ``(g, k)``.

    ``V_int`` holds the intermediate precoders of the inter-cell stage and is
    empty for designs that have none.
    """

    d: np.ndarray
    V: dict
    U: dict
    V_int: dict = field(default_factory=dict)
    plan: object = None

    @property
    def users(self):
        return [u for u in sorted(self.V) if self.d[u] > 0]


@dataclass
class LeakageReport:
    inter_cell: float
    intra_cell: float
    trace: list
    iterations: int = 0
    converged: bool = False
    pinv_fallback: bool = False


@dataclass
class ZeroForcingReport:
    stacked_rank: dict
    expected_rank: dict
    deficient: list

    @property
    def ok(self):
        return not self.deficient


def _phase_fix(x):
    """Rotate each column so its largest-magnitude entry is real positive."""
    if x.size == 0:
        return x
    idx = np.argmax(np.abs(x), axis=0)
    peak = x[idx, np.arange(x.shape[1])]
    phase = np.where(np.abs(peak) > 0, peak / np.abs(peak), 1.0)
    return x / phase


def smallest_eigvecs(q, count):
    """Eigenvectors of the Hermitian `q` for its `count` smallest eigenvalues."""
    q = (q + q.conj().T) / 2
    _, vecs = np.linalg.eigh(q)
    return _phase_fix(vecs[:, :count])


def free_update(core, free_basis, q, cond_limit=1e12):
    """Free elements minimizing ``||Q^(1/2) (core + free_basis X)||_F``.

    Solves ``(S^H Q S) X = -S^H Q V^C``; falls back to the pseudo-inverse
    when ``S^H Q S`` is singular. Returns ``(X, used_pinv)``.
    """
    if free_basis.shape[1] == 0:
        return np.zeros((0, core.shape[1]), dtype=complex), False
    a = free_basis.conj().T @ q @ free_basis
    b = free_basis.conj().T @ q @ core
    if np.linalg.cond(a) < cond_limit:
        return -np.linalg.solve(a, b), False
    return -np.linalg.pinv(a, hermitian=True) @ b, True


def _batched_smallest(q, count):
    """Batched version of `smallest_eigvecs` over leading axes."""
    q = (q + np.swapaxes(q, -1, -2).conj()) / 2
    _, vecs = np.linalg.eigh(q)
    vecs = vecs[..., :count]
    idx = np.argmax(np.abs(vecs), axis=-2)
    peak = np.take_along_axis(vecs, idx[..., None, :], axis=-2)
    mag = np.abs(peak)
    phase = np.where(mag > 0, peak / np.where(mag > 0, mag, 1.0), 1.0)
    return vecs / phase


def _groups(users, key):
    out = {}
    for u in users:
        out.setdefault(key(u), []).append(u)
    return [(k, tuple(np.array(v).T)) for k, v in out.items()]


class _Layout:
    """Padded tensors and index bookkeeping for one channel set."""

    def __init__(self, channels, d):
        cfg = channels.config
        self.cfg = cfg
        self.G, self.K = cfg.G, cfg.K
        self.nt = max(cfg.Nt)
        self.nr = max(max(row) for row in cfg.Nr)
        self.d = np.asarray(d, dtype=np.int64).reshape(self.G, self.K)
        self.dmax = max(int(self.d.max()), 1)
        H = np.zeros((self.G, self.K, self.G, self.nr, self.nt), dtype=complex)
        for (g, k, n), h in channels.H.items():
            H[g, k, n, : h.shape[0], : h.shape[1]] = h
        self.H = H
        self.cross = ~np.eye(self.G, dtype=bool)
        eye_g = np.eye(self.G, dtype=bool)[:, None, :, None]
        eye_k = np.eye(self.K, dtype=bool)[None, :, None, :]
        self.inter_mask = np.broadcast_to(~eye_g, (self.G, self.K, self.G, self.K))
        self.intra_mask = eye_g & ~eye_k
        self.other_mask = ~(eye_g & eye_k)

    def pack_v(self, V):
        out = np.zeros((self.G, self.K, self.nt, self.dmax), dtype=complex)
        for (g, k), v in V.items():
            out[g, k, : v.shape[0], : v.shape[1]] = v
        return out

    def pack_u(self, U):
        out = np.zeros((self.G, self.K, self.nr, self.dmax), dtype=complex)
        for (g, k), u in U.items():
            out[g, k, : u.shape[0], : u.shape[1]] = u
        return out

    def _per_bs(self, Vp):
        """Precoders of each BS side by side: ``(G, Nt, K * dmax)``."""
        return Vp.transpose(0, 2, 1, 3).reshape(self.G, self.nt, self.K * self.dmax)

    def effective(self, Up):
        """``U[g,k]^H H[g,k,n]`` for every link: ``(G, K, G, dmax, Nt)``."""
        return np.swapaxes(Up, -1, -2).conj()[:, :, None] @ self.H

    def link_power(self, Vp, Up):
        """``||U[g,k]^H H[g,k,n] V[n,j]||_F^2`` as ``(G, K, G, K)``."""
        T = self.effective(Up) @ self._per_bs(Vp)[None, None]
        T = T.reshape(self.G, self.K, self.G, self.dmax, self.K, self.dmax)
        return (np.abs(T) ** 2).sum(axis=(3, 5))

    def leakage_parts(self, Vp, Up):
        power = self.link_power(Vp, Up)
        return float(power[self.inter_mask].sum()), float(power[self.intra_mask].sum())

    def rx_covariance(self, Vp, exclude_own_cell):
        """Interference covariance at every MS, shape ``(G, K, Nr, Nr)``."""
        A = self.H @ self._per_bs(Vp)[None, None]
        A = A.reshape(self.G, self.K, self.G, self.nr, self.K, self.dmax)
        mask = self.inter_mask if exclude_own_cell else self.other_mask
        A = A * mask[:, :, :, None, :, None]
        A = A.transpose(0, 1, 3, 2, 4, 5).reshape(self.G, self.K, self.nr, -1)
        return A @ np.swapaxes(A, -1, -2).conj()

    def tx_covariance(self, Up, exclude_own_cell):
        """Leakage covariance seen by each transmit MS, shape ``(G, K, Nt, Nt)``.

        With `exclude_own_cell` the value only depends on the BS.
        """
        C = self.effective(Up)
        if exclude_own_cell:
            C = C * self.cross[:, None, :, None, None]
            M = C.transpose(2, 0, 1, 3, 4).reshape(self.G, -1, self.nt)
            q = np.swapaxes(M, -1, -2).conj() @ M
            return np.broadcast_to(q[:, None], (self.G, self.K, self.nt, self.nt))
        per = np.swapaxes(C, -1, -2).conj() @ C
        total = per.sum(axis=(0, 1))
        g = np.arange(self.G)[:, None]
        own = per[g, np.arange(self.K)[None, :], g]
        return total[:, None] - own


def leakage(channels, V, U, d):
    """``(inter_cell, intra_cell)`` leakage of the given precoders and decorrelators."""
    lay = _Layout(channels, d)
    return lay.leakage_parts(lay.pack_v(V), lay.pack_u(U))


def _random_orthonormal(rng, rows, cols):
    z = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    q, _ = np.linalg.qr(z)
    return q[:, :cols]


def _reanchor(n, Vp, core, free, d, cfg):
    """Re-center the cores of BS `n` on the span of its current precoders.

    Only valid where cores are arbitrary. The new cores are an orthonormal
    basis of the current precoder span and the free space is its
    complement, so every precoder becomes a normalized version of itself.
    Normalizing never raises leakage because ``V^H V >= I``.
    """
    nt = cfg.Nt[n]
    members = [j for j in range(cfg.K) if d[n, j] > 0]
    block = np.hstack([Vp[n, j, :nt, : d[n, j]] for j in members])
    unitary, _ = np.linalg.qr(block, mode="complete")
    start = 0
    for j in members:
        stop = start + d[n, j]
        core[n, j] = unitary[:, start:stop]
        free[n, j] = unitary[:, block.shape[1] :]
        Vp[n, j, :nt, : d[n, j]] = core[n, j]
        start = stop


def _stack(mapping, users):
    return np.stack([mapping[u] for u in users])


def suppress_inter_cell(channels, plan, d, options=None):
    """Alternating inter-cell leakage minimization over structured precoders.

    Decorrelators ``U = S^r U^F`` take the smallest eigenvectors of the
    interference covariance filtered by the receive space ``S^r``. Each
    intermediate precoder ``V^C + S^t V^F`` then gets the free elements that
    minimize its own leakage in closed form. Both half-steps are exact
    minimizations, so the recorded trace never increases.

    Returns
    -------
    TransceiverSet, LeakageReport
        ``V`` equals the intermediate precoders until `zero_force_intra_cell`
        replaces it.
    """
    opts = options or TransceiverOptions()
    lay = _Layout(channels, d)
    cfg = lay.cfg
    d = lay.d
    rng = np.random.default_rng(opts.seed)
    users = [u for u in cfg.users() if d[u] > 0]
    core = {u: plan.core[u].basis[:, : d[u]] for u in users}
    free = {u: plan.free[u].basis for u in users}
    recv = {u: plan.receive[u].basis for u in users}
    for u in users:
        if core[u].shape[1] != d[u]:
            raise ValueError(f"core space of {u} has dimension below d={d[u]}")
        if recv[u].shape[1] < d[u]:
            raise ValueError(f"receive space of {u} has dimension below d={d[u]}")
    VI = {}
    for u in users:
        shape = (free[u].shape[1], d[u])
        vf = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
        vf *= opts.init_scale
        VI[u] = core[u] + free[u] @ vf

    # nodes sharing dimensions are updated as one batch
    rx_groups = []
    for (nr, r, dd), idx in _groups(users, lambda u: (cfg.Nr[u[0]][u[1]], recv[u].shape[1], d[u])):
        members = list(zip(*idx))
        rx_groups.append((nr, dd, idx, _stack(recv, members), members))

    def tx_groups():
        out = []
        for (nt, s, dd), idx in _groups(users, lambda u: (cfg.Nt[u[0]], free[u].shape[1], d[u])):
            members = list(zip(*idx))
            out.append((nt, s, idx, _stack(core, members), _stack(free, members), members))
        return out

    groups = tx_groups()
    flexible = [n for n in sorted(getattr(plan, "flexible", ())) if d[n].sum() > 0]

    Vp = lay.pack_v(VI)
    Up = np.zeros((lay.G, lay.K, lay.nr, lay.dmax), dtype=complex)
    trace = []
    pinv_used = False
    converged = False
    it = 0
    prev = None
    for it in range(1, opts.max_iters + 1):
        R = lay.rx_covariance(Vp, exclude_own_cell=True)
        Up = np.zeros_like(Up)
        for nr, dd, idx, sr, _ in rx_groups:
            sr_h = np.swapaxes(sr, -1, -2).conj()
            q = sr_h @ R[idx][:, :nr, :nr] @ sr
            Up[idx[0], idx[1], :nr, :dd] = sr @ _batched_smallest(q, dd)
        trace.append(lay.leakage_parts(Vp, Up)[0])
        if trace[-1] <= opts.floor:
            converged = True
            break
        Q = lay.tx_covariance(Up, exclude_own_cell=True)
        Vp = np.zeros_like(Vp)
        free_norm = {}
        for nt, s, idx, vc, sf, members in groups:
            dd = vc.shape[-1]
            if s == 0:
                Vp[idx[0], idx[1], :nt, :dd] = vc
                continue
            q = Q[idx][:, :nt, :nt]
            sf_h = np.swapaxes(sf, -1, -2).conj()
            a = sf_h @ q @ sf
            b = sf_h @ q @ vc
            ok = np.linalg.cond(a) < 1e12
            x = np.empty(b.shape, dtype=complex)
            if ok.any():
                x[ok] = -np.linalg.solve(a[ok], b[ok])
            if not ok.all():
                pinv_used = True
                x[~ok] = -np.linalg.pinv(a[~ok], hermitian=True) @ b[~ok]
            Vp[idx[0], idx[1], :nt, :dd] = vc + sf @ x
            free_norm.update(zip(members, np.linalg.norm(x, ord=2, axis=(1, 2))))
        if opts.reanchor is not None:
            moved = [
                n
                for n in flexible
                if max(free_norm.get((n, j), 0.0) for j in range(cfg.K)) > opts.reanchor
            ]
            for n in moved:
                _reanchor(n, Vp, core, free, d, cfg)
            if moved:
                groups = tx_groups()
        cur = lay.leakage_parts(Vp, Up)[0]
        trace.append(cur)
        if cur <= opts.floor or (prev is not None and prev - cur <= opts.tol * prev):
            converged = True
            break
        prev = cur
    VI = {u: Vp[u][: cfg.Nt[u[0]], : d[u]].copy() for u in users}
    U = {u: Up[u][: cfg.Nr[u[0]][u[1]], : d[u]].copy() for u in users}
    inter, intra = lay.leakage_parts(Vp, Up)
    ts = TransceiverSet(d.copy(), dict(VI), U, dict(VI), plan)
    return ts, LeakageReport(inter, intra, trace, it, converged, pinv_used)


def zero_force_intra_cell(channels, ts, strict=True, tol=1e-9):
    """Rotate intermediate precoders so that MSs of one cell stop interfering.

    For MS ``q`` of BS ``n`` the effective channels ``U^H H V^I`` of the
    other MSs are stacked above its own and factored as ``L Q``. The last
    ``d_q`` rows of ``Q`` are orthogonal to the other MSs' effective
    channels, so mapping them back through ``V^I`` gives a precoder inside
    ``span(V^I)`` that the other MSs cannot hear. An SVD restores
    orthonormal columns.

    Parameters
    ----------
    strict : bool
        Raise when a stacked effective channel is rank deficient. Otherwise
        record it in the report and proceed.

    Returns
    -------
    TransceiverSet, ZeroForcingReport
    """
    cfg = channels.config
    d = ts.d
    V = {}
    stacked_rank, expected, deficient = {}, {}, []
    for n in range(cfg.G):
        members = [j for j in range(cfg.K) if d[n, j] > 0]
        if not members:
            continue
        VI = np.hstack([ts.V_int[n, j] for j in members])
        W = {j: ts.U[n, j].conj().T @ channels[n, j, n] for j in members}
        full = np.vstack([W[j] for j in members]) @ VI
        total = int(sum(d[n, j] for j in members))
        s = np.linalg.svd(full, compute_uv=False)
        rank = int(np.sum(s > tol * max(s[0], 1e-300))) if s.size else 0
        stacked_rank[n] = rank
        expected[n] = total
        if rank < total:
            deficient.append(n)
            if strict:
                raise np.linalg.LinAlgError(
                    f"stacked effective channel of BS {n} has rank {rank} < {total}"
                )
        for q in members:
            others = [W[j] for j in members if j != q]
            m = np.vstack(others + [W[q]]) @ VI
            q1, _ = np.linalg.qr(m.conj().T, mode="complete")
            raw = VI @ q1[:, -d[n, q] :]
            left, _, _ = np.linalg.svd(raw, full_matrices=False)
            V[n, q] = left[:, : d[n, q]]
    for u in cfg.users():
        if d[u] == 0:
            V[u] = np.zeros((cfg.Nt[u[0]], 0), dtype=complex)
    U = dict(ts.U)
    for u in cfg.users():
        if d[u] == 0:
            U[u] = np.zeros((cfg.Nr[u[0]][u[1]], 0), dtype=complex)
    out = TransceiverSet(d.copy(), V, U, dict(ts.V_int), ts.plan)
    return out, ZeroForcingReport(stacked_rank, expected, deficient)


def diagonalize_direct(channels, ts):
    """Rotate each MS's streams so its own effective channel is diagonal.

    With ``U^H H V = A S B^H`` the pair ``(U A, V B)`` spans the same
    spaces, so leakage and zero-forcing are unchanged, while each stream
    now sees only its own desired coefficient.
    """
    V, U = dict(ts.V), dict(ts.U)
    for u in ts.users:
        a, _, bh = np.linalg.svd(ts.U[u].conj().T @ channels[u[0], u[1], u[0]] @ ts.V[u])
        U[u] = ts.U[u] @ a
        V[u] = ts.V[u] @ bh.conj().T
    return TransceiverSet(ts.d.copy(), V, U, dict(ts.V_int), ts.plan)


def naive_iteration(channels, d, options=None):
    """Unstructured alternating leakage minimization over all cross streams.

    Both updates take the smallest eigenvectors of the leakage covariance
    from every other MS, intra-cell MSs included.
    """
    opts = options or TransceiverOptions()
    lay = _Layout(channels, d)
    cfg = lay.cfg
    d = lay.d
    rng = np.random.default_rng(opts.seed)
    users = [u for u in cfg.users() if d[u] > 0]
    V = {u: _random_orthonormal(rng, cfg.Nt[u[0]], d[u]) for u in users}
    U = {}
    trace = []
    converged = False
    prev = None
    it = 0

    def total(Vp, Up):
        a, b = lay.leakage_parts(Vp, Up)
        return a + b

    for it in range(1, opts.max_iters + 1):
        Vp = lay.pack_v(V)
        R = lay.rx_covariance(Vp, exclude_own_cell=False)
        for u in users:
            nr = cfg.Nr[u[0]][u[1]]
            U[u] = smallest_eigvecs(R[u][:nr, :nr], d[u])
        Up = lay.pack_u(U)
        trace.append(total(Vp, Up))
        if trace[-1] <= opts.floor:
            converged = True
            break
        Q = lay.tx_covariance(Up, exclude_own_cell=False)
        for u in users:
            nt = cfg.Nt[u[0]]
            V[u] = smallest_eigvecs(Q[u][:nt, :nt], d[u])
        Vp = lay.pack_v(V)
        cur = total(Vp, Up)
        trace.append(cur)
        if cur <= opts.floor or (prev is not None and prev - cur <= opts.tol * prev):
            converged = True
            break
        prev = cur
    for u in cfg.users():
        if d[u] == 0:
            V[u] = np.zeros((cfg.Nt[u[0]], 0), dtype=complex)
            U[u] = np.zeros((cfg.Nr[u[0]][u[1]], 0), dtype=complex)
    inter, intra = lay.leakage_parts(lay.pack_v(V), lay.pack_u(U))
    ts = TransceiverSet(d.copy(), V, U)
    return ts, LeakageReport(inter, intra, trace, it, converged)


def random_transceivers(channels, d, seed):
    """Seeded random orthonormal precoders and decorrelators."""
    cfg = channels.config
    d = np.asarray(d, dtype=np.int64).reshape(cfg.G, cfg.K)
    rng = np.random.default_rng(seed)
    V, U = {}, {}
    for u in cfg.users():
        V[u] = _random_orthonormal(rng, cfg.Nt[u[0]], d[u])
        U[u] = _random_orthonormal(rng, cfg.Nr[u[0]][u[1]], d[u])
    return TransceiverSet(d.copy(), V, U)


def write_trace_csv(report, fh):
    """Write ``half_step,iteration,phase,leakage`` rows for a leakage trace."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["half_step", "iteration", "phase", "leakage"])
    for i, value in enumerate(report.trace):
        writer.writerow([i, i // 2 + 1, "receive" if i % 2 == 0 else "transmit", repr(float(value))])
