"""
Throughput, DoF estimation, the symmetric-network DoF bound and the
comparison schemes.

Rates treat interference as noise with unit noise variance. Every BS
splits its power evenly over the streams it sends, and each stream is
decoded on its own: stream ``s`` of MS ``(g, k)`` sees
``p |u_s^H H v_s|^2`` against ``1 + p'|u_s^H H v'|^2`` summed over every
other stream in the network, its own MS's other streams included. Designs
rotate each MS's streams with `diagonalize_direct` so that those last
terms vanish once interference is aligned.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from math import floor

import numpy as np

from .allocation import assign_greedy_full, assign_greedy_partial, full_structure_plan
from .network import build_connectivity
from .transceiver import (
    TransceiverOptions,
    TransceiverSet,
    _Layout,
    diagonalize_direct,
    naive_iteration,
    random_transceivers,
    suppress_inter_cell,
    zero_force_intra_cell,
)

__all__ = [
    "ThroughputSample",
    "DoFBoundQuery",
    "Design",
    "SCHEMES",
    "sum_throughput",
    "dof_slope",
    "dof_bound",
    "dof_bound_enumerate",
    "stage_one",
    "design_proposed",
    "baseline_bl1",
    "baseline_bl2",
    "baseline_bl4",
    "baseline_bl5",
    "design_scheme",
    "evaluate_design",
]

SCHEMES = ("proposed", "bl1", "bl2", "bl4", "bl5")


@dataclass
class ThroughputSample:
    snr_db: float
    sum_rate_bits: float
    per_stream_sinr: list
    residual_leakage: float


def _rates(lay, Vp, Up, power, active):
    """Per-MS rates and stream SINRs with the BSs in `active` on."""
    cfg = lay.cfg
    T = lay.effective(Up) @ lay._per_bs(Vp)[None, None]
    T = T.reshape(lay.G, lay.K, lay.G, lay.dmax, lay.K, lay.dmax)
    rates, sinrs = {}, {}
    for g, k in cfg.users():
        dg = int(lay.d[g, k])
        if dg == 0 or g not in active:
            continue
        received = np.zeros((dg, lay.K * lay.dmax))
        total = np.zeros(dg)
        for n in active:
            p = power[n] * np.abs(T[g, k, n, :dg].reshape(dg, -1)) ** 2
            total += p.sum(axis=1)
            if n == g:
                received = p
        own = np.array([received[s, k * lay.dmax + s] for s in range(dg)])
        eig = own / (1.0 + total - own)
        sinrs[g, k] = eig
        rates[g, k] = float(np.sum(np.log2(1.0 + eig)))
    return rates, sinrs


def _power_split(cfg, d, P):
    loads = np.asarray(d).reshape(cfg.G, cfg.K).sum(axis=1)
    return [P / loads[n] if loads[n] > 0 else 0.0 for n in range(cfg.G)]


def sum_throughput(channels, ts, P, active=None, scale=1.0):
    """Network sum rate of a transceiver set at linear transmit power `P`.

    Parameters
    ----------
    active : iterable of int, optional
        BSs that transmit; the rest stay silent and their MSs get no rate.
    scale : float
        Multiplier on the rate, e.g. a scheduling duty factor.

    Returns
    -------
    ThroughputSample
    """
    cfg = channels.config
    lay = _Layout(channels, ts.d)
    Vp, Up = lay.pack_v(ts.V), lay.pack_u(ts.U)
    act = list(range(cfg.G)) if active is None else sorted(active)
    rates, sinrs = _rates(lay, Vp, Up, _power_split(cfg, ts.d, P), act)
    inter, intra = lay.leakage_parts(Vp, Up)
    stream_sinr = [float(x) for u in sorted(sinrs) for x in sinrs[u]]
    return ThroughputSample(
        snr_db=float(10 * np.log10(P)),
        sum_rate_bits=scale * sum(rates.values()),
        per_stream_sinr=stream_sinr,
        residual_leakage=inter + intra,
    )


def dof_slope(low, high):
    """High-SNR slope of sum rate against ``log2(SNR)`` from two samples."""
    if not high.snr_db > low.snr_db >= 30:
        raise ValueError("need two samples with snr2 > snr1 >= 30 dB")
    span = (high.snr_db - low.snr_db) / 10 * np.log2(10)
    return (high.sum_rate_bits - low.sum_rate_bits) / span


@dataclass(frozen=True)
class DoFBoundQuery:
    """Symmetric-network parameters for the per-MS DoF bound."""

    G: int
    K: int
    J: int
    Nt: int
    Nr: int
    R1: int
    R2: int
    d_f: int = 1

    def validate(self):
        if min(self.G, self.K, self.Nt, self.Nr) < 1 or min(self.J, self.R1, self.R2) < 0:
            raise ValueError("counts must be positive and J, R1, R2 nonnegative")
        if not self.R1 <= self.Nr <= self.Nt:
            raise ValueError("premise R1 <= Nr <= Nt violated")
        if self.R2 > self.Nr:
            raise ValueError("premise R2 <= Nr violated")
        if self.d_f * self.K > self.Nt:
            raise ValueError("premise d_f * K <= Nt violated")

    @property
    def interferers(self):
        """Neighbor cells whose MSs hear a BS: ``min(G - 1, 2 J)``."""
        return min(self.G - 1, 2 * self.J)


def dof_bound(q):
    """Closed-form per-MS stream count guaranteed on a symmetric network.

    ``min(R1, floor(max(Nr / (m K R2 / Nt + 1), (Nr + Nt) / (m K + 2))))``
    with ``m = min(G - 1, 2 J)``, evaluated in exact rational arithmetic.
    """
    q.validate()
    mk = q.interferers * q.K
    first = Fraction(q.Nr * q.Nt, mk * q.R2 + q.Nt)
    second = Fraction(q.Nr + q.Nt, mk + 2)
    return min(q.R1, floor(max(first, second)))


def dof_bound_enumerate(q):
    """Largest per-MS stream count passing the symmetric counting test.

    Enumerates ``d`` in ``[0, R1]`` and free dimension ``S`` in
    ``[0, Nt - d K]`` and accepts ``d`` when some ``S`` satisfies
    ``m K min(d, R2 (d + S) / Nt) <= S + Nr - d``.
    """
    q.validate()
    mk = q.interferers * q.K
    best = 0
    for d in range(q.R1 + 1):
        for s in range(q.Nt - d * q.K + 1):
            hit = min(Fraction(d), Fraction(q.R2 * (d + s), q.Nt))
            if mk * hit <= s + q.Nr - d:
                best = d
                break
    return best


@dataclass(eq=False)
class Design:
    """A scheme's transceivers for one channel draw.

    ``schedule`` lists ``(active BSs, rate weight)`` pairs; None means every
    BS transmits all the time.
    """

    scheme: str
    ts: TransceiverSet
    leakage_report: object = None
    zf_report: object = None
    schedule: list | None = None
    notes: dict = field(default_factory=dict)

    @property
    def total_streams(self):
        return int(np.asarray(self.ts.d).sum())


def stage_one(cfg, spec=None):
    """Stream assignment and subspace plans for the proposed scheme and BL1.

    Returns a dict with ``proposed`` and ``bl1`` entries, each an
    ``(assignment, plan)`` pair. Channel realizations do not enter.
    """
    if spec is None:
        spec = build_connectivity(cfg)
    proposed = assign_greedy_partial(cfg, spec)
    full = assign_greedy_full(cfg)
    plan, d = full_structure_plan(cfg, full.d)
    full.d = d
    return {"proposed": proposed, "bl1": (full, plan)}


def _two_stage(scheme, channels, assignment, plan, options):
    ts, rep = suppress_inter_cell(channels, plan, assignment.d, options)
    try:
        out, zf = zero_force_intra_cell(channels, ts, strict=True)
    except np.linalg.LinAlgError:
        out, zf = zero_force_intra_cell(channels, ts, strict=False)
    return Design(scheme, diagonalize_direct(channels, out), rep, zf)


def design_proposed(channels, stage, options=None):
    """Inter-cell suppression then intra-cell zero-forcing on the partial plan."""
    assignment, plan = stage["proposed"]
    return _two_stage("proposed", channels, assignment, plan, options)


def baseline_bl1(channels, stage, options=None):
    """The proposed stages on a plan that ignores partial connectivity."""
    assignment, plan = stage["bl1"]
    return _two_stage("bl1", channels, assignment, plan, options)


def _requested_streams(channels):
    cfg = channels.config
    spec = channels.spec
    d = np.zeros((cfg.G, cfg.K), dtype=np.int64)
    for g, k in cfg.users():
        d[g, k] = min(cfg.d_max[g][k], spec.rank(g, k, g))
    return d


def baseline_bl2(channels, d=None, options=None):
    """Unstructured alternating leakage minimization on the requested streams."""
    if d is None:
        d = _requested_streams(channels)
    ts, rep = naive_iteration(channels, d, options)
    return Design("bl2", diagonalize_direct(channels, ts), rep)


def baseline_bl4(channels, d=None):
    """Round robin over BSs with block-diagonal zero-forcing inside the cell.

    Each MS decodes with the dominant left singular vectors of its direct
    channel. Each precoder is restricted to the null space of the other
    same-cell MSs' effective channels and takes the dominant directions of
    its own effective channel there. Every BS is active a ``1 / G`` share of
    the time.
    """
    cfg = channels.config
    if d is None:
        d = _requested_streams(channels)
    d = np.array(d, dtype=np.int64).reshape(cfg.G, cfg.K)
    V, U = {}, {}
    for n in range(cfg.G):
        eff = {}
        for j in range(cfg.K):
            h = channels[n, j, n]
            left, _, _ = np.linalg.svd(h)
            U[n, j] = left[:, : d[n, j]]
            eff[j] = U[n, j].conj().T @ h
        for j in range(cfg.K):
            others = [eff[i] for i in range(cfg.K) if i != j and d[n, i] > 0]
            nt = cfg.Nt[n]
            if others:
                stack = np.vstack(others)
                _, s, vh = np.linalg.svd(stack)
                rank = int(np.sum(s > 1e-9 * max(s[0], 1e-300))) if s.size else 0
                null = vh[rank:].conj().T
            else:
                null = np.eye(nt, dtype=complex)
            d[n, j] = min(d[n, j], null.shape[1])
            _, _, vh = np.linalg.svd(eff[j] @ null)
            V[n, j] = null @ vh[: d[n, j]].conj().T
            U[n, j] = U[n, j][:, : d[n, j]]
    ts = diagonalize_direct(channels, TransceiverSet(d, V, U))
    schedule = [([n], 1.0 / cfg.G) for n in range(cfg.G)]
    return Design("bl4", ts, schedule=schedule)


def baseline_bl5(channels, d=None, seed=0):
    """Seeded random orthonormal precoders and decorrelators."""
    if d is None:
        d = _requested_streams(channels)
    return Design("bl5", random_transceivers(channels, d, seed))


def design_scheme(scheme, channels, stage=None, seed=0, options=None):
    """Build the named scheme's design for one channel draw."""
    if options is None:
        options = TransceiverOptions(seed=seed)
    if scheme in ("proposed", "bl1"):
        if stage is None:
            stage = stage_one(channels.config, channels.spec)
        fn = design_proposed if scheme == "proposed" else baseline_bl1
        return fn(channels, stage, options)
    if scheme == "bl2":
        return baseline_bl2(channels, options=options)
    if scheme == "bl4":
        return baseline_bl4(channels)
    if scheme == "bl5":
        return baseline_bl5(channels, seed=seed)
    raise ValueError(f"unknown scheme {scheme!r}")


def evaluate_design(design, channels, P):
    """Sum throughput of a design at power `P`, honoring its schedule."""
    if design.schedule is None:
        return sum_throughput(channels, design.ts, P)
    parts = [sum_throughput(channels, design.ts, P, active, w) for active, w in design.schedule]
    return ThroughputSample(
        snr_db=parts[0].snr_db,
        sum_rate_bits=sum(p.sum_rate_bits for p in parts),
        per_stream_sinr=[x for p in parts for x in p.per_stream_sinr],
        residual_leakage=parts[0].residual_leakage,
    )
