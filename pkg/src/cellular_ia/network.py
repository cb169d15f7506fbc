"""
Scenario construction for MIMO cellular networks.

A scenario has three layers:

* `NetworkConfig` fixes the antenna counts, stream caps and topology.
* `ConnectivitySpec` holds, for every BS-to-MS link, the root channel gain
  and the transmit/receive null spaces that make the link partially
  connected.
* `ChannelSet` is one seeded draw of the channel matrices
  ``H = gain * A^H Hw B`` consistent with the connectivity.

Links are keyed by ``(g, k, n)``: from BS ``n`` to the ``k``-th MS of BS
``g``. All indices are zero-based.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .subspace import Subspace, complement, full_space, span, zero_space

__all__ = [
    "FullyConnected",
    "Symmetric",
    "Geometric",
    "NetworkConfig",
    "Link",
    "ConnectivitySpec",
    "ChannelSet",
    "build_connectivity",
    "build_full_connectivity",
    "build_symmetric_connectivity",
    "build_geometric_connectivity",
    "symmetric_null_indices",
    "dft_vector",
    "scattering_null_indices",
    "sample_channels",
    "save_channels",
    "load_channels",
]


@dataclass(frozen=True)
class FullyConnected:
    """Every link connected with unit gain and no spatial correlation."""


@dataclass(frozen=True)
class Symmetric:
    """Symmetric partially connected network.

    BS ``n`` reaches the MSs of BS ``g`` only when the cyclic distance
    between ``n`` and ``g`` is at most `J`. Intra-cell links have rank `R1`
    and connected inter-cell links rank `R2`.

    `basis_seed` replaces the canonical antenna basis by a seeded random
    unitary basis.
    """

    J: int
    R1: int
    R2: int
    basis_seed: int | None = None


@dataclass(frozen=True)
class Geometric:
    """Random drop of BSs and MSs in a square with path loss and scattering.

    Links longer than `L_km` are disconnected. Shorter links keep only the
    DFT directions inside the angular spread of a scattering ring of radius
    `S_km` around the MS.
    """

    L_km: float
    S_km: float
    area_km: float = 30.0
    seed: int = 0
    path_loss_exponent: float | None = None


@dataclass
class NetworkConfig:
    """Static description of a cellular scenario.

    Attributes
    ----------
    G, K : int
        Number of BSs and MSs per BS.
    Nt : tuple of int
        Antennas at each BS.
    Nr : tuple of tuple of int
        Antennas at each MS, ``Nr[g][k]``.
    d_max : tuple of tuple of int
        Requested streams per MS.
    topology : FullyConnected, Symmetric or Geometric
    P : float
        Linear transmit power per BS.
    """

    G: int
    K: int
    Nt: tuple
    Nr: tuple
    d_max: tuple
    topology: object = field(default_factory=FullyConnected)
    P: float = 1.0

    def __post_init__(self):
        self.Nt = tuple(int(x) for x in self.Nt)
        self.Nr = tuple(tuple(int(x) for x in row) for row in self.Nr)
        self.d_max = tuple(tuple(int(x) for x in row) for row in self.d_max)
        self.validate()

    @classmethod
    def uniform(cls, G, K, Nt, Nr, d_max, topology=None, P=1.0):
        """Config with identical antenna counts and stream caps everywhere."""
        return cls(
            G=G,
            K=K,
            Nt=(Nt,) * G,
            Nr=((Nr,) * K,) * G,
            d_max=((d_max,) * K,) * G,
            topology=FullyConnected() if topology is None else topology,
            P=P,
        )

    def validate(self):
        if self.G < 1 or self.K < 1:
            raise ValueError("G and K must be at least 1")
        if len(self.Nt) != self.G or len(self.Nr) != self.G or len(self.d_max) != self.G:
            raise ValueError("per-BS lists must have length G")
        for g in range(self.G):
            if len(self.Nr[g]) != self.K or len(self.d_max[g]) != self.K:
                raise ValueError("per-MS lists must have length K")
            if self.Nt[g] < 1:
                raise ValueError("Nt must be positive")
            for k in range(self.K):
                if not 1 <= self.d_max[g][k] <= self.Nr[g][k]:
                    raise ValueError(
                        f"d_max[{g}][{k}]={self.d_max[g][k]} outside [1, Nr={self.Nr[g][k]}]"
                    )
        if self.P <= 0:
            raise ValueError("P must be positive")
        topo = self.topology
        if isinstance(topo, Symmetric):
            nt, nr = self.Nt[0], self.Nr[0][0]
            if any(x != nt for x in self.Nt) or any(
                x != nr for row in self.Nr for x in row
            ):
                raise ValueError("symmetric topology needs uniform antenna counts")
            if not (topo.R1 <= nr <= nt and topo.R2 <= nr):
                raise ValueError("symmetric topology needs R1 <= Nr <= Nt and R2 <= Nr")
            if topo.R1 < 0 or topo.R2 < 0 or topo.J < 0:
                raise ValueError("J, R1, R2 must be nonnegative")
            for g in range(self.G):
                if sum(self.d_max[g]) > nt:
                    raise ValueError("symmetric topology needs d_max * K <= Nt")
        elif isinstance(topo, Geometric):
            if topo.L_km <= 0 or topo.S_km < 0 or topo.area_km <= 0:
                raise ValueError("geometric topology needs L > 0, S >= 0, area > 0")
        elif not isinstance(topo, FullyConnected):
            raise TypeError(f"unknown topology {topo!r}")

    def users(self):
        """All MS indices ``(g, k)`` in lexicographic order."""
        return [(g, k) for g in range(self.G) for k in range(self.K)]

    def links(self):
        return [(g, k, n) for g in range(self.G) for k in range(self.K) for n in range(self.G)]


@dataclass(frozen=True, eq=False)
class Link:
    gain: float
    tx_null: Subspace
    rx_null: Subspace

    @property
    def connected(self):
        return self.gain > 0 and not self.tx_null.is_full and not self.rx_null.is_full

    @property
    def rank(self):
        """Generic rank of the channel matrix drawn on this link."""
        if not self.connected:
            return 0
        return min(
            self.rx_null.ambient_dim - self.rx_null.dim,
            self.tx_null.ambient_dim - self.tx_null.dim,
        )


@dataclass(eq=False)
class ConnectivitySpec:
    """Per-link gains and null spaces of a scenario."""

    config: NetworkConfig
    links: dict
    geometry: dict | None = None

    def __getitem__(self, key):
        return self.links[key]

    def connected(self, g, k, n):
        return self.links[g, k, n].connected

    def rank(self, g, k, n):
        return self.links[g, k, n].rank

    def tx_null(self, g, k, n):
        return self.links[g, k, n].tx_null

    def rx_null(self, g, k, n):
        return self.links[g, k, n].rx_null

    @property
    def is_fully_connected(self):
        return all(
            link.connected and link.tx_null.is_zero and link.rx_null.is_zero
            for link in self.links.values()
        )


def _disconnected(nt, nr):
    return Link(0.0, full_space(nt), full_space(nr))


def build_full_connectivity(cfg):
    links = {}
    for g, k, n in cfg.links():
        links[g, k, n] = Link(1.0, zero_space(cfg.Nt[n]), zero_space(cfg.Nr[g][k]))
    return ConnectivitySpec(cfg, links)


def _window(start, width, nt):
    return {(start + i) % nt for i in range(width)}


def symmetric_null_indices(g, k, n, G, J, R1, R2, nt):
    """Basis indices spanning the transmit null space of link ``(g, k, n)``.

    Returns None when the link is disconnected. The intra-cell link of MS
    ``k`` keeps the `R1` indices starting at ``k * R1``; a connected
    inter-cell link keeps the `R2` indices starting at ``((n - g) mod G) * R2``.
    All other indices are null.
    """
    everything = set(range(nt))
    if g == n:
        return sorted(everything - _window(k * R1, R1, nt))
    gap = abs(n - g)
    if gap <= J or gap >= G - J:
        return sorted(everything - _window(((n - g) % G) * R2, R2, nt))
    return None


def build_symmetric_connectivity(cfg):
    topo = cfg.topology
    if not isinstance(topo, Symmetric):
        raise ValueError("configuration does not have a symmetric topology")
    cfg.validate()
    nt, nr = cfg.Nt[0], cfg.Nr[0][0]
    if topo.basis_seed is None:
        basis = np.eye(nt, dtype=complex)
    else:
        rng = np.random.default_rng(topo.basis_seed)
        z = rng.standard_normal((nt, nt)) + 1j * rng.standard_normal((nt, nt))
        q, r = np.linalg.qr(z)
        basis = q * (np.diag(r) / np.abs(np.diag(r)))
    links = {}
    for g, k, n in cfg.links():
        idx = symmetric_null_indices(g, k, n, cfg.G, topo.J, topo.R1, topo.R2, nt)
        if idx is None:
            links[g, k, n] = _disconnected(nt, nr)
            continue
        tx_null = span(basis[:, idx]) if idx else zero_space(nt)
        if tx_null.is_full:
            links[g, k, n] = _disconnected(nt, nr)
        else:
            links[g, k, n] = Link(1.0, tx_null, zero_space(nr))
    return ConnectivitySpec(cfg, links)


def dft_vector(n, omega):
    """Unit-norm array response ``e_n(omega)``."""
    return np.exp(-2j * np.pi * omega * np.arange(n)) / np.sqrt(n)


def _sin_range(lo, hi):
    """Range of ``sin`` over the closed interval ``[lo, hi]``."""
    if hi - lo >= 2 * np.pi:
        return -1.0, 1.0
    values = [np.sin(lo), np.sin(hi)]
    for crit in (np.pi / 2, -np.pi / 2):
        first = crit + 2 * np.pi * np.ceil((lo - crit) / (2 * np.pi))
        if first <= hi:
            values.append(np.sin(crit))
    return min(values), max(values)


def _circular_gap(x, lo, hi):
    """Distance on the unit circle between point `x` and arc ``[lo, hi]``."""
    best = np.inf
    for y in (x - 1.0, x, x + 1.0):
        if lo <= y <= hi:
            return 0.0
        best = min(best, abs(y - lo), abs(y - hi))
    return best


def scattering_null_indices(nt, theta, spread):
    """DFT indices ``q`` whose frequency ``q / nt`` is outside the spread.

    A direction is null when its normalized spatial frequency stays more
    than ``1 / nt`` (circularly) away from ``sin(t) / 2`` for every angle
    ``t`` within `spread` of `theta`.
    """
    s_lo, s_hi = _sin_range(theta - spread, theta + spread)
    lo, hi = s_lo / 2, s_hi / 2
    return [q for q in range(nt) if _circular_gap(q / nt, lo, hi) > 1.0 / nt]


def build_geometric_connectivity(cfg):
    topo = cfg.topology
    if not isinstance(topo, Geometric):
        raise ValueError("configuration does not have a geometric topology")
    rng = np.random.default_rng(topo.seed)
    bs_pos = rng.uniform(0.0, topo.area_km, size=(cfg.G, 2))
    ms_pos = rng.uniform(0.0, topo.area_km, size=(cfg.G, cfg.K, 2))
    links = {}
    distance = np.zeros((cfg.G, cfg.K, cfg.G))
    bearing = np.zeros((cfg.G, cfg.K, cfg.G))
    for g, k, n in cfg.links():
        nt, nr = cfg.Nt[n], cfg.Nr[g][k]
        delta = ms_pos[g, k] - bs_pos[n]
        dist = float(np.hypot(*delta))
        theta = float(np.arctan2(delta[1], delta[0]))
        distance[g, k, n] = dist
        bearing[g, k, n] = theta
        if dist > topo.L_km:
            links[g, k, n] = _disconnected(nt, nr)
            continue
        spread = np.arcsin(topo.S_km / dist) if topo.S_km <= dist else np.pi
        idx = scattering_null_indices(nt, theta, spread)
        if len(idx) == nt:
            links[g, k, n] = _disconnected(nt, nr)
            continue
        if idx:
            tx_null = span(np.column_stack([dft_vector(nt, q / nt) for q in idx]))
        else:
            tx_null = zero_space(nt)
        gain = 1.0
        if topo.path_loss_exponent is not None:
            gain = max(dist, 1e-3) ** (-topo.path_loss_exponent / 2)
        links[g, k, n] = Link(gain, tx_null, zero_space(nr))
    geometry = {"bs": bs_pos, "ms": ms_pos, "distance": distance, "bearing": bearing}
    return ConnectivitySpec(cfg, links, geometry)


def build_connectivity(cfg):
    """Dispatch on the topology of `cfg`."""
    topo = cfg.topology
    if isinstance(topo, FullyConnected):
        return build_full_connectivity(cfg)
    if isinstance(topo, Symmetric):
        return build_symmetric_connectivity(cfg)
    if isinstance(topo, Geometric):
        return build_geometric_connectivity(cfg)
    raise TypeError(f"unknown topology {topo!r}")


def _correlation_root(null):
    """Projector onto the complement of `null`, scaled to unit Frobenius norm."""
    keep = complement(null)
    if keep.is_zero:
        return np.zeros((null.ambient_dim, null.ambient_dim), dtype=complex)
    return keep.projector() / np.sqrt(keep.dim)


@dataclass(eq=False)
class ChannelSet:
    """One channel realization: ``H[g, k, n]`` is ``Nr[g][k] x Nt[n]``."""

    H: dict
    spec: ConnectivitySpec
    seed: object = None

    def __getitem__(self, key):
        return self.H[key]

    @property
    def config(self):
        return self.spec.config


def sample_channels(spec, seed):
    """Draw ``H = gain * A^H Hw B`` for every link.

    `Hw` is drawn for every link in a fixed order, connected or not, so a
    given seed yields the same fading across connectivity changes.
    """
    cfg = spec.config
    rng = np.random.default_rng(seed)
    H = {}
    for g, k, n in cfg.links():
        nr, nt = cfg.Nr[g][k], cfg.Nt[n]
        hw = (rng.standard_normal((nr, nt)) + 1j * rng.standard_normal((nr, nt))) / np.sqrt(2)
        link = spec[g, k, n]
        if not link.connected:
            H[g, k, n] = np.zeros((nr, nt), dtype=complex)
            continue
        a = _correlation_root(link.rx_null)
        b = _correlation_root(link.tx_null)
        H[g, k, n] = link.gain * a.conj().T @ hw @ b
    return ChannelSet(H, spec, seed)


def save_channels(channels, path_or_file):
    """Write a channel set as CSV rows ``g,k,n,row,col,re,im``.

    The first line is a comment header with ``G K`` and the per-node antenna
    counts, so the tensor shape is explicit.
    """
    cfg = channels.config
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        fh.write(f"# G={cfg.G} K={cfg.K} Nt={','.join(map(str, cfg.Nt))} ")
        fh.write("Nr=" + ";".join(",".join(map(str, row)) for row in cfg.Nr) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["g", "k", "n", "row", "col", "re", "im"])
        for (g, k, n), h in sorted(channels.H.items()):
            for r in range(h.shape[0]):
                for c in range(h.shape[1]):
                    v = h[r, c]
                    writer.writerow([g, k, n, r, c, repr(float(v.real)), repr(float(v.imag))])
    finally:
        if own:
            fh.close()


def load_channels(path_or_file, spec=None):
    """Read a dump written by `save_channels` back into a dict or ChannelSet."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, newline="") if own else path_or_file
    try:
        text = fh.read()
    finally:
        if own:
            fh.close()
    lines = text.splitlines()
    header = lines[0].lstrip("# ").split()
    fields = dict(item.split("=", 1) for item in header)
    G, K = int(fields["G"]), int(fields["K"])
    Nt = [int(x) for x in fields["Nt"].split(",")]
    Nr = [[int(x) for x in row.split(",")] for row in fields["Nr"].split(";")]
    H = {
        (g, k, n): np.zeros((Nr[g][k], Nt[n]), dtype=complex)
        for g in range(G)
        for k in range(K)
        for n in range(G)
    }
    reader = csv.DictReader(io.StringIO("\n".join(lines[1:])))
    for row in reader:
        key = (int(row["g"]), int(row["k"]), int(row["n"]))
        H[key][int(row["row"]), int(row["col"])] = complex(float(row["re"]), float(row["im"]))
    if spec is None:
        return H
    return ChannelSet(H, spec)
