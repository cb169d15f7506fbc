import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cellular_ia.evaluation import (
    DoFBoundQuery,
    ThroughputSample,
    baseline_bl4,
    baseline_bl5,
    design_scheme,
    dof_bound,
    dof_bound_enumerate,
    dof_slope,
    evaluate_design,
    stage_one,
    sum_throughput,
)
from cellular_ia.network import ChannelSet, NetworkConfig, Symmetric, build_connectivity, sample_channels
from cellular_ia.transceiver import TransceiverOptions, TransceiverSet


def single_link(h):
    cfg = NetworkConfig.uniform(1, 1, 1, 1, 1)
    spec = build_connectivity(cfg)
    ch = ChannelSet({(0, 0, 0): np.array([[h]], dtype=complex)}, spec)
    ts = TransceiverSet(np.ones((1, 1), dtype=int), {(0, 0): np.ones((1, 1), complex)},
                        {(0, 0): np.ones((1, 1), complex)})
    return ch, ts


def test_single_stream_one_bit():
    ch, ts = single_link(1.0)
    s = sum_throughput(ch, ts, 1.0)
    assert s.sum_rate_bits == pytest.approx(1.0)
    assert s.per_stream_sinr == [pytest.approx(1.0)]
    assert s.residual_leakage == 0


def test_interference_free_slope_is_one():
    ch, ts = single_link(0.3 + 0.4j)
    lo, hi = sum_throughput(ch, ts, 1e4), sum_throughput(ch, ts, 1e6)
    assert dof_slope(lo, hi) == pytest.approx(1.0, abs=0.05)


def test_slope_needs_high_snr():
    a, b = ThroughputSample(20.0, 1.0, [], 0.0), ThroughputSample(40.0, 2.0, [], 0.0)
    with pytest.raises(ValueError):
        dof_slope(a, b)
    with pytest.raises(ValueError):
        dof_slope(b, b)


def test_two_cell_interference_saturates():
    # Two single-antenna cells with unit cross links: SINR tends to 1.
    cfg = NetworkConfig.uniform(2, 1, 1, 1, 1)
    spec = build_connectivity(cfg)
    H = {key: np.ones((1, 1), complex) for key in cfg.links()}
    ch = ChannelSet(H, spec)
    one = {(g, 0): np.ones((1, 1), complex) for g in range(2)}
    ts = TransceiverSet(np.ones((2, 1), dtype=int), dict(one), dict(one))
    rates = [sum_throughput(ch, ts, p).sum_rate_bits for p in (1e3, 1e4, 1e5)]
    assert rates[-1] < 2.0 + 1e-3
    assert rates[2] - rates[1] < 1e-3


def test_single_ms_full_reach_case():
    assert dof_bound(DoFBoundQuery(3, 1, 2, 2, 2, 2, 2)) == 1


def test_symmetric_six_cell_bound():
    q = DoFBoundQuery(6, 2, 1, 4, 2, 2, 1)
    assert dof_bound(q) == 1
    assert dof_bound_enumerate(q) == 1


def test_zero_rank_gives_zero():
    assert dof_bound(DoFBoundQuery(4, 1, 1, 4, 2, 0, 1)) == 0
    assert dof_bound_enumerate(DoFBoundQuery(4, 1, 1, 4, 2, 0, 1)) == 0


def test_premises_checked():
    with pytest.raises(ValueError):
        dof_bound(DoFBoundQuery(3, 1, 1, 2, 3, 2, 2))
    with pytest.raises(ValueError):
        dof_bound(DoFBoundQuery(3, 3, 1, 4, 2, 2, 2, d_f=2))


def full_reach_triples():
    out = []
    for G in range(2, 8):
        for nr in range(1, 5):
            for nt in range(nr, 9):
                if nt <= G * nr:
                    out.append((G, nt, nr))
    return out


def test_full_reach_triples_reduce():
    triples = full_reach_triples()
    assert len(triples) >= 20
    for G, nt, nr in triples:
        J = (G + 1) // 2
        assert dof_bound(DoFBoundQuery(G, 1, J, nt, nr, nr, nr)) == (nt + nr) // (G + 1)


@settings(max_examples=200, deadline=None)
@given(
    G=st.integers(1, 12),
    K=st.integers(1, 4),
    J=st.integers(0, 3),
    nt=st.integers(1, 8),
    nr=st.integers(1, 4),
    r1=st.integers(0, 4),
    r2=st.integers(0, 4),
)
def test_bound_never_exceeds_rank_or_enumeration_range(G, K, J, nt, nr, r1, r2):
    q = DoFBoundQuery(G, K, J, nt, nr, r1, r2)
    try:
        q.validate()
    except ValueError:
        return
    if G == 1 or J == 0:
        return
    assert 0 <= dof_bound(q) <= r1
    assert 0 <= dof_bound_enumerate(q) <= r1


FULL3 = NetworkConfig.uniform(3, 2, 5, 2, 1)


def slope_of(design, ch):
    lo, hi = evaluate_design(design, ch, 1e4), evaluate_design(design, ch, 1e6)
    return dof_slope(lo, hi)


@pytest.mark.parametrize("seed", [2, 3])
def test_three_cell_proposed_and_baselines(seed):
    spec = build_connectivity(FULL3)
    stage = stage_one(FULL3, spec)
    ch = sample_channels(spec, seed)
    opts = TransceiverOptions(seed=seed, max_iters=2000)
    prop = design_scheme("proposed", ch, stage, seed, opts)
    bl1 = design_scheme("bl1", ch, stage, seed, opts)
    assert prop.total_streams == bl1.total_streams == 6
    assert slope_of(prop, ch) == pytest.approx(6.0, abs=0.3)
    assert abs(slope_of(prop, ch) - slope_of(bl1, ch)) < 0.1
    assert slope_of(baseline_bl4(ch), ch) == pytest.approx(2.0, abs=0.3)
    assert slope_of(baseline_bl5(ch, seed=seed), ch) < 0.5


def test_bl4_schedule_and_zero_forcing():
    ch = sample_channels(build_connectivity(FULL3), 4)
    des = baseline_bl4(ch)
    assert [w for _, w in des.schedule] == [pytest.approx(1 / 3)] * 3
    for n in range(3):
        for k in range(2):
            for j in range(2):
                if j != k:
                    m = des.ts.U[n, k].conj().T @ ch[n, k, n] @ des.ts.V[n, j]
                    assert np.linalg.norm(m) < 1e-9


def test_bl5_is_seeded():
    ch = sample_channels(build_connectivity(FULL3), 1)
    a, b = baseline_bl5(ch, seed=3), baseline_bl5(ch, seed=3)
    for u in a.ts.V:
        assert np.array_equal(a.ts.V[u], b.ts.V[u])


def test_symmetric_scenario_slope_matches_streams():
    cfg = NetworkConfig.uniform(6, 2, 4, 2, 2, Symmetric(1, 2, 1))
    spec = build_connectivity(cfg)
    stage = stage_one(cfg, spec)
    ch = sample_channels(spec, 0)
    des = design_scheme("proposed", ch, stage, 0, TransceiverOptions(seed=0, max_iters=500))
    assert des.total_streams == 18
    assert slope_of(des, ch) == pytest.approx(18, rel=0.05)


def test_unknown_scheme():
    ch = sample_channels(build_connectivity(FULL3), 0)
    with pytest.raises(ValueError):
        design_scheme("bl3", ch)
