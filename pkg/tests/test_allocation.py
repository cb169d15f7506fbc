import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from cellular_ia.allocation import (
    NullSpaceLattice,
    assign_greedy_full,
    assign_greedy_partial,
    common_null_spaces,
    full_structure_plan,
    plan_subspaces,
    removal_score_full,
    removal_scores,
    structural_violations,
)
from cellular_ia.feasibility import build_instance_full, feasible_bruteforce
from cellular_ia.network import Geometric, NetworkConfig, Symmetric, build_connectivity
from cellular_ia.subspace import complement, span, zero_space


def test_three_cell_caps_one_is_feasible_at_once():
    cfg = NetworkConfig.uniform(3, 2, 5, 2, 1)
    a = assign_greedy_full(cfg)
    assert a.d.tolist() == [[1, 1]] * 3
    assert len(a.history) == 1 and a.total == 6


def test_three_cell_caps_two_descends_to_six():
    cfg = NetworkConfig.uniform(3, 2, 5, 2, 2)
    a = assign_greedy_full(cfg)
    assert a.d.tolist() == [[1, 1]] * 3
    assert [int(d.sum()) for d, _ in a.history] == [12, 11, 10, 9, 8, 7, 6]
    for d, ok in a.history:
        assert ok == feasible_bruteforce(build_instance_full(d, cfg))


def test_single_cell_keeps_caps():
    cfg = NetworkConfig.uniform(1, 3, 6, 2, 2)
    assert assign_greedy_full(cfg).d.tolist() == [[2, 2, 2]]
    a, _ = assign_greedy_partial(cfg)
    assert a.d.tolist() == [[2, 2, 2]]


def test_partial_matches_full_on_fully_connected():
    for caps in (1, 2):
        cfg = NetworkConfig.uniform(3, 2, 5, 2, caps)
        a, _ = assign_greedy_partial(cfg)
        assert np.array_equal(a.d, assign_greedy_full(cfg).d)


def test_symmetric_six_cell_assignment():
    cfg = NetworkConfig.uniform(6, 2, 4, 2, 2, Symmetric(1, 2, 1))
    a, plan = assign_greedy_partial(cfg)
    assert a.d.tolist() == [[1, 2]] * 6
    assert a.total == 18
    assert not structural_violations(a.d, plan, build_connectivity(cfg))


def test_removal_score_closed_form_matches_counts():
    cfg = NetworkConfig.uniform(3, 2, 5, 2, 2)
    d = np.array([[2, 1], [1, 2], [2, 2]])

    def counts(trial, dropped=None):
        inst = build_instance_full(trial, cfg)
        return int(inst.c.sum()), int(inst.v_t.sum() + inst.v_r.sum())

    scores = removal_scores(d, counts)
    for (g, k), s in scores.items():
        assert s == removal_score_full(d, cfg, g, k)


def test_lattice_closed_sets():
    e = np.eye(4)
    spaces = {
        "a": span(e[:, 0], e[:, 1]),
        "b": span(e[:, 1], e[:, 2]),
        "c": span(e[:, 1], e[:, 3]),
        "z": zero_space(4),
    }
    lat = NullSpaceLattice(spaces, {"a": 1, "b": 2, "c": 1, "z": 5}, 4)
    assert lat[frozenset("abc")].dim == 1
    assert frozenset("abc") in lat
    keys = set(lat)
    assert frozenset("abc") in keys and frozenset("ab") not in keys
    cands = lat.candidates()
    assert cands[0][0] == ("a", "b", "c") and cands[0][1] == 4
    assert all(space.dim > 0 for _, _, space in cands)
    assert [c[1] for c in cands] == sorted((c[1] for c in cands), reverse=True)


def test_common_null_spaces_skip_own_cell():
    cfg = NetworkConfig.uniform(4, 1, 4, 2, 1, Symmetric(1, 2, 1))
    spec = build_connectivity(cfg)
    lat = common_null_spaces(spec, 0)
    assert all(0 not in {m[0] for m in key} for key in lat)


def test_full_structure_plan_dims():
    cfg = NetworkConfig.uniform(3, 2, 5, 2, 1)
    plan, d = full_structure_plan(cfg, np.ones((3, 2), dtype=int))
    for u, (core, free, recv) in plan.dims().items():
        assert (core, free, recv) == (1, 3, 2)
    assert plan.flexible == frozenset(range(3))


def check_plan(spec, d, plan):
    cfg = spec.config
    for n in range(cfg.G):
        ms = [j for j in range(cfg.K) if d[n, j] > 0]
        for j in ms:
            core, free = plan.core[n, j], plan.free[n, j]
            assert core.dim == d[n, j]
            assert np.linalg.norm(core.basis.conj().T @ free.basis) < 1e-9
            allowed = complement(spec.tx_null(n, j, n))
            assert allowed.contains(core.basis)
            recv = plan.receive[n, j]
            assert recv.dim >= d[n, j]
            assert complement(spec.rx_null(n, j, n)).contains(recv.basis)
            for i in ms:
                if i != j:
                    other = plan.core[n, i].basis
                    assert np.linalg.norm(core.basis.conj().T @ other) < 1e-9
                    assert np.linalg.norm(other.conj().T @ free.basis) < 1e-9


@settings(max_examples=25, deadline=None)
@given(
    G=st.integers(2, 5),
    K=st.integers(1, 2),
    J=st.integers(1, 2),
    nt=st.sampled_from([4, 6]),
    nr=st.integers(2, 3),
    r1=st.integers(1, 3),
    r2=st.integers(1, 3),
)
def test_symmetric_assignment_and_plan_invariants(G, K, J, nt, nr, r1, r2):
    if not (r1 <= nr and r2 <= nr):
        return
    caps = max(1, min(nr, nt // K))
    cfg = NetworkConfig.uniform(G, K, nt, nr, caps, Symmetric(J, r1, r2))
    spec = build_connectivity(cfg)
    a, plan = assign_greedy_partial(cfg, spec)
    d = a.d
    assert (d >= 0).all() and (d <= np.array(cfg.d_max)).all()
    assert (d.sum(axis=1) <= np.array(cfg.Nt)).all()
    assert (d <= np.array(cfg.Nr)).all()
    for g, k in cfg.users():
        assert d[g, k] <= spec.rank(g, k, g)
    check_plan(spec, d, plan)
    assert a.history[-1][1] and not any(ok for _, ok in a.history[:-1])


@settings(max_examples=6, deadline=None)
@given(seed=st.integers(0, 200))
def test_geometric_plan_invariants(seed):
    cfg = NetworkConfig.uniform(4, 2, 8, 4, 2, Geometric(15, 3, seed=seed))
    spec = build_connectivity(cfg)
    a, plan = assign_greedy_partial(cfg, spec)
    check_plan(spec, a.d, plan)
    plan2, d2 = plan_subspaces(spec, a.d)
    assert np.array_equal(d2, a.d)
