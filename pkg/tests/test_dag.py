import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from galmem._rng import make_rng
from galmem.dag import (PathTrace, RelationRecord, RelationStore, cr2_by_depth,
                        cr2_by_depth_from_cr1, decay_fit, effective_branching,
                        exhaustive_paths, expected_collisions, inject_abstentions, load_edges,
                        parse_edges, simulate_replay, synthetic_dag, traverse)
from galmem.errors import DegenerateFit, NotFound
from galmem.memory import BlockMemory, MemoryConfig, RRMode, VoteResult


def store(n=10, m=10, rr=RRMode.RESCUE, q=64):
    return RelationStore(BlockMemory(MemoryConfig.unified(n, m, q, rr_mode=rr)))


def vote(cr1_votes, n=10, winner=1):
    return VoteResult(winner, cr1_votes, n - cr1_votes, n)


def chain(st_, ids, label=0):
    edges = [RelationRecord(a, label, b) for a, b in zip(ids, ids[1:])]
    return edges, load_edges(st_, edges)


def test_load_counts():
    s = store()
    assert load_edges(s, []).writes == 0
    _, rep = chain(s, [1, 2, 3])
    assert rep.writes == 2 and rep.collisions == 0


def test_birthday_collisions():
    s = store(n=16, m=16, rr=RRMode.DONT_CARE, q=32)
    _, edges = synthetic_dag(10, 4, rng_seed=7, max_edges=10_000)
    assert len(edges) == 10_000
    rep = load_edges(s, edges)
    mu, var = expected_collisions(10_000, 1 << 16)
    assert abs(rep.collisions - 16 * mu) <= 3 * math.sqrt(16 * var)
    assert rep.poisoned <= rep.collisions


def test_rescue_chain():
    s = store()
    chain(s, [10, 20, 30, 40])
    r = traverse(s, 10, [0, 0, 0], fs=4)
    assert len(r) == 1 and r[0].nodes == (10, 20, 30, 40) and r[0].cr2 == 1.0
    assert effective_branching(r) == 1.0


def test_cr2_product_through_memory():
    s = store(rr=RRMode.DONT_CARE)
    edges, _ = chain(s, [1, 2, 3, 4])
    s.memory.inject_abstention(s.key(2, 0), [0])
    s.memory.inject_abstention(s.key(3, 0), [5])
    t = traverse(s, 1, [0, 0, 0], fs=1)[0]
    assert t.cr1s == [1.0, 0.9, 0.9]
    assert t.cr2 == pytest.approx(0.81, abs=1e-15)


def test_trace_product_exact():
    t = PathTrace(0)
    for v in (10, 9, 9):
        t = t.extend(0, vote(v))
    assert t.cr2 == 1.0 * 0.9 * 0.9


@given(st.lists(st.integers(1, 10), min_size=1, max_size=12))
def test_cr2_multiplicative_and_contracting(votes):
    t = PathTrace(0)
    for v in votes:
        prev = t.cr2
        t = t.extend(0, vote(v))
        assert t.cr2 <= prev
        if v < 10:
            assert t.cr2 < prev
    assert t.cr2 == math.prod(v / 10 for v in votes)


def branching_store(seed=3, rate=0.6):
    s = store(rr=RRMode.DONT_CARE)
    roots, edges = synthetic_dag(2, 3, rng_seed=seed)
    load_edges(s, edges)
    inject_abstentions(s, edges, rate=rate, rng_seed=seed)
    return s, roots[0]


@pytest.mark.parametrize("seed", range(5))
def test_beam_matches_exhaustive(seed):
    s, root = branching_store(seed)
    steps = [[0, 1]] * 3
    beam = traverse(s, root, steps, fs=8)
    ref = exhaustive_paths(s, root, steps)
    assert len(ref) == 8
    assert [(t.nodes, t.cr2) for t in beam] == [(t.nodes, t.cr2) for t in ref]


@pytest.mark.parametrize("fs", [1, 2, 3])
def test_frontier_bounded(fs):
    s, root = branching_store()
    r = traverse(s, root, [[0, 1]] * 3, fs=fs)
    assert 1 <= len(r) <= fs
    assert [t.cr2 for t in r] == sorted((t.cr2 for t in r), reverse=True)


def test_frontier_empties():
    s = store()
    chain(s, [1, 2])
    with pytest.raises(NotFound):
        traverse(s, 1, [0, 0], fs=2)
    with pytest.raises(ValueError):
        traverse(s, 1, [0], fs=0)


def test_partial_paths_reported():
    s = store()
    load_edges(s, [RelationRecord(1, 0, 2), RelationRecord(1, 1, 3), RelationRecord(2, 0, 4)])
    r = traverse(s, 1, [[0, 1], [0]], fs=4)
    assert [t.nodes for t in r] == [(1, 2, 4)]
    assert [t.nodes for t in r.partial] == [(1, 3)]


def traces_with(cr2s):
    out = []
    for c in cr2s:
        out.append(PathTrace(0, ()).extend(0, vote(10)).extend(0, vote(10))
                   .extend(0, VoteResult(1, c, 10 - c, 10)))
    return out


def test_effective_branching_definitions():
    assert effective_branching(traces_with([10] * 8)) == 1.0
    full = effective_branching(traces_with([3, 4, 5, 6, 7, 8, 9, 10]))
    assert full == pytest.approx(2.0)
    two = effective_branching(traces_with([9, 9, 9, 9, 10, 10, 10, 10]))
    assert two == pytest.approx(0.25 * full)


def test_decay_constant_p():
    fit = decay_fit({n: [0.9**n] for n in range(1, 7)})
    assert abs(fit.slope - math.log(0.9)) < 1e-12
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.best_model == "multiplicative"
    assert fit.residuals["multiplicative"] < fit.residuals["additive"]
    assert fit.residuals["multiplicative"] < fit.residuals["power"]


def test_decay_rescue_slope_zero():
    fit = decay_fit({n: [1.0, 1.0] for n in range(1, 5)})
    assert fit.slope == 0.0 and fit.r_squared == 1.0


def test_decay_degenerate():
    with pytest.raises(DegenerateFit):
        decay_fit({1: [0.9], 2: [0.81]})
    with pytest.raises(DegenerateFit):
        decay_fit({1: [0.9], 2: [0.0], 3: [0.0]})


def test_decay_heterogeneous_geometric_law():
    rng = make_rng(12)
    T, depth = 5000, 6
    levels = np.array([0.7, 0.8, 0.9, 1.0])
    cr1 = levels[rng.integers(0, 4, size=(T, depth))]
    fit = decay_fit(cr2_by_depth_from_cr1(cr1), aggregate="geometric")
    logs = np.log(levels)
    mu, sigma2 = logs.mean(), logs.var()
    n = np.arange(1, depth + 1)
    c = (n - n.mean()) / ((n - n.mean()) ** 2).sum()
    w = np.cumsum(c[::-1])[::-1]
    sd = math.sqrt(sigma2 / T * (w**2).sum())
    assert abs(fit.slope - mu) <= 3 * sd


def test_cr2_by_depth_groups_prefixes():
    t = PathTrace(0).extend(0, vote(9)).extend(0, vote(8))
    assert cr2_by_depth([t]) == {1: [0.9], 2: [0.9 * 0.8]}
    arr = cr2_by_depth_from_cr1(np.array([[0.9, 0.8]]))
    assert arr[2][0] == 0.9 * 0.8


def test_conditional_independence_simulation():
    p = [0.9, 0.8, 0.95, 0.7]
    trials = 20_000
    rate = simulate_replay(p, trials, rng_seed=5)
    q = math.prod(p)
    assert abs(rate - q) <= 3 * math.sqrt(q * (1 - q) / trials)


def test_inject_exact_per_edge():
    s = store(m=16, rr=RRMode.DONT_CARE)
    roots, edges = synthetic_dag(2, 4, rng_seed=1)
    load_edges(s, edges)
    inject_abstentions(s, edges, per_edge=1, rng_seed=2)
    for e in edges:
        assert s.read(e.subject, e.relation).votes_for_winner == 9
    r = traverse(s, roots[0], [[0, 1]] * 4, fs=16)
    assert all(t.cr2 == pytest.approx(0.9**4, rel=1e-15) for t in r)


def test_inject_refuses_when_short():
    s = store(rr=RRMode.DONT_CARE)
    edges, _ = chain(s, [1, 2])
    s.memory.inject_abstention(s.key(1, 0), [0, 1])
    with pytest.raises(ValueError):
        inject_abstentions(s, edges, per_edge=1)


def test_synthetic_dag_shape():
    roots, edges = synthetic_dag(2, 3, rng_seed=0)
    assert len(roots) == 1 and len(edges) == 14
    assert len({e.object for e in edges}) == 14
    assert synthetic_dag(2, 3, rng_seed=0) == (roots, edges)


def test_parse_edges():
    text = "# header\n1\t2\t3\n\n4\t5\t6  # note\n"
    assert parse_edges(text.splitlines()) == [RelationRecord(1, 2, 3), RelationRecord(4, 5, 6)]
    with pytest.raises(ValueError):
        parse_edges(["1\t2"])
    with pytest.raises(ValueError):
        parse_edges(["a\tb\tc"])
