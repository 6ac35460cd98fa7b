import numpy as np
import pytest

from autopath.agent import zero_agent
from autopath.errors import PathLimitExceeded
from autopath.planner import (
    MetaPathStat,
    brute_force_metapaths,
    brute_force_counts,
    extract_metapaths,
    metapath_tsv,
    rank_from_scores,
    rank_nodes,
    rollout,
    similarity_scores,
)

from conftest import make_model, make_network


@pytest.fixture
def forced():
    # s(0, type S) -> v(1, type V) -> t(2, type S); mean 0 and far-away start force s, v, t
    net = make_network(["S", "V"], [0, 1, 0, 0], [(0, 1), (1, 2)])
    X = np.array([[100.0, 100.0], [0.0, 0.0], [0.0, 0.0], [5.0, 5.0]])
    model = make_model(net, X=X, kappa=2)
    model.agent = zero_agent(2, 8)
    model.agent.actor_out.b[2:] = -30.0  # variance at the floor
    return model


def test_rollout_empty_and_forced(forced):
    assert rollout(forced, 0, 0, np.random.default_rng(0)) == []
    segs = rollout(forced, 0, 2, np.random.default_rng(0))
    assert len(segs) == 1 and segs[0].nodes == (0, 1, 2) and segs[0].hit


def test_rollout_reproducible(forced):
    a = rollout(forced, 0, 7, np.random.default_rng(3))
    b = rollout(forced, 0, 7, np.random.default_rng(3))
    assert a == b


def test_scores_forced(forced):
    sc = similarity_scores(forced, 0, N=20)
    assert sc[2] == 1.0 and 0 not in sc and 3 not in sc
    assert all(0.0 <= v <= 1.0 for v in sc.values())
    with pytest.raises(ValueError):
        similarity_scores(forced, 0, N=0)


def test_scores_n1_are_binary(forced):
    sc = similarity_scores(forced, 0, N=1)
    assert set(sc.values()) <= {0.0, 1.0}


def test_rank_order():
    assert rank_from_scores({1: 0.2, 2: 0.8}, [1, 2]) == [(2, 0.8), (1, 0.2)]
    assert [v for v, _ in rank_from_scores({}, [5, 3, 4])] == [3, 4, 5]
    assert [v for v, _ in rank_from_scores({4: 0.5, 3: 0.5, 9: 0.1}, [9, 4, 3, 1])] == [3, 4, 9, 1]


def test_rank_nodes_consistent(forced):
    ranked = rank_nodes(forced, 0, N=10)
    assert [v for v, _ in ranked] == [2, 3]
    with pytest.raises(ValueError):
        rank_nodes(forced, 0, N=10, candidate_type=7)


def test_extract_metapaths_forced(forced):
    stats = extract_metapaths(forced, [0], N=50)
    assert len(stats) == 1
    assert stats[0].label(forced.net) == "S-V-S" and stats[0].frequency == 1.0
    assert stats[0].describe(forced.net) == "S -- V -- S (1.000)"


def test_extract_metapaths_none_successful(forced):
    with pytest.warns(UserWarning):
        assert extract_metapaths(forced, [3], N=5) == []


def test_frequencies_sum_to_one():
    rng = np.random.default_rng(0)
    edges = [(i, j) for i in range(10) for j in range(10) if i != j and rng.random() < 0.3]
    net = make_network(["P", "Q"], [i % 2 for i in range(10)], edges, rng=rng)
    model = make_model(net, kappa=3)
    stats = extract_metapaths(model, [0, 2, 4], N=500, rng=np.random.default_rng(1))
    assert sum(s.frequency for s in stats) == pytest.approx(1.0)
    assert all(s.type_sequence[0] == 0 and s.type_sequence[-1] == 0 for s in stats)


def test_yelp_six_metapaths(yelp_toy):
    stats = brute_force_metapaths(yelp_toy, 0, {1}, L_max=4)
    labels = {s.label(yelp_toy) for s in stats}
    assert labels == {"B-U-B", "B-L-B", "B-C-B", "B-S-B", "B-U-U-B", "B-C-C-B"}
    assert len(brute_force_metapaths(yelp_toy, 0, {1}, L_max=3)) == 4


def test_brute_force_trivial_cases():
    disc = make_network(["X"], [0, 0, 0], [(0, 1)])
    assert brute_force_metapaths(disc, 0, {2}, 4) == []
    line = make_network(["S", "V"], [0, 1, 0], [(0, 1), (1, 2)])
    stats = brute_force_metapaths(line, 0, {2}, 4)
    assert [(s.type_sequence, s.raw_count) for s in stats] == [((0, 1, 0), 1)]
    with pytest.raises(ValueError):
        brute_force_metapaths(line, 0, {2}, 7)


def test_brute_force_limit(yelp_toy):
    with pytest.raises(PathLimitExceeded):
        brute_force_counts(yelp_toy, [0], {0: {1}}, 4, limit=5)


def test_brute_force_relabel_invariant(yelp_toy):
    perm = np.random.default_rng(0).permutation(yelp_toy.n_nodes)
    inv = np.argsort(perm)
    edges = [(int(inv[s]), int(inv[t])) for s, t in yelp_toy.edges()]
    node_types = [int(yelp_toy.node_types[perm[i]]) for i in range(yelp_toy.n_nodes)]
    relabeled = make_network([t.name for t in yelp_toy.types], node_types, edges)
    a = brute_force_metapaths(yelp_toy, 0, {1}, 4)
    b = brute_force_metapaths(relabeled, int(inv[0]), {int(inv[1])}, 4)
    assert [(s.type_sequence, s.raw_count) for s in a] == [(s.type_sequence, s.raw_count) for s in b]


def test_metapath_tsv(forced):
    stats = [MetaPathStat((0, 1, 0), 0.75, 3), MetaPathStat((0, 0), 0.25, 1)]
    text = metapath_tsv(stats, forced.net)
    assert text.splitlines() == ["type_sequence\tfrequency\tcount", "S-V-S\t0.750000\t3", "S-S\t0.250000\t1"]
    text = metapath_tsv(stats, forced.net, oracle=[MetaPathStat((0, 1, 0), 1.0, 9)])
    assert text.splitlines()[0].endswith("oracle_frequency\toracle_count")
    assert text.splitlines()[2].endswith("0.000000\t0")
