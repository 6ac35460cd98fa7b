import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autopath.errors import CannotSatisfyDisjointness, DegenerateClasses, EmptyTruth, InsufficientClassMembers, SpecInfeasible
from autopath.evalbench import (
    SynthSpec,
    TypeSpec,
    auc,
    ground_truth,
    holdout_split,
    make_pairs,
    precision_recall_at_k,
    random_scorer,
    run_link_prediction,
    synth_network,
)
from autopath.hetnet import LabelSet
from autopath.planner import brute_force_counts

SMALL = SynthSpec(types=(TypeSpec("M", 40, 6, "binary", 0.1), TypeSpec("A", 30, 3), TypeSpec("U", 20, 3, class_keyed=False)),
                  noise_links=(("M", "U", 1),), seed=5)


def test_auc_hand_examples():
    assert auc({0: 0.9, 1: 0.8, 2: 0.1}, {0, 1}, [0, 1, 2]) == 1.0
    assert auc({}, {0, 1}, [0, 1, 2, 3]) == 0.5
    assert auc({0: 0.9, 1: 0.4, 2: 0.6, 3: 0.1}, {0, 1}, [0, 1, 2, 3]) == 0.75
    with pytest.raises(DegenerateClasses):
        auc({}, {0, 1}, [0, 1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=4, max_size=20), st.data())
def test_auc_negation_symmetry(vals, data):
    n = len(vals)
    truth = set(data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=n - 1, unique=True)))
    if len(truth) == n:
        return
    scores = {i: float(v) for i, v in enumerate(vals)}
    neg = {i: -v for i, v in scores.items()}
    assert auc(scores, truth, range(n)) + auc(neg, truth, range(n)) == pytest.approx(1.0)


def test_auc_capped_sampling_close():
    rng = np.random.default_rng(0)
    scores = {i: float(rng.random() + (0.3 if i < 300 else 0.0)) for i in range(1000)}
    exact = auc(scores, set(range(300)), range(1000))
    approx = auc(scores, set(range(300)), range(1000), cap=50_000, rng=np.random.default_rng(1))
    assert abs(exact - approx) < 0.01


def test_precision_recall():
    ranked = [5, 1, 7, 2, 9]
    truth = {1, 2, 3}
    assert precision_recall_at_k(ranked, truth, 1) == (0.0, 0.0)
    assert precision_recall_at_k(ranked, truth, 2) == (0.5, 1 / 3)
    recalls = [precision_recall_at_k(ranked, truth, k)[1] for k in range(1, 6)]
    assert recalls == sorted(recalls)
    p, r = precision_recall_at_k(ranked, truth, len(truth))
    assert p >= r
    with pytest.raises(EmptyTruth):
        precision_recall_at_k(ranked, set(), 1)
    with pytest.raises(ValueError):
        precision_recall_at_k(ranked, truth, 0)


def test_make_pairs_and_holdout():
    labels = LabelSet({i: i % 2 for i in range(20)}, ["a", "b"])
    pos, neg = make_pairs(labels, 30, np.random.default_rng(0))
    assert len(pos) == 30 and len(neg) == 30
    assert all(labels.labels[s] == labels.labels[t] for s, t in pos.pairs)
    assert all(labels.labels[s] != labels.labels[t] for s, t in neg.pairs)
    assert len({tuple(sorted(p)) for p in pos.pairs.tolist()}) == 30
    train, test = holdout_split(labels, pos, 0.1, np.random.default_rng(1))
    assert len(test) == 2
    assert not (train.nodes() & set(test.tolist()))
    with pytest.raises(InsufficientClassMembers):
        make_pairs(labels, 100, np.random.default_rng(0))
    with pytest.raises(CannotSatisfyDisjointness):
        tiny = LabelSet({0: 0, 1: 0}, ["a"])
        p, _ = make_pairs(LabelSet({0: 0, 1: 0, 2: 1}, ["a", "b"]), 1, np.random.default_rng(0))
        holdout_split(tiny, p, 0.5, np.random.default_rng(0))


def test_synth_deterministic_and_sized():
    a, la = synth_network(SMALL)
    b, lb = synth_network(SMALL)
    np.testing.assert_array_equal(a.edges(), b.edges())
    for k in range(a.n_types):
        np.testing.assert_array_equal(a.contents[k], b.contents[k])
    assert la.labels == lb.labels
    assert a.n_nodes == 90 and len(la) == 40
    c, _ = synth_network(SynthSpec(**{**SMALL.__dict__, "seed": 6}))
    assert not np.array_equal(a.edges(), c.edges())


def test_default_spec_statistics():
    net, labels = synth_network()
    assert net.n_nodes == 2000 and net.n_types == 3 and len(labels.class_names) == 2
    net2, _ = synth_network()
    np.testing.assert_array_equal(net.edges(), net2.edges())


def test_p_out_zero_only_same_class_paths():
    spec = SynthSpec(**{**SMALL.__dict__, "p_out": 0.0, "noise_links": ()})
    net, labels = synth_network(spec)
    M = labels.nodes()
    for s in M[:5]:
        for t in M:
            if t == s:
                continue
            found = brute_force_counts(net, [s], {int(s): {int(t)}}, 3)
            assert bool(found) <= (labels.labels[int(s)] == labels.labels[int(t)])


def test_spec_infeasible():
    with pytest.raises(SpecInfeasible):
        synth_network(SynthSpec(**{**SMALL.__dict__, "p_out": 0.5, "p_in": 0.1}))
    with pytest.raises(SpecInfeasible):
        synth_network(SynthSpec(**{**SMALL.__dict__, "templates": (("A", "M", "A"),)}))


def test_run_link_prediction_with_scorers():
    net, labels = synth_network(SMALL)
    test = labels.nodes()[:6]

    def oracle(s):
        return {v: 1.0 for v in ground_truth(labels, s)}

    rep = run_link_prediction(None, labels, test, k_grid=(1, 19, 30), scorer=oracle)
    assert rep.precision[1] == 1.0 and rep.auc == 1.0
    assert rep.recall == sorted(rep.recall)
    d = json.loads(rep.to_json())
    assert {"auc", "precision", "recall", "k_grid", "pair_auc"} <= set(d) and "seconds" not in d
    assert rep.curves_tsv().splitlines()[0] == "K\tprecision\trecall"
    rnd = run_link_prediction(None, labels, test, scorer=random_scorer(labels.nodes(), 0))
    assert 0.0 <= rnd.auc <= 1.0


def test_random_scorer_centered():
    net, labels = synth_network(SMALL)
    aucs = [run_link_prediction(None, labels, labels.nodes(), scorer=random_scorer(labels.nodes(), s)).auc
            for s in range(50)]
    assert abs(np.mean(aucs) - 0.5) <= 0.05
