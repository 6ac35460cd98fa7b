import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autopath.agent import (
    EpisodeState,
    actor_critic_forward,
    agent_backward,
    agent_forward,
    env_step,
    init_agent,
    resolve_batch,
    resolve_node,
    sample_action,
    state_vector,
    zero_agent,
)
from autopath.errors import EmptyCandidates, IllegalMove, ShapeMismatch
from autopath.nn import EPS_SIGMA, DenseLayer, GaussianPolicyOutput, finite_diff_check

from conftest import make_network


def test_state_vector():
    X = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
    np.testing.assert_array_equal(state_vector([0], X), X[0])
    np.testing.assert_array_equal(state_vector([0, 1], X), [1.0, 1.0])
    np.testing.assert_array_equal(state_vector([2, 0, 1], X), state_vector([1, 2, 0], X))


def test_zero_weights_forward():
    out, v = actor_critic_forward(zero_agent(3, 4), np.ones(3))
    np.testing.assert_array_equal(out.mean, 0.0)
    np.testing.assert_allclose(out.variance, np.log(2) + EPS_SIGMA)
    assert v == 0.0
    with pytest.raises(ShapeMismatch):
        actor_critic_forward(zero_agent(3, 4), np.ones(2))


def test_mean_head_linear_when_relu_bypassed():
    k, H = 2, 2
    p = zero_agent(k, H)
    p.shared = DenseLayer(np.eye(2), np.zeros(2))
    p.actor_hidden = DenseLayer(np.eye(2), np.zeros(2))
    p.actor_out = DenseLayer(np.vstack([np.eye(2), np.zeros((2, 2))]), np.zeros(4))
    s = np.array([0.5, 1.5])
    m1 = actor_critic_forward(p, s)[0].mean
    m2 = actor_critic_forward(p, 2 * s)[0].mean
    np.testing.assert_allclose(m2, 2 * m1)


def test_value_head_gradcheck():
    rng = np.random.default_rng(4)
    p = init_agent(3, 5, rng)
    for name, arr in p.arrays().items():
        arr += rng.normal(0, 0.3, arr.shape)
    S = rng.normal(size=(4, 3))

    def loss():
        return float(agent_forward(p, S).value.sum())

    f = agent_forward(p, S)
    grads, _ = agent_backward(f, np.zeros((4, 3)), np.zeros((4, 3)), np.ones(4))
    names = sorted(grads)
    arrays = p.arrays()
    assert finite_diff_check(loss, [arrays[n] for n in names], [grads[n] for n in names]) < 1e-4


def test_sample_action_tiny_variance():
    out = GaussianPolicyOutput(np.array([1.0, -1.0]), np.full(2, EPS_SIGMA))
    a, _ = sample_action(out, np.random.default_rng(0))
    assert np.all(np.abs(a - out.mean) < 6 * np.sqrt(EPS_SIGMA))


def test_sample_action_reproducible():
    out = GaussianPolicyOutput(np.zeros(3), np.ones(3))
    a1, l1 = sample_action(out, np.random.default_rng(9))
    a2, l2 = sample_action(out, np.random.default_rng(9))
    np.testing.assert_array_equal(a1, a2)
    assert l1 == l2


def test_resolve_examples():
    X = np.zeros((10, 2))
    X[3], X[4], X[9] = [1, 1], [1, 0], [-1, 0]
    assert resolve_node(X[3], [3, 4, 9], X) == 3
    assert resolve_node(np.zeros(2), [9, 4], X) == 4  # equidistant: smaller id
    with pytest.raises(EmptyCandidates):
        resolve_node(np.zeros(2), [], X)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_resolve_matches_scan(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(12, 3))
    cands = sorted(rng.choice(12, size=5, replace=False).tolist())
    a = rng.normal(size=3)
    best = min(cands, key=lambda c: (float(np.sum((X[c] - a) ** 2)), c))
    assert resolve_node(a, cands, X) == best


def test_resolve_batch_matches_single():
    rng = np.random.default_rng(1)
    edges = [(i, j) for i in range(8) for j in range(8) if i != j and rng.random() < 0.4]
    net = make_network(["X"], [0] * 8, edges)
    X = rng.normal(size=(8, 3))
    X[5] = X[6]  # exact tie
    cur = rng.integers(0, 8, size=50)
    start = rng.integers(0, 8, size=50)
    a = rng.normal(size=(50, 3))
    got = resolve_batch(a, cur, start, net, X, chunk=7)
    for i in range(50):
        cands = sorted(set(net.out_adjacency(cur[i]).tolist()) | {int(start[i])})
        assert got[i] == resolve_node(a[i], cands, X)


def test_env_step_rules(line_net):
    X = np.eye(3)
    st0 = EpisodeState.begin(0, X)
    r, st1 = env_step(st0, 1, {2}, X, line_net)
    assert r == 0 and st1.visited == [0, 1]
    np.testing.assert_array_equal(st1.vector, X[0] + X[1])
    r, st2 = env_step(st1, 2, {2}, X, line_net)
    assert r == 1 and st2.visited == [0] and st2.current_node == 0
    r, st3 = env_step(st1, 0, {2}, X, line_net)
    assert r == 0 and st3.visited == [0]
    with pytest.raises(IllegalMove):
        env_step(st0, 2, {2}, X, line_net)


def test_state_invariant_along_walk():
    rng = np.random.default_rng(0)
    edges = [(i, j) for i in range(6) for j in range(6) if i != j]
    net = make_network(["X"], [0] * 6, edges)
    X = rng.normal(size=(6, 2))
    st_ = EpisodeState.begin(0, X)
    total = 0
    for _ in range(30):
        v = int(rng.choice(net.out_adjacency(st_.current_node).tolist() + [0]))
        r, st_ = env_step(st_, v, {4}, X, net)
        total += r
        np.testing.assert_allclose(st_.vector, X[st_.visited].sum(axis=0))
        assert st_.visited[0] == 0
    assert total <= 30
