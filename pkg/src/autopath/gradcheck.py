"""Finite-difference verification of every hand-written gradient."""

from __future__ import annotations

import json
import time
from typing import Callable

import numpy as np

from .agent import agent_backward, agent_forward, init_agent
from .embedder import init_embedder, j2_loss
from .hetnet import Network, NodeTypeMeta, PairSet
from .nn import (
    GaussianPolicyOutput,
    finite_diff_check,
    gaussian_log_prob,
    init_layer,
    mlp_backward,
    mlp_forward,
    softmax_cross_entropy,
)
from .trainer import Hyperparams, Model, batch_returns, j1_gradients, sample_trajectories

TOLERANCE = 1e-4
H = 1e-5


def _toy_network(rng: np.random.Generator) -> Network:
    types = [NodeTypeMeta(0, "P", 6, "binary"), NodeTypeMeta(1, "Q", 4, "continuous")]
    node_types = [0] * 6 + [1] * 5
    names = [f"n{i}" for i in range(11)]
    contents = [(rng.random((6, 6)) < 0.5).astype(float), np.abs(rng.normal(size=(5, 4)))]
    edges = [(p, q) for p in range(6) for q in range(6, 11) if (p + q) % 2 == 0]
    edges += [(q, p) for p, q in edges]
    return Network(types, node_types, names, contents, np.array(edges))


def _mlp(rng, corrupt):
    layers = [init_layer(5, 7, rng), init_layer(7, 3, rng)]
    x = rng.normal(size=(4, 5))
    R = rng.normal(size=(4, 3))
    masks = [rng.random((4, 5)) > 0.2, rng.random((4, 7)) > 0.2]

    def loss():
        out, _ = mlp_forward(layers, x, 0.2, "train", masks=masks, final_relu=False)
        return float((out * R).sum())

    out, cache = mlp_forward(layers, x, 0.2, "train", masks=masks, final_relu=False)
    grads, gx = mlp_backward(cache, R)
    params = [layers[0].W, layers[0].b, layers[1].W, layers[1].b, x]
    analytic = [grads[0][0], grads[0][1], grads[1][0], grads[1][1], gx]
    return loss, params, _maybe_corrupt(analytic, corrupt)


def _softmax(rng, corrupt):
    z = rng.normal(size=6)

    def loss():
        return softmax_cross_entropy(z, 2)[0]

    return loss, [z], _maybe_corrupt([softmax_cross_entropy(z, 2)[1]], corrupt)


def _gaussian(rng, corrupt):
    mu = rng.normal(size=5)
    var = rng.uniform(0.3, 2.0, size=5)
    a = rng.normal(size=5)

    def loss():
        return gaussian_log_prob(a, GaussianPolicyOutput(mu, var))[0]

    _, gm, gv = gaussian_log_prob(a, GaussianPolicyOutput(mu, var))
    return loss, [mu, var], _maybe_corrupt([gm, gv], corrupt)


def _j2(rng, corrupt, cotrain: bool):
    net = _toy_network(rng)
    params = init_embedder(net, 4, 6, rng)
    _jitter_biases(params.arrays(), rng)
    nodes = np.arange(net.n_nodes)
    X = np.abs(rng.normal(size=(net.n_nodes, 4))) if cotrain else None

    def run():
        return j2_loss(params, net, nodes, 0.1, X=X, dropout_rate=0.2, mode="train",
                       rng=np.random.default_rng(3))

    res = run()
    arrays = params.arrays(encoder=not cotrain)
    names = sorted(arrays)
    p = [arrays[n] for n in names]
    g = [res.grads[n] for n in names]
    if cotrain:
        p.append(X)
        g.append(res.x_grad)
    return (lambda: run().loss), p, _maybe_corrupt(g, corrupt)


def _heads(rng, corrupt):
    agent = init_agent(4, 6, rng)
    # larger output scale so the heads are exercised away from zero
    agent.actor_out.W *= 20.0
    agent.critic_out.W *= 20.0
    _jitter_biases(agent.arrays(), rng)
    S = rng.normal(size=(5, 4))
    Rm, Rv, Rval = rng.normal(size=(5, 4)), rng.normal(size=(5, 4)), rng.normal(size=5)

    def loss():
        f = agent_forward(agent, S)
        return float((f.policy.mean * Rm).sum() + (f.policy.variance * Rv).sum() + (f.value * Rval).sum())

    f = agent_forward(agent, S)
    grads, gs = agent_backward(f, Rm, Rv, Rval)
    arrays = agent.arrays()
    names = sorted(arrays)
    return loss, [arrays[n] for n in names] + [S], _maybe_corrupt([grads[n] for n in names] + [gs], corrupt)


def _policy_value(rng, corrupt):
    net = _toy_network(rng)
    hp = Hyperparams(m=4, kappa=4, H=6, workers=1)
    X = np.abs(rng.normal(size=(net.n_nodes, 4)))
    agent = init_agent(4, 6, rng)
    agent.actor_out.W *= 20.0
    agent.critic_out.W *= 20.0
    _jitter_biases(agent.arrays(), rng)
    pairs = PairSet(np.array([[0, 2], [1, 3], [2, 4], [3, 5]]))
    model = Model(net, X, agent, None, None, hp, pairs)
    batch = sample_trajectories(model, pairs, 6, 4, rng)
    res = j1_gradients(model, batch)

    k = hp.kappa
    N = batch.states.shape[0] * batch.states.shape[1]
    members = batch.members.reshape(N, -1)
    A = batch.actions.reshape(N, k)
    G = batch_returns(batch).reshape(N)
    # the advantage is a constant in the surrogate
    adv = G - agent_forward(agent, batch.states.reshape(N, k)).value

    def loss():
        S = np.where(members[:, :, None] >= 0, X[np.maximum(members, 0)], 0.0).sum(axis=1)
        f = agent_forward(agent, S)
        logp, _, _ = gaussian_log_prob(A, f.policy)
        return float(-np.mean(logp * adv) + np.mean((f.value - G) ** 2))

    arrays = agent.arrays()
    names = sorted(arrays)
    x_full = np.zeros_like(X)
    x_full[res.x_rows] = res.x_grad
    return loss, [arrays[n] for n in names] + [X], _maybe_corrupt([res.grads[n] for n in names] + [x_full], corrupt)


def _jitter_biases(arrays: dict, rng) -> None:
    # zero biases put pre-activations of dead inputs exactly on the ReLU kink
    for name, arr in arrays.items():
        if name.endswith(".b"):
            arr += rng.normal(0.0, 0.1, size=arr.shape)


def _maybe_corrupt(analytic, corrupt: bool):
    if corrupt:
        return [g * 1.1 + 1e-3 for g in analytic]
    return analytic


COMPONENTS: dict[str, Callable] = {
    "mlp": _mlp,
    "softmax_cross_entropy": _softmax,
    "gaussian_log_prob": _gaussian,
    "j2_pretrain": lambda rng, c: _j2(rng, c, cotrain=False),
    "j2_cotrain": lambda rng, c: _j2(rng, c, cotrain=True),
    "agent_heads": _heads,
    "policy_value": _policy_value,
}


def run_gradcheck(seed: int = 0, corrupt: str | None = None, h: float = H, tol: float = TOLERANCE) -> list:
    """One result dict per component: name, max_rel_error, passed, seconds."""
    if corrupt is not None and corrupt not in COMPONENTS:
        raise ValueError(f"unknown component {corrupt!r}")
    results = []
    for i, (name, build) in enumerate(COMPONENTS.items()):
        t0 = time.perf_counter()
        rng = np.random.default_rng([seed, 100 + i])
        loss, params, analytic = build(rng, name == corrupt)
        err = finite_diff_check(loss, params, analytic, h=h, rng=np.random.default_rng([seed, 200 + i]))
        results.append({"component": name, "max_rel_error": err, "passed": bool(err < tol),
                        "seconds": round(time.perf_counter() - t0, 3)})
    return results


def to_json_lines(results) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in results)
