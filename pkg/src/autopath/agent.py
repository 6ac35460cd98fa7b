"""Continuous-action actor-critic acting in node-embedding space."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCandidates, IllegalMove, ShapeMismatch
from .hetnet import Network, candidate_actions
from .nn import (
    EPS_SIGMA,
    DenseLayer,
    GaussianPolicyOutput,
    gaussian_log_prob,
    init_layer,
    mlp_backward,
    mlp_forward,
    sigmoid,
    softplus,
)

LAYER_NAMES = ("shared", "actor_hidden", "actor_out", "critic_hidden", "critic_out")


@dataclass
class AgentParams:
    shared: DenseLayer  # kappa -> H
    actor_hidden: DenseLayer  # H -> H
    actor_out: DenseLayer  # H -> 2 kappa (raw mean, raw variance)
    critic_hidden: DenseLayer  # H -> H
    critic_out: DenseLayer  # H -> 1

    @property
    def kappa(self) -> int:
        return self.shared.in_dim

    def arrays(self) -> dict:
        out = {}
        for name in LAYER_NAMES:
            layer = getattr(self, name)
            out[f"{name}.W"], out[f"{name}.b"] = layer.W, layer.b
        return out

    def copy(self) -> "AgentParams":
        return AgentParams(*(getattr(self, n).copy() for n in LAYER_NAMES))


def init_agent(kappa: int, hidden: int, rng: np.random.Generator) -> AgentParams:
    shared = init_layer(kappa, hidden, rng)
    actor_hidden = init_layer(hidden, hidden, rng)
    actor_out = init_layer(hidden, 2 * kappa, rng, scale=0.1 / np.sqrt(hidden))
    critic_hidden = init_layer(hidden, hidden, rng)
    critic_out = init_layer(hidden, 1, rng, scale=0.1 / np.sqrt(hidden))
    return AgentParams(shared, actor_hidden, actor_out, critic_hidden, critic_out)


def zero_agent(kappa: int, hidden: int) -> AgentParams:
    def z(i, o):
        return DenseLayer(np.zeros((o, i)), np.zeros(o))
    return AgentParams(z(kappa, hidden), z(hidden, hidden), z(hidden, 2 * kappa), z(hidden, hidden), z(hidden, 1))


@dataclass
class AgentForward:
    policy: GaussianPolicyOutput
    value: np.ndarray
    raw_var: np.ndarray
    caches: tuple
    squeeze: bool


def agent_forward(params: AgentParams, states: np.ndarray, eps_sigma: float = EPS_SIGMA) -> AgentForward:
    s = np.asarray(states, dtype=np.float64)
    squeeze = s.ndim == 1
    if squeeze:
        s = s[None, :]
    if s.shape[1] != params.kappa:
        raise ShapeMismatch(f"state has dim {s.shape[1]}, expected {params.kappa}")
    h0, c_shared = mlp_forward([params.shared], s)
    out, c_actor = mlp_forward([params.actor_hidden, params.actor_out], h0, final_relu=False)
    val, c_critic = mlp_forward([params.critic_hidden, params.critic_out], h0, final_relu=False)
    k = params.kappa
    mean, raw = out[:, :k], out[:, k:]
    var = softplus(raw) + eps_sigma
    return AgentForward(GaussianPolicyOutput(mean, var), val[:, 0], raw, (c_shared, c_actor, c_critic), squeeze)


def agent_backward(fwd: AgentForward, g_mean, g_var, g_value):
    """Gradients of a loss given its partials wrt mean, variance and value (all batched).

    Returns (name -> grad, grad wrt the state input)."""
    c_shared, c_actor, c_critic = fwd.caches
    g_raw = np.asarray(g_var) * sigmoid(fwd.raw_var)
    g_out = np.concatenate([np.atleast_2d(g_mean), np.atleast_2d(g_raw)], axis=1)
    (g_ah, g_ao), g_h_actor = mlp_backward(c_actor, g_out)
    (g_ch, g_co), g_h_critic = mlp_backward(c_critic, np.reshape(g_value, (-1, 1)))
    (g_sh,), g_state = mlp_backward(c_shared, g_h_actor + g_h_critic)
    grads = {}
    for name, (gW, gb) in zip(LAYER_NAMES, (g_sh, g_ah, g_ao, g_ch, g_co)):
        grads[f"{name}.W"], grads[f"{name}.b"] = gW, gb
    return grads, g_state


def actor_critic_forward(params: AgentParams, state_vec, eps_sigma: float = EPS_SIGMA):
    """Policy (mean, variance) and scalar value for one state vector."""
    fwd = agent_forward(params, state_vec, eps_sigma)
    if fwd.squeeze:
        return GaussianPolicyOutput(fwd.policy.mean[0], fwd.policy.variance[0]), float(fwd.value[0])
    return fwd.policy, fwd.value


def sample_action(out: GaussianPolicyOutput, rng: np.random.Generator, eps_sigma: float = EPS_SIGMA):
    """a = mean + sqrt(variance) * z with z standard normal."""
    z = rng.standard_normal(np.shape(out.mean))
    a = out.mean + np.sqrt(out.variance) * z
    logp, _, _ = gaussian_log_prob(a, out, eps_sigma)
    return a, logp


def state_vector(S, X: np.ndarray) -> np.ndarray:
    return X[np.asarray(list(S), dtype=np.int64)].sum(axis=0)


def resolve_node(a, candidates, X: np.ndarray) -> int:
    """Nearest candidate to `a` in Euclidean distance; ties go to the smallest id."""
    cands = np.asarray(sorted(candidates), dtype=np.int64)
    if len(cands) == 0:
        raise EmptyCandidates("no candidate nodes")
    diff = X[cands] - np.asarray(a)
    d = np.einsum("ij,ij->i", diff, diff)
    return int(cands[np.argmin(d)])  # argmin takes the first minimum; cands ascending


def resolve_batch(a: np.ndarray, current: np.ndarray, start: np.ndarray, net: Network, X: np.ndarray,
                  chunk: int = 2048) -> np.ndarray:
    """Vectorised resolve_node over rows: candidates are successors(current) plus start."""
    pad = net.padded_neighbors()
    out = np.empty(len(a), dtype=np.int64)
    for lo in range(0, len(a), chunk):
        hi = min(lo + chunk, len(a))
        cand = np.concatenate([pad[current[lo:hi]], start[lo:hi, None]], axis=1)
        valid = cand >= 0
        safe = np.where(valid, cand, 0)
        diff = X[safe] - a[lo:hi, None, :]
        d = np.einsum("bcj,bcj->bc", diff, diff)
        d[~valid] = np.inf
        best = d.min(axis=1, keepdims=True)
        ids = np.where(d == best, safe, np.iinfo(np.int64).max)
        out[lo:hi] = ids.min(axis=1)
    return out


@dataclass
class EpisodeState:
    start_node: int
    current_node: int
    visited: list = field(default_factory=list)
    vector: np.ndarray | None = None

    @classmethod
    def begin(cls, start: int, X: np.ndarray) -> "EpisodeState":
        return cls(start, start, [start], X[start].copy())


def env_step(state: EpisodeState, resolved: int, targets, X: np.ndarray, net: Network | None = None):
    """Deterministic transition. Returns (reward, next state).

    Hitting a target or choosing the start node resets the visited sequence
    to (start,); otherwise the resolved node is appended.
    """
    if net is not None and resolved not in candidate_actions(net, state.current_node, state.start_node):
        raise IllegalMove(f"node {resolved} is not reachable from {state.current_node}")
    reward = 1 if resolved in targets and resolved != state.start_node else 0
    if reward or resolved == state.start_node:
        return reward, EpisodeState.begin(state.start_node, X)
    vec = state.vector + X[resolved]
    return reward, EpisodeState(state.start_node, resolved, state.visited + [resolved], vec)


@dataclass
class StepRecord:
    state_vector: np.ndarray
    action: np.ndarray
    log_prob: float
    resolved_node: int
    reward: int
    value_estimate: float


@dataclass
class Trajectory:
    start_node: int
    steps: list

    @property
    def total_reward(self) -> int:
        return sum(s.reward for s in self.steps)
