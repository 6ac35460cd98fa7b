"""Joint semi-supervised training: pretrain the embedder, freeze its encoder,
then alternate policy/value updates with unsupervised embedding updates."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .agent import (
    AgentParams,
    StepRecord,
    Trajectory,
    agent_backward,
    agent_forward,
    init_agent,
    resolve_batch,
)
from .embedder import EmbedderParams, FrozenEncoder, j2_loss, pretrain
from .errors import ConfigError, NonFiniteLoss
from .hetnet import Network, PairSet
from .nn import AdamState, adam_step, gaussian_log_prob

log = logging.getLogger(__name__)

STREAMS = ("init_embedder", "init_agent", "pretrain", "trajectories", "unsup", "rollouts", "synth", "eval")


@dataclass
class Hyperparams:
    m: int = 10
    alpha: int = 400
    beta: int = 2000
    gamma: int = 200
    lam: float = 0.1
    H: int = 64
    H_e: int = 64
    kappa: int = 32
    dropout_rate: float = 0.2
    lr: float = 1e-3
    eps_sigma: float = 1e-4
    pretrain_max_epochs: int = 500
    pretrain_patience: int = 10
    pretrain_tol: float = 1e-3
    standardize_advantages: bool = False
    seed: int = 0
    n_rollouts: int = 2000
    score_mode: str = "visited"
    plan_stop: str = "type"
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)

    def __post_init__(self):
        positive = ("m", "alpha", "beta", "H", "H_e", "kappa", "lr", "eps_sigma", "n_rollouts", "workers")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("gamma", "lam", "pretrain_max_epochs", "pretrain_patience", "pretrain_tol", "seed"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must be in [0, 1)")
        if self.score_mode not in ("visited", "segment_end"):
            raise ConfigError(f"score_mode must be visited or segment_end, got {self.score_mode!r}")
        if self.plan_stop not in ("type", "none"):
            raise ConfigError(f"plan_stop must be type or none, got {self.plan_stop!r}")

    def replace(self, **changes) -> "Hyperparams":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        # workers only changes scheduling, never results
        text = "\n".join(l for l in self.to_text().splitlines() if not l.startswith("workers "))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def parse_config(text: str, base: Hyperparams | None = None) -> Hyperparams:
    """Parse flat ``key = value`` lines; unknown keys are an error."""
    base = base or Hyperparams()
    kinds = {f.name: type(getattr(base, f.name)) for f in dataclasses.fields(Hyperparams)}
    changes = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in kinds:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        kind = kinds[key]
        try:
            if kind is bool:
                if value.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(value)
                changes[key] = value.lower() in ("true", "1")
            elif kind is int:
                changes[key] = int(value)
            elif kind is float:
                changes[key] = float(value)
            else:
                changes[key] = value
        except ValueError:
            raise ConfigError(f"config line {lineno}: bad value {value!r} for {key}") from None
    return base.replace(**changes)


def load_config(path, base: Hyperparams | None = None) -> Hyperparams:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


def rng_streams(seed: int) -> dict:
    return {name: np.random.default_rng([seed, i]) for i, name in enumerate(STREAMS)}


@dataclass
class Model:
    net: Network
    X: np.ndarray
    agent: AgentParams
    embedder: EmbedderParams
    encoder: FrozenEncoder
    hyper: Hyperparams
    pairs: PairSet | None = None

    @property
    def kappa(self) -> int:
        return self.X.shape[1]


class TrajectoryBatch(Sequence):
    """α trajectories of horizon m stored as dense arrays.

    Indexing yields :class:`Trajectory` objects with per-step records.
    """

    def __init__(self, starts, states, actions, log_probs, resolved, rewards, values, members):
        self.starts = starts  # (B,)
        self.states = states  # (B, m, kappa)
        self.actions = actions  # (B, m, kappa)
        self.log_probs = log_probs  # (B, m)
        self.resolved = resolved  # (B, m)
        self.rewards = rewards  # (B, m)
        self.values = values  # (B, m)
        self.members = members  # (B, m, m): visited sequence at each step, -1 padded

    def __len__(self) -> int:
        return len(self.starts)

    def __getitem__(self, i) -> Trajectory:
        steps = [
            StepRecord(self.states[i, t], self.actions[i, t], float(self.log_probs[i, t]),
                       int(self.resolved[i, t]), int(self.rewards[i, t]), float(self.values[i, t]))
            for t in range(self.states.shape[1])
        ]
        return Trajectory(int(self.starts[i]), steps)

    @property
    def horizon(self) -> int:
        return self.states.shape[1]

    def mean_reward(self) -> float:
        return float(self.rewards.sum(axis=1).mean())


def sample_trajectories(model: Model, pairs: PairSet, alpha: int, m: int, rng: np.random.Generator) -> TrajectoryBatch:
    """Roll out α episodes of length m from start nodes drawn uniformly from P."""
    net, X, k = model.net, model.X, model.kappa
    n = net.n_nodes
    codes = pairs.codes(n)
    starts = rng.choice(pairs.starts, size=alpha, replace=True)
    seq = np.full((alpha, m), -1, dtype=np.int64)
    seq[:, 0] = starts
    length = np.ones(alpha, dtype=np.int64)
    current = starts.copy()
    vec = X[starts].copy()
    rows = np.arange(alpha)

    states = np.empty((alpha, m, k))
    actions = np.empty((alpha, m, k))
    log_probs = np.empty((alpha, m))
    resolved = np.empty((alpha, m), dtype=np.int64)
    rewards = np.zeros((alpha, m), dtype=np.int64)
    values = np.empty((alpha, m))
    members = np.empty((alpha, m, m), dtype=np.int64)

    for t in range(m):
        states[:, t] = vec
        members[:, t] = seq
        fwd = agent_forward(model.agent, vec, model.hyper.eps_sigma)
        z = rng.standard_normal((alpha, k))
        a = fwd.policy.mean + np.sqrt(fwd.policy.variance) * z
        logp, _, _ = gaussian_log_prob(a, fwd.policy, model.hyper.eps_sigma)
        res = resolve_batch(a, current, starts, net, X)
        hit = (res != starts) & np.isin(starts * n + res, codes)
        reset = hit | (res == starts)

        actions[:, t] = a
        log_probs[:, t] = logp
        resolved[:, t] = res
        rewards[:, t] = hit
        values[:, t] = fwd.value

        go = ~reset
        if t + 1 < m:
            seq[rows[go], length[go]] = res[go]
        length[go] += 1
        vec[go] += X[res[go]]
        current[go] = res[go]
        seq[reset, 1:] = -1
        length[reset] = 1
        vec[reset] = X[starts[reset]]
        current[reset] = starts[reset]

    return TrajectoryBatch(starts, states, actions, log_probs, resolved, rewards, values, members)


def returns_and_advantages(traj) -> list:
    """Undiscounted return-to-go and advantage return - value at each step."""
    rewards = np.array([s.reward for s in traj.steps], dtype=np.float64)
    values = np.array([s.value_estimate for s in traj.steps], dtype=np.float64)
    returns = np.cumsum(rewards[::-1])[::-1]
    return list(zip(returns.tolist(), (returns - values).tolist()))


def batch_returns(batch: TrajectoryBatch) -> np.ndarray:
    return np.cumsum(batch.rewards[:, ::-1], axis=1)[:, ::-1].astype(np.float64)


@dataclass
class J1Grads:
    j_p: float
    j_v: float
    grads: dict  # agent parameter name -> gradient
    x_rows: np.ndarray  # unique embedding rows touched
    x_grad: np.ndarray  # gradient for those rows
    policy_grads: dict = field(default_factory=dict)  # grads of the policy term alone


def j1_gradients(model: Model, batch: TrajectoryBatch, standardize: bool = False,
                 value_override: float | None = None) -> J1Grads:
    """Gradients of J1 = J_p + J_v over all (trajectory, step) samples.

    The advantage is held constant. `value_override` replaces the critic's
    baseline by a constant (used to probe the estimator).
    """
    k = model.kappa
    N = batch.states.shape[0] * batch.states.shape[1]
    S = batch.states.reshape(N, k)
    A = batch.actions.reshape(N, k)
    G = batch_returns(batch).reshape(N)

    fwd = agent_forward(model.agent, S, model.hyper.eps_sigma)
    logp, g_mu, g_var = gaussian_log_prob(A, fwd.policy, model.hyper.eps_sigma)
    baseline = fwd.value if value_override is None else np.full(N, float(value_override))
    adv = G - baseline
    if standardize and N > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    j_p = float(-np.mean(logp * adv))
    if value_override is None:
        j_v = float(np.mean((fwd.value - G) ** 2))
        g_value = 2.0 * (fwd.value - G) / N
    else:
        j_v = 0.0
        g_value = np.zeros(N)
    w = (-adv / N)[:, None]
    grads, g_state = agent_backward(fwd, w * g_mu, w * g_var, g_value)

    members = batch.members.reshape(N, -1)
    mask = members >= 0
    rows = members[mask]
    sample_of = np.nonzero(mask)[0]
    touched, inverse = np.unique(rows, return_inverse=True)
    x_grad = np.zeros((len(touched), k))
    np.add.at(x_grad, inverse, g_state[sample_of])
    return J1Grads(j_p, j_v, grads, touched, x_grad)


def policy_gradient_estimate(model: Model, batch: TrajectoryBatch, value_override: float | None = None) -> np.ndarray:
    """Flattened policy-term gradient g = E_t[grad log pi * A_t] over agent parameters (ascent direction)."""
    k = model.kappa
    N = batch.states.shape[0] * batch.states.shape[1]
    fwd = agent_forward(model.agent, batch.states.reshape(N, k), model.hyper.eps_sigma)
    _, g_mu, g_var = gaussian_log_prob(batch.actions.reshape(N, k), fwd.policy, model.hyper.eps_sigma)
    baseline = fwd.value if value_override is None else float(value_override)
    adv = (batch_returns(batch).reshape(N) - baseline)[:, None] / N
    grads, _ = agent_backward(fwd, adv * g_mu, adv * g_var, np.zeros(N))
    return np.concatenate([grads[key].ravel() for key in sorted(grads)])


def policy_value_update(model: Model, batch: TrajectoryBatch, adam: AdamState) -> tuple:
    """One Adam step on the agent parameters and the touched embedding rows. Returns (J_p, J_v)."""
    if len(batch) == 0:
        raise ValueError("no trajectories")
    res = j1_gradients(model, batch, model.hyper.standardize_advantages)
    if not (np.isfinite(res.j_p) and np.isfinite(res.j_v)):
        raise NonFiniteLoss(f"J1 non-finite: J_p={res.j_p}, J_v={res.j_v}")
    params = model.agent.arrays()
    params["X"] = model.X
    grads = dict(res.grads)
    grads["X"] = res.x_grad
    adam_step(params, grads, adam, rows={"X": res.x_rows})
    return res.j_p, res.j_v


def unsup_update(model: Model, beta: int, rng: np.random.Generator, adam: AdamState) -> float:
    """One Adam step on J2 over β uniformly sampled nodes, decoding from the table rows."""
    if beta < 1:
        raise ValueError("beta must be >= 1")
    hp = model.hyper
    nodes = rng.integers(0, model.net.n_nodes, size=beta)
    res = j2_loss(model.embedder, model.net, nodes, hp.lam, X=model.X,
                  dropout_rate=hp.dropout_rate, mode="train", rng=rng)
    if not np.isfinite(res.loss):
        raise NonFiniteLoss(f"J2 non-finite: {res.loss}")
    grads = dict(res.grads)
    if hp.lam == 0.0:
        grads.pop("W_c")
    touched, inverse = np.unique(nodes, return_inverse=True)
    x_grad = np.zeros((len(touched), model.kappa))
    np.add.at(x_grad, inverse, res.x_grad)
    params = model.embedder.arrays(encoder=False)
    params["X"] = model.X
    grads["X"] = x_grad
    adam_step(params, grads, adam, rows={"X": touched})
    return res.loss


def train(
    net: Network,
    pairs: PairSet,
    hyper: Hyperparams | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> tuple:
    """Full pipeline. Returns (Model, per-epoch metric dicts)."""
    hp = hyper or Hyperparams()
    if len(pairs) == 0:
        raise ValueError("training needs at least one pair")
    pairs.validate(net)
    rngs = rng_streams(hp.seed)

    pre = pretrain(
        net, kappa=hp.kappa, hidden=hp.H_e, lam=hp.lam, batch_size=hp.beta, lr=hp.lr,
        dropout_rate=hp.dropout_rate, max_epochs=hp.pretrain_max_epochs,
        patience=hp.pretrain_patience, tol=hp.pretrain_tol,
        rng=rngs["pretrain"], init_rng=rngs["init_embedder"],
    )
    encoder = pre.params.encoder()
    model = Model(net, pre.X.copy(), init_agent(hp.kappa, hp.H, rngs["init_agent"]), pre.params, encoder, hp, pairs)

    adam_j1 = AdamState(lr=hp.lr)
    adam_j2 = AdamState(lr=hp.lr)
    metrics = []
    for epoch in range(1, hp.gamma + 1):
        t0 = time.perf_counter()
        batch = sample_trajectories(model, pairs, hp.alpha, hp.m, rngs["trajectories"])
        j_p, j_v = policy_value_update(model, batch, adam_j1)
        j2 = unsup_update(model, hp.beta, rngs["unsup"], adam_j2)
        row = {
            "epoch": epoch,
            "j_p": j_p,
            "j_v": j_v,
            "j2": j2,
            "mean_reward": batch.mean_reward(),
            "seconds": time.perf_counter() - t0,
        }
        metrics.append(row)
        if on_epoch is not None:
            on_epoch(row)
        if epoch == 1 or epoch % 20 == 0 or epoch == hp.gamma:
            log.info("epoch %d  J_p=%.4f  J_v=%.4f  J2=%.4f  reward=%.3f", epoch, j_p, j_v, j2, row["mean_reward"])
    return model, metrics


def write_metrics(metrics, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in metrics:
            fh.write(json.dumps(row) + "\n")
