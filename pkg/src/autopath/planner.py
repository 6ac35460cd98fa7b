"""Inference with a trained agent: Monte-Carlo rollouts, similarity scores,
rankings and meta-path statistics, plus an exhaustive path-enumeration oracle."""

from __future__ import annotations

import warnings
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .agent import agent_forward, resolve_batch
from .errors import PathLimitExceeded
from .hetnet import Network
from .trainer import Model

MAX_WALKS = 10**7


class Segment(NamedTuple):
    nodes: tuple  # starts with the start node
    hit: bool  # ended by reaching a target


@dataclass
class MetaPathStat:
    type_sequence: tuple
    frequency: float
    raw_count: int

    def label(self, net: Network, sep: str = "-") -> str:
        return sep.join(net.types[k].name for k in self.type_sequence)

    def describe(self, net: Network) -> str:
        return f"{self.label(net, ' -- ')} ({self.frequency:.3f})"


@dataclass
class RolloutBatch:
    starts: np.ndarray  # (N,)
    resolved: np.ndarray  # (N, m)
    hit: np.ndarray  # (N, m) bool
    reset: np.ndarray  # (N, m) bool: step ended the current segment

    def segments(self, i: int) -> list:
        s = int(self.starts[i])
        out, seg = [], [s]
        for v, h, r in zip(self.resolved[i], self.hit[i], self.reset[i]):
            v = int(v)
            if v != s:
                seg.append(v)
            if r:
                if len(seg) > 1:
                    out.append(Segment(tuple(seg), bool(h)))
                seg = [s]
        if len(seg) > 1:
            out.append(Segment(tuple(seg), False))
        return out


def _plan(model: Model, starts: np.ndarray, m: int, rng: np.random.Generator, stop: str,
          targets: dict | None = None) -> RolloutBatch:
    """Batched rollouts with training mechanics and no learning.

    A step is a hit when it reaches a target: with stop="type" any other node
    of the start's type, with stop="none" nothing (only voluntary resets), and
    with an explicit `targets` dict the listed nodes.
    """
    net, X = model.net, model.X
    N = len(starts)
    k = model.kappa
    current = starts.copy()
    vec = X[starts].copy()
    resolved = np.empty((N, m), dtype=np.int64)
    hit = np.zeros((N, m), dtype=bool)
    reset = np.zeros((N, m), dtype=bool)
    codes = None
    if targets is not None:
        codes = np.unique([s * net.n_nodes + t for s, ts in targets.items() for t in ts]).astype(np.int64)
    for t in range(m):
        fwd = agent_forward(model.agent, vec, model.hyper.eps_sigma)
        a = fwd.policy.mean + np.sqrt(fwd.policy.variance) * rng.standard_normal((N, k))
        res = resolve_batch(a, current, starts, net, X)
        if codes is not None:
            h = np.isin(starts * net.n_nodes + res, codes)
        elif stop == "type":
            h = net.node_types[res] == net.node_types[starts]
        else:
            h = np.zeros(N, dtype=bool)
        h &= res != starts
        r = h | (res == starts)
        resolved[:, t], hit[:, t], reset[:, t] = res, h, r
        vec = np.where(r[:, None], X[starts], vec + X[res])
        current = np.where(r, starts, res)
    return RolloutBatch(starts, resolved, hit, reset)


def rollout(model: Model, s: int, m: int, rng: np.random.Generator, stop: str | None = None) -> list:
    """One planning episode from s, split into segments at resets."""
    model.net.check_node(s)
    if m == 0:
        return []
    batch = _plan(model, np.array([s], dtype=np.int64), m, rng, stop or model.hyper.plan_stop)
    return batch.segments(0)


def _visit_counts(batch: RolloutBatch, n: int, mode: str) -> np.ndarray:
    N, m = batch.resolved.shape
    if mode == "visited":
        nodes = batch.resolved
        mask = np.ones_like(nodes, dtype=bool)
    else:
        # last node of every non-empty segment: the hit node, or the node
        # before a voluntary reset or the horizon
        prev = np.concatenate([batch.starts[:, None], batch.resolved[:, :-1]], axis=1)
        prev_reset = np.concatenate([np.ones((N, 1), dtype=bool), batch.reset[:, :-1]], axis=1)
        voluntary = batch.reset & ~batch.hit
        nodes = np.where(voluntary, prev, batch.resolved)
        last = np.zeros_like(batch.reset)
        last[:, -1] = ~batch.reset[:, -1]
        mask = batch.hit | (voluntary & ~prev_reset) | last
    rows = np.repeat(np.arange(N), m).reshape(N, m)
    code = np.unique(rows[mask] * n + nodes[mask])
    return np.bincount(code % n, minlength=n)


def similarity_scores(model: Model, s: int, N: int | None = None, rng: np.random.Generator | None = None,
                      mode: str | None = None, m: int | None = None) -> dict:
    """Fraction of N rollouts from s that visit each node (s itself excluded)."""
    net = model.net
    net.check_node(s)
    N = model.hyper.n_rollouts if N is None else N
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = rng if rng is not None else rollout_rng(model.hyper.seed, s)
    m = model.hyper.m if m is None else m
    batch = _plan(model, np.full(N, s, dtype=np.int64), m, rng, model.hyper.plan_stop)
    counts = _visit_counts(batch, net.n_nodes, mode or model.hyper.score_mode)
    counts[s] = 0
    nz = np.flatnonzero(counts)
    return {int(v): counts[v] / N for v in nz}


def rollout_rng(seed: int, s: int) -> np.random.Generator:
    # one stream per start node keeps results independent of worker scheduling
    return np.random.default_rng([seed, 5, int(s)])


def rank_from_scores(scores: dict, candidates) -> list:
    """(node, score) sorted by score descending then node id ascending."""
    cands = np.asarray(sorted(set(int(c) for c in candidates)), dtype=np.int64)
    vals = np.array([scores.get(int(c), 0.0) for c in cands])
    order = np.lexsort((cands, -vals))
    return [(int(cands[i]), float(vals[i])) for i in order]


def rank_nodes(model: Model, s: int, N: int | None = None, candidate_type: int | None = None,
               rng: np.random.Generator | None = None) -> list:
    """All nodes of `candidate_type` (default: the type of s) except s, best first."""
    net = model.net
    net.check_node(s)
    k = net.type_of(s) if candidate_type is None else candidate_type
    if not 0 <= k < net.n_types:
        raise ValueError(f"invalid candidate type {k}")
    scores = similarity_scores(model, s, N, rng)
    cands = [v for v in net.type_members[k] if v != s]
    return rank_from_scores(scores, cands)


def score_many(model: Model, starts, N: int | None = None, workers: int | None = None) -> dict:
    """similarity_scores for several start nodes, parallel across a thread pool."""
    workers = workers or model.hyper.workers
    starts = [int(s) for s in starts]
    if workers <= 1 or len(starts) <= 1:
        return {s: similarity_scores(model, s, N) for s in starts}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda s: similarity_scores(model, s, N), starts))
    return dict(zip(starts, results))


def _table(counts: Counter) -> list:
    total = sum(counts.values())
    rows = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [MetaPathStat(seq, c / total, c) for seq, c in rows]


def extract_metapaths(model: Model, start_nodes, N: int = 10000, rng: np.random.Generator | None = None,
                      stop: str | None = None, targets: dict | None = None, m: int | None = None) -> list:
    """Type sequences of successful rollout segments, most frequent first.

    N rollouts are planned from start nodes drawn uniformly from `start_nodes`.
    A segment is successful when it ends by reaching a target (see `_plan`).
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    net = model.net
    start_nodes = np.asarray(list(start_nodes), dtype=np.int64)
    rng = rng if rng is not None else np.random.default_rng([model.hyper.seed, 5])
    starts = rng.choice(start_nodes, size=N, replace=True)
    stop = stop or model.hyper.plan_stop
    if stop == "none" and targets is None:
        raise ValueError("stop='none' needs explicit targets for meta-path extraction")
    batch = _plan(model, starts, model.hyper.m if m is None else m, rng, stop, targets)
    counts = Counter()
    types = net.node_types
    for i in range(N):
        if not batch.hit[i].any():
            continue
        for seg in batch.segments(i):
            if seg.hit:
                counts[tuple(int(types[v]) for v in seg.nodes)] += 1
    if not counts:
        warnings.warn("no rollout segment reached a target", category=UserWarning)
        return []
    return _table(counts)


def brute_force_metapaths(net: Network, s: int, targets, L_max: int, limit: int = MAX_WALKS) -> list:
    """Exhaustively count walks from s to a target by type sequence.

    Walks visit each node at most once, have at most `L_max` nodes, and stop at
    the first target; s itself is never revisited (that would be a reset).
    """
    return _table(brute_force_counts(net, [s], {s: set(targets)}, L_max, limit))


def brute_force_counts(net: Network, starts, targets_of: dict, L_max: int, limit: int = MAX_WALKS) -> Counter:
    if L_max > 6:
        raise ValueError("L_max above 6 is refused (path blow-up)")
    counts = Counter()
    walks = 0
    types = net.node_types
    for s in starts:
        s = int(s)
        targets = set(int(t) for t in targets_of.get(s, ())) - {s}
        if not targets:
            continue
        stack = [(s, (s,))]
        while stack:
            v, path = stack.pop()
            if len(path) >= L_max:
                continue
            for u in net.out_adjacency(v):
                u = int(u)
                if u in path:
                    continue
                walks += 1
                if walks > limit:
                    raise PathLimitExceeded(f"more than {limit} walks enumerated")
                new = path + (u,)
                if u in targets:
                    counts[tuple(int(types[w]) for w in new)] += 1
                else:
                    stack.append((u, new))
    return counts


def brute_force_table(net: Network, starts, targets_of: dict, L_max: int) -> list:
    return _table(brute_force_counts(net, starts, targets_of, L_max))


def metapath_tsv(stats, net: Network, oracle: list | None = None) -> str:
    header = "type_sequence\tfrequency\tcount"
    lookup = {}
    if oracle is not None:
        header += "\toracle_frequency\toracle_count"
        lookup = {o.type_sequence: o for o in oracle}
    lines = [header]
    for st in stats:
        row = f"{st.label(net)}\t{st.frequency:.6f}\t{st.raw_count}"
        if oracle is not None:
            o = lookup.get(st.type_sequence)
            row += f"\t{o.frequency:.6f}\t{o.raw_count}" if o else "\t0.000000\t0"
        lines.append(row)
    return "\n".join(lines) + "\n"

