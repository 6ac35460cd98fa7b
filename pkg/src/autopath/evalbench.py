"""Link-prediction evaluation and a planted-structure synthetic network."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import rankdata

from .errors import (
    CannotSatisfyDisjointness,
    DegenerateClasses,
    EmptyTruth,
    InsufficientClassMembers,
    SpecInfeasible,
)
from .hetnet import LabelSet, Network, NodeTypeMeta, PairSet
from .planner import rank_from_scores, score_many

log = logging.getLogger(__name__)

K_GRID = (1, 2, 5, 10, 20, 50, 100)
AUC_PAIR_CAP = 100_000


# ------------------------------------------------------------------ pairs

def _sample_pairs(labels: LabelSet, n: int, same: bool, rng, exclude=frozenset()) -> list:
    nodes = labels.nodes()
    cls = np.array([labels.labels[v] for v in nodes])
    sizes = np.bincount(cls, minlength=len(labels.class_names))
    if same:
        available = int(sum(s * (s - 1) // 2 for s in sizes))
    else:
        available = int((len(nodes) ** 2 - (sizes**2).sum()) // 2)
    if available < n:
        kind = "same-class" if same else "cross-class"
        raise InsufficientClassMembers(f"only {available} {kind} pairs available, {n} requested")
    seen = set(exclude)
    out = []
    while len(out) < n:
        i, j = rng.integers(0, len(nodes), size=2)
        if i == j or (cls[i] == cls[j]) != same:
            continue
        key = (min(nodes[i], nodes[j]), max(nodes[i], nodes[j]))
        if key in seen:
            continue
        seen.add(key)
        out.append((int(nodes[i]), int(nodes[j])))
    return out


def make_pairs(labels: LabelSet, n_pos: int, rng: np.random.Generator) -> tuple:
    """n_pos same-class pairs and as many cross-class pairs, uniform and duplicate-free."""
    pos = _sample_pairs(labels, n_pos, True, rng)
    neg = _sample_pairs(labels, n_pos, False, rng)
    return PairSet(np.array(pos, dtype=np.int64).reshape(-1, 2)), PairSet(np.array(neg, dtype=np.int64).reshape(-1, 2))


def holdout_split(labels: LabelSet, positives: PairSet, fraction: float = 0.1,
                  rng: np.random.Generator | None = None) -> tuple:
    """Pick `fraction` of the labeled nodes as test start nodes and drop every pair touching them."""
    rng = rng if rng is not None else np.random.default_rng(0)
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must be in [0, 1)")
    nodes = labels.nodes()
    n_test = int(round(fraction * len(nodes)))
    if n_test == 0:
        log.warning("holdout fraction %.3f selects no test start nodes", fraction)
        return positives, np.array([], dtype=np.int64)
    sizes = np.bincount([labels.labels[v] for v in nodes], minlength=len(labels.class_names))
    # a test node needs at least one other member of its class as ground truth
    eligible = np.array([v for v in nodes if sizes[labels.labels[v]] >= 2], dtype=np.int64)
    if len(eligible) < n_test:
        raise CannotSatisfyDisjointness(f"{n_test} test nodes requested, {len(eligible)} eligible")
    test = np.sort(rng.choice(eligible, size=n_test, replace=False))
    test_set = set(test.tolist())
    keep = [not (int(s) in test_set or int(t) in test_set) for s, t in positives.pairs]
    train = PairSet(positives.pairs[np.array(keep, dtype=bool)] if len(keep) else positives.pairs)
    if len(train) == 0:
        raise CannotSatisfyDisjointness("every training pair touches a test node")
    assert not (train.nodes() & test_set)
    return train, test


def ground_truth(labels: LabelSet, s: int) -> set:
    cls = labels.labels[s]
    return {v for v, c in labels.labels.items() if c == cls and v != s}


# ---------------------------------------------------------------- metrics

def precision_recall_at_k(ranked, truth, K: int) -> tuple:
    if K < 1:
        raise ValueError("K must be >= 1")
    truth = set(truth)
    if not truth:
        raise EmptyTruth("ground truth is empty")
    hits = len(set(list(ranked)[:K]) & truth)
    return hits / K, hits / len(truth)


def _rank_auc(pos: np.ndarray, neg: np.ndarray) -> float:
    ranks = rankdata(np.concatenate([pos, neg]))
    return float((ranks[: len(pos)].sum() - len(pos) * (len(pos) + 1) / 2) / (len(pos) * len(neg)))


def auc(scores: dict, truth, candidates, rng: np.random.Generator | None = None, cap: int = AUC_PAIR_CAP) -> float:
    """P(random positive outscores random negative), ties counting one half.

    Uses the rank-sum identity over all positive/negative pairs; above `cap`
    pairs a uniform sample of `cap` pairs is scored instead.
    """
    cands = sorted(set(int(c) for c in candidates))
    truth = set(int(t) for t in truth)
    pos = np.array([scores.get(c, 0.0) for c in cands if c in truth], dtype=np.float64)
    neg = np.array([scores.get(c, 0.0) for c in cands if c not in truth], dtype=np.float64)
    if len(pos) == 0 or len(neg) == 0:
        raise DegenerateClasses("AUC needs at least one positive and one negative candidate")
    if len(pos) * len(neg) <= cap:
        return _rank_auc(pos, neg)
    rng = rng if rng is not None else np.random.default_rng(0)
    p = pos[rng.integers(0, len(pos), size=cap)]
    q = neg[rng.integers(0, len(neg), size=cap)]
    return float(np.mean((p > q) + 0.5 * (p == q)))


# ------------------------------------------------------------ synthetic

@dataclass
class TypeSpec:
    name: str
    count: int
    content_dim: int
    content_kind: str = "continuous"
    noise: float = 0.5  # Gaussian std (continuous) or bit-flip probability (binary)
    class_keyed: bool = True  # contents depend on class


@dataclass
class SynthSpec:
    types: tuple = (
        TypeSpec("M", 200, 16, "binary", 0.3),
        TypeSpec("A", 300, 8, "continuous", 0.5),
        TypeSpec("U", 1500, 8, "continuous", 1.0, class_keyed=False),
    )
    n_classes: int = 2
    templates: tuple = (("M", "A", "M"),)
    p_in: float = 0.2
    p_out: float = 0.01
    noise_links: tuple = (("M", "U", 2),)  # (from type, to type, links per node), class-blind
    seed: int = 7

    @property
    def query_type(self) -> str:
        return self.types[0].name


def _check_spec(spec: SynthSpec) -> None:
    names = [t.name for t in spec.types]
    if len(set(names)) != len(names):
        raise SpecInfeasible("duplicate type names")
    if not spec.templates:
        raise SpecInfeasible("at least one planted template is required")
    if spec.n_classes < 1:
        raise SpecInfeasible("n_classes must be >= 1")
    if not 0.0 <= spec.p_out <= spec.p_in <= 1.0:
        raise SpecInfeasible("need 0 <= p_out <= p_in <= 1")
    for tpl in spec.templates:
        if len(tpl) < 2 or any(t not in names for t in tpl):
            raise SpecInfeasible(f"bad template {tpl}")
        if tpl[0] != spec.query_type or tpl[-1] != spec.query_type:
            raise SpecInfeasible(f"template {tpl} must start and end at the query type")
    for a, b, deg in spec.noise_links:
        if a not in names or b not in names or deg < 0:
            raise SpecInfeasible(f"bad noise link {(a, b, deg)}")
    for t in spec.types:
        if t.count < spec.n_classes:
            raise SpecInfeasible(f"type {t.name}: fewer nodes than classes")
        if t.content_kind == "binary" and not 0.0 <= t.noise <= 0.5:
            raise SpecInfeasible(f"type {t.name}: flip probability must be in [0, 0.5]")


def synth_network(spec: SynthSpec | None = None) -> tuple:
    """Planted-structure network: same-class nodes share template neighbours.

    Every adjacent type pair of a template is wired in both directions with
    probability p_in between same-class nodes and p_out otherwise. Contents are
    per-(type, class) Gaussian clusters or Bernoulli prototypes with bit flips.
    Returns (Network, LabelSet over the query type).
    """
    spec = spec or SynthSpec()
    _check_spec(spec)
    rng = np.random.default_rng(spec.seed)
    type_id = {t.name: k for k, t in enumerate(spec.types)}

    node_types, names, classes, offsets = [], [], [], {}
    for t in spec.types:
        offsets[t.name] = len(node_types)
        cls = rng.permutation(np.arange(t.count) % spec.n_classes)
        for i in range(t.count):
            node_types.append(type_id[t.name])
            names.append(f"{t.name}{i}")
        classes.extend(cls.tolist())
    classes = np.array(classes)

    def members(name):
        o = offsets[name]
        return np.arange(o, o + spec.types[type_id[name]].count)

    edges = set()
    wired = set()
    for tpl in spec.templates:
        for a, b in zip(tpl[:-1], tpl[1:]):
            key = tuple(sorted((a, b)))
            if key in wired:
                continue
            wired.add(key)
            ua, ub = members(a), members(b)
            same = classes[ua][:, None] == classes[ub][None, :]
            prob = np.where(same, spec.p_in, spec.p_out)
            draw = rng.random(prob.shape) < prob
            if a == b:
                draw &= ~np.eye(len(ua), dtype=bool)
            ii, jj = np.nonzero(draw)
            for i, j in zip(ua[ii], ub[jj]):
                edges.add((int(i), int(j)))
                edges.add((int(j), int(i)))
    for a, b, deg in spec.noise_links:
        ua, ub = members(a), members(b)
        for i in ua:
            for j in rng.choice(ub, size=min(deg, len(ub)), replace=False):
                if i != j:
                    edges.add((int(i), int(j)))
                    edges.add((int(j), int(i)))

    types, blocks = [], []
    for t in spec.types:
        k = type_id[t.name]
        cls = classes[members(t.name)] if t.class_keyed else np.zeros(t.count, dtype=np.int64)
        n_proto = spec.n_classes if t.class_keyed else 1
        if t.content_kind == "binary":
            protos = rng.random((n_proto, t.content_dim)) < 0.5
            flips = rng.random((t.count, t.content_dim)) < t.noise
            block = (protos[cls] ^ flips).astype(np.float64)
        else:
            centers = rng.normal(0.0, 1.0, size=(n_proto, t.content_dim))
            block = centers[cls] + rng.normal(0.0, t.noise, size=(t.count, t.content_dim))
        types.append(NodeTypeMeta(k, t.name, t.content_dim, t.content_kind))
        blocks.append(block)

    edge_arr = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)
    net = Network(types, node_types, names, blocks, edge_arr)
    q = members(spec.query_type)
    labels = LabelSet({int(v): int(classes[v]) for v in q}, [f"c{i}" for i in range(spec.n_classes)])
    return net, labels


def binary_type_spec(seed: int = 11) -> SynthSpec:
    """Small all-binary network with two well-separated content clusters per type."""
    return SynthSpec(
        types=(
            TypeSpec("P", 300, 24, "binary", 0.02),
            TypeSpec("Q", 300, 16, "binary", 0.02),
        ),
        templates=(("P", "Q", "P"),),
        noise_links=(),
        seed=seed,
    )


# ------------------------------------------------------------ evaluation

@dataclass
class EvalReport:
    k_grid: list
    precision: list
    recall: list
    auc: float
    auc_std: float
    pair_auc: float
    n_test: int
    seconds: float
    config: dict = field(default_factory=dict)

    def to_json(self, timing: bool = False) -> str:
        d = asdict(self)
        if not timing:
            d.pop("seconds")
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    def curves_tsv(self) -> str:
        lines = ["K\tprecision\trecall"]
        lines += [f"{k}\t{p:.6f}\t{r:.6f}" for k, p, r in zip(self.k_grid, self.precision, self.recall)]
        return "\n".join(lines) + "\n"


def random_scorer(candidates, seed: int) -> Callable[[int], dict]:
    cands = np.asarray(sorted(candidates), dtype=np.int64)

    def score(s: int) -> dict:
        r = np.random.default_rng([seed, 99, int(s)])
        return dict(zip(cands.tolist(), r.random(len(cands)).tolist()))

    return score


def run_link_prediction(
    model,
    labels: LabelSet,
    test_nodes,
    k_grid=K_GRID,
    N: int | None = None,
    scorer: Callable[[int], dict] | None = None,
    seed: int = 0,
) -> EvalReport:
    """Average precision@K / recall@K and AUC over held-out start nodes.

    Candidates for a start node s are the other nodes of its type; the ground
    truth is the rest of its class. `scorer` overrides the planner (s -> scores).
    """
    t0 = time.perf_counter()
    net = model.net if model is not None else None
    test_nodes = [int(s) for s in test_nodes]
    if not test_nodes:
        raise ValueError("no test start nodes")
    if scorer is None:
        all_scores = score_many(model, test_nodes, N)
        scorer = all_scores.__getitem__
    rng = np.random.default_rng([seed, 6])
    prec = np.zeros(len(k_grid))
    rec = np.zeros(len(k_grid))
    aucs = []
    pos_scores, neg_scores = [], []
    for s in test_nodes:
        if net is not None:
            cands = [int(v) for v in net.type_members[net.type_of(s)] if v != s]
        else:
            cands = [v for v in labels.labels if v != s]
        truth = ground_truth(labels, s) & set(cands)
        scores = scorer(s)
        ranked = [v for v, _ in rank_from_scores(scores, cands)]
        for i, K in enumerate(k_grid):
            p, r = precision_recall_at_k(ranked, truth, K)
            prec[i] += p
            rec[i] += r
        aucs.append(auc(scores, truth, cands, rng))
        # pooled pair protocol: equal numbers of positive and negative pairs
        negs = [v for v in cands if v in labels.labels and v not in truth]
        n_pair = min(len(truth), len(negs))
        if n_pair:
            pos_scores += [scores.get(v, 0.0) for v in rng.choice(sorted(truth), n_pair, replace=False)]
            neg_scores += [scores.get(v, 0.0) for v in rng.choice(negs, n_pair, replace=False)]
    n = len(test_nodes)
    pair_auc = _rank_auc(np.array(pos_scores), np.array(neg_scores)) if pos_scores and neg_scores else float("nan")
    return EvalReport(
        k_grid=list(k_grid),
        precision=(prec / n).tolist(),
        recall=(rec / n).tolist(),
        auc=float(np.mean(aucs)),
        auc_std=float(np.std(aucs)),
        pair_auc=pair_auc,
        n_test=n,
        seconds=time.perf_counter() - t0,
        config={"n_rollouts": N or (model.hyper.n_rollouts if model is not None else None),
                "score_mode": model.hyper.score_mode if model is not None else None,
                "plan_stop": model.hyper.plan_stop if model is not None else None},
    )
