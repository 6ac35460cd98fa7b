"""autopath command line: synth, train, score, rank, eval, paths, gradcheck.

Exit codes: 0 success, 1 user or data error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import AutoPathError
from .evalbench import (
    K_GRID,
    SynthSpec,
    binary_type_spec,
    holdout_split,
    make_pairs,
    random_scorer,
    run_link_prediction,
    synth_network,
)
from .gradcheck import COMPONENTS, run_gradcheck, to_json_lines
from .hetnet import load_labels, load_network_dir, load_pairs, save_labels, save_network, save_pairs
from .planner import brute_force_table, extract_metapaths, metapath_tsv, rank_from_scores, similarity_scores
from .trainer import Hyperparams, load_config, train, write_metrics

log = logging.getLogger("autopath")

EXIT_OK, EXIT_USER, EXIT_VERIFY = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # usage errors are user errors; exit code 2 is reserved for verification
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER, f"{self.prog}: error: {message}\n")


def _hyper(args) -> Hyperparams:
    hp = load_config(args.config) if getattr(args, "config", None) else Hyperparams()
    if getattr(args, "seed", None) is not None:
        hp = hp.replace(seed=args.seed)
    if getattr(args, "workers", None) is not None:
        hp = hp.replace(workers=args.workers)
    return hp


def _require(path: Path) -> Path:
    if not path.exists():
        raise AutoPathError(f"missing {path}")
    return path


def _write(text: str, out) -> None:
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    spec = binary_type_spec(args.seed) if args.binary else SynthSpec(seed=args.seed)
    net, labels = synth_network(spec)
    out = Path(args.out)
    save_network(net, out)
    save_labels(labels, net, out / "labels.tsv")
    rng = np.random.default_rng([args.seed, 6])
    pos, neg = make_pairs(labels, args.pairs, rng)
    train_pairs, test = holdout_split(labels, pos, args.holdout, rng)
    if not args.directed_pairs:
        train_pairs = train_pairs.symmetric()
    save_pairs(train_pairs, net, out / "pairs.tsv")
    save_pairs(neg, net, out / "negatives.tsv")
    (out / "test_nodes.tsv").write_text("".join(f"{net.node_names[v]}\n" for v in test), encoding="utf-8")
    print(f"wrote {net.n_nodes} nodes, {net.n_edges} edges, {len(train_pairs)} training pairs, "
          f"{len(test)} test nodes to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    data = Path(args.data)
    hp = _hyper(args)
    net = load_network_dir(data, symmetrize=args.symmetrize)
    pairs = load_pairs(_require(data / "pairs.tsv"), net)
    for key, count in net.load_warnings.items():
        log.warning("%s: %d", key, count)
    model, metrics = train(net, pairs, hp)
    out = Path(args.out)
    save_checkpoint(model, out)
    write_metrics(metrics, out / "metrics.jsonl")
    last = metrics[-1] if metrics else {}
    print(f"trained {len(metrics)} epochs, final mean reward {last.get('mean_reward', float('nan')):.4f}; "
          f"checkpoint in {out}")
    return EXIT_OK


def _scores(args):
    model = load_checkpoint(args.checkpoint)
    if args.seed is not None:
        model.hyper = model.hyper.replace(seed=args.seed)
    s = model.net.node_id(args.start)
    scores = similarity_scores(model, s, args.N)
    cands = [int(v) for v in model.net.type_members[model.net.type_of(s)] if v != s]
    return model, scores, cands


def cmd_score(args) -> int:
    model, scores, cands = _scores(args)
    names = model.net.node_names
    lines = ["node\tscore"] + [f"{names[v]}\t{scores.get(v, 0.0):.6f}" for v in sorted(cands)]
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_rank(args) -> int:
    model, scores, cands = _scores(args)
    names = model.net.node_names
    ranked = rank_from_scores(scores, cands)
    lines = ["rank\tnode\tscore"] + [f"{i}\t{names[v]}\t{sc:.6f}" for i, (v, sc) in enumerate(ranked, 1)]
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _read_names(path: Path, net) -> list:
    return [net.node_id(line.split("\t")[0].strip()) for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip() and not line.startswith("#")]


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    if args.seed is not None:
        model.hyper = model.hyper.replace(seed=args.seed)
    data = Path(args.data)
    labels = load_labels(_require(data / "labels.tsv"), model.net)
    test = _read_names(_require(data / "test_nodes.tsv"), model.net)
    k_grid = tuple(int(k) for k in args.k.split(",")) if args.k else K_GRID
    seed = model.hyper.seed
    scorer = None
    if args.random_scorer:
        scorer = random_scorer(labels.nodes(), seed)
    report = run_link_prediction(model, labels, test, k_grid, args.N, scorer=scorer, seed=seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "curves.tsv").write_text(report.curves_tsv(), encoding="utf-8")
    tag = "random-scorer" if args.random_scorer else "autopath"
    print(f"{tag} AUC {report.auc:.4f} +- {report.auc_std:.4f} (pair AUC {report.pair_auc:.4f}) "
          f"over {report.n_test} test nodes in {report.seconds:.1f}s")
    if args.random_scorer:
        ok = abs(report.auc - 0.5) <= 0.05
        print(f"sanity: random AUC within 0.5 +- 0.05: {'yes' if ok else 'NO'}")
    return EXIT_OK


def cmd_paths(args) -> int:
    model = load_checkpoint(args.checkpoint)
    if args.seed is not None:
        model.hyper = model.hyper.replace(seed=args.seed)
    net = model.net
    if args.starts:
        starts = [net.node_id(s) for s in args.starts.split(",")]
    elif model.pairs is not None:
        starts = model.pairs.starts.tolist()
    else:
        raise AutoPathError("no start nodes: pass --starts or train with pairs")
    stats = extract_metapaths(model, starts, N=args.N, stop=args.stop)
    oracle = None
    if args.oracle is not None:
        stop = args.stop or model.hyper.plan_stop
        if stop == "type":
            targets_of = {s: set(net.type_members[net.type_of(s)].tolist()) - {s} for s in starts}
        else:
            targets_of = {s: model.pairs.targets_of.get(s, set()) for s in starts}
        oracle = brute_force_table(net, sorted(set(starts)), targets_of, args.oracle)
    _write(metapath_tsv(stats, net, oracle), args.out)
    if stats and args.out not in (None, "-"):
        print(f"top meta-path: {stats[0].describe(net)}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = run_gradcheck(seed=args.seed or 0, corrupt=args.corrupt)
    sys.stdout.write(to_json_lines(results))
    failed = [r["component"] for r in results if not r["passed"]]
    if failed:
        print(f"gradient check failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="autopath", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True):
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        if config:
            sp.add_argument("--config", help="key = value config file (see README)")
            sp.add_argument("--workers", type=int, default=None, help="threads for scoring")

    sp = sub.add_parser("synth", help="generate a planted-structure network with pairs and labels")
    sp.add_argument("out", help="output data directory")
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--pairs", type=int, default=2000, help="positive pairs to sample")
    sp.add_argument("--holdout", type=float, default=0.1, help="fraction of labeled nodes held out")
    sp.add_argument("--binary", action="store_true", help="small all-binary two-type network instead")
    sp.add_argument("--directed-pairs", action="store_true", help="do not add reversed training pairs")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="pretrain, co-train and write a checkpoint")
    sp.add_argument("data", help="directory with nodes.tsv, edges.tsv, content_<type>.tsv, pairs.tsv")
    sp.add_argument("out", help="checkpoint directory")
    sp.add_argument("--symmetrize", action="store_true", help="add the reverse of every edge")
    common(sp)
    sp.set_defaults(func=cmd_train)

    for name, func, help_ in (("score", cmd_score, "similarity scores of one start node"),
                              ("rank", cmd_rank, "ranked candidates for one start node")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("checkpoint")
        sp.add_argument("start", help="start node id as in nodes.tsv")
        sp.add_argument("-N", type=int, default=None, help="rollouts (default n_rollouts from config)")
        sp.add_argument("-o", "--out", default=None, help="output TSV (default stdout)")
        common(sp, config=False)
        sp.set_defaults(func=func)

    sp = sub.add_parser("eval", help="held-out link-prediction evaluation")
    sp.add_argument("checkpoint")
    sp.add_argument("data", help="directory with labels.tsv and test_nodes.tsv")
    sp.add_argument("out", help="directory for report.json and curves.tsv")
    sp.add_argument("-N", type=int, default=None, help="rollouts per test node")
    sp.add_argument("--k", default=None, help="comma-separated K grid")
    sp.add_argument("--random-scorer", action="store_true", help="score with uniform noise (sanity baseline)")
    common(sp, config=False)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("paths", help="most frequent meta-paths of successful rollouts")
    sp.add_argument("checkpoint")
    sp.add_argument("-N", type=int, default=10000, help="rollouts (default 10000)")
    sp.add_argument("--starts", default=None, help="comma-separated start node ids (default: pair starts)")
    sp.add_argument("--stop", choices=("type", "none"), default=None, help="what counts as reaching a target")
    sp.add_argument("--oracle", type=int, default=None, metavar="L",
                    help="add exhaustive-enumeration columns for walks of at most L nodes")
    sp.add_argument("-o", "--out", default=None, help="output TSV (default stdout)")
    common(sp, config=False)
    sp.set_defaults(func=cmd_paths)

    sp = sub.add_parser("gradcheck", help="finite-difference check of all gradients (JSON lines)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--corrupt", choices=sorted(COMPONENTS), default=None,
                    help="test hook: perturb one component's analytic gradient")
    sp.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (AutoPathError, ValueError, OSError) as exc:
        print(f"autopath {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
