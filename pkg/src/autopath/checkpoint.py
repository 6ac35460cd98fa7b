"""Checkpoint directory: header.json, config.txt, .npy arrays and a copy of the network."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .agent import LAYER_NAMES, AgentParams
from .embedder import EmbedderParams, FrozenEncoder
from .errors import DataError
from .hetnet import load_network_dir, load_pairs, save_network, save_pairs
from .nn import DenseLayer
from .trainer import Hyperparams, Model, parse_config


def _save_arrays(directory: Path, arrays: dict) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for name, arr in arrays.items():
        np.save(directory / f"{name}.npy", np.ascontiguousarray(arr), allow_pickle=False)


def _load(directory: Path, name: str) -> np.ndarray:
    path = directory / f"{name}.npy"
    if not path.exists():
        raise DataError(f"checkpoint is missing {path}")
    return np.load(path, allow_pickle=False)


def _layer(directory: Path, prefix: str) -> DenseLayer:
    return DenseLayer(_load(directory, f"{prefix}.W"), _load(directory, f"{prefix}.b"))


def save_checkpoint(model: Model, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    net = model.net
    header = {
        "kappa": model.kappa,
        "H": model.agent.shared.out_dim,
        "H_e": model.embedder.hidden,
        "K": net.n_types,
        "types": [{"name": t.name, "content_dim": t.content_dim, "content_kind": t.content_kind} for t in net.types],
        "n_nodes": net.n_nodes,
        "config_hash": model.hyper.config_hash(),
    }
    (d / "header.json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (d / "config.txt").write_text(model.hyper.to_text(), encoding="utf-8")
    np.save(d / "X.npy", model.X, allow_pickle=False)
    _save_arrays(d / "agent", model.agent.arrays())
    _save_arrays(d / "embedder", model.embedder.arrays(encoder=False))
    _save_arrays(d / "encoder", model.encoder.arrays())
    save_network(net, d / "network")
    with open(d / "id_map.tsv", "w", encoding="utf-8") as fh:
        for i, name in enumerate(net.node_names):
            fh.write(f"{i}\t{name}\n")
    if model.pairs is not None:
        save_pairs(model.pairs, net, d / "pairs.tsv")


def load_checkpoint(directory) -> Model:
    d = Path(directory)
    if not (d / "header.json").exists():
        raise DataError(f"{d} is not a checkpoint directory (no header.json)")
    header = json.loads((d / "header.json").read_text(encoding="utf-8"))
    hyper = parse_config((d / "config.txt").read_text(encoding="utf-8"), Hyperparams())
    net = load_network_dir(d / "network")
    if net.n_nodes != header["n_nodes"] or net.n_types != header["K"]:
        raise DataError("checkpoint network does not match its header")
    X = np.load(d / "X.npy", allow_pickle=False)
    agent = AgentParams(*(_layer(d / "agent", name) for name in LAYER_NAMES))
    K = header["K"]
    enc = FrozenEncoder([_layer(d / "encoder", f"enc_type.{k}") for k in range(K)], _layer(d / "encoder", "enc_shared"))
    emb = EmbedderParams(
        [DenseLayer(l.W.copy(), l.b.copy()) for l in enc.enc_type],
        DenseLayer(enc.enc_shared.W.copy(), enc.enc_shared.b.copy()),
        _layer(d / "embedder", "dec_shared"),
        [_layer(d / "embedder", f"dec_type.{k}") for k in range(K)],
        _load(d / "embedder", "W_c"),
        [t["content_kind"] for t in header["types"]],
    )
    pairs = load_pairs(d / "pairs.tsv", net) if (d / "pairs.tsv").exists() else None
    return Model(net, X, agent, emb, enc, hyper, pairs)
