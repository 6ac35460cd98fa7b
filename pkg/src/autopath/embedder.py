"""Conjugate autoencoders: per-type outer layers, shared inner layers, and a
softmax type classifier on the shared embedding."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import Diverged, ShapeMismatch, UnknownType
from .hetnet import Network
from .nn import (
    AdamState,
    DenseLayer,
    adam_step,
    init_layer,
    mlp_backward,
    mlp_forward,
    sigmoid,
    softmax_cross_entropy,
)

log = logging.getLogger(__name__)

_PROB_CLIP = 1e-12


@dataclass
class EmbedderParams:
    enc_type: list  # per type: content_dim(k) -> H_e
    enc_shared: DenseLayer  # H_e -> kappa
    dec_shared: DenseLayer  # kappa -> H_e
    dec_type: list  # per type: H_e -> content_dim(k)
    W_c: np.ndarray  # (K, kappa)
    kinds: list

    @property
    def kappa(self) -> int:
        return self.enc_shared.out_dim

    @property
    def hidden(self) -> int:
        return self.enc_shared.in_dim

    @property
    def n_types(self) -> int:
        return len(self.enc_type)

    def arrays(self, encoder: bool = True, decoder: bool = True) -> dict:
        """Name -> array views, the layout used by Adam and checkpoints."""
        out = {}
        if encoder:
            for k, layer in enumerate(self.enc_type):
                out[f"enc_type.{k}.W"], out[f"enc_type.{k}.b"] = layer.W, layer.b
            out["enc_shared.W"], out["enc_shared.b"] = self.enc_shared.W, self.enc_shared.b
        if decoder:
            out["dec_shared.W"], out["dec_shared.b"] = self.dec_shared.W, self.dec_shared.b
            for k, layer in enumerate(self.dec_type):
                out[f"dec_type.{k}.W"], out[f"dec_type.{k}.b"] = layer.W, layer.b
            out["W_c"] = self.W_c
        return out

    def copy(self) -> "EmbedderParams":
        return EmbedderParams(
            [l.copy() for l in self.enc_type],
            self.enc_shared.copy(),
            self.dec_shared.copy(),
            [l.copy() for l in self.dec_type],
            self.W_c.copy(),
            list(self.kinds),
        )

    def encoder(self) -> "FrozenEncoder":
        return FrozenEncoder([l.copy() for l in self.enc_type], self.enc_shared.copy())


@dataclass
class FrozenEncoder:
    enc_type: list
    enc_shared: DenseLayer

    def __post_init__(self):
        for layer in [*self.enc_type, self.enc_shared]:
            layer.W.setflags(write=False)
            layer.b.setflags(write=False)

    def arrays(self) -> dict:
        out = {}
        for k, layer in enumerate(self.enc_type):
            out[f"enc_type.{k}.W"], out[f"enc_type.{k}.b"] = layer.W, layer.b
        out["enc_shared.W"], out["enc_shared.b"] = self.enc_shared.W, self.enc_shared.b
        return out


def init_embedder(net: Network, kappa: int, hidden: int, rng: np.random.Generator) -> EmbedderParams:
    enc_type = [init_layer(t.content_dim, hidden, rng) for t in net.types]
    enc_shared = init_layer(hidden, kappa, rng)
    dec_shared = init_layer(kappa, hidden, rng)
    dec_type = [init_layer(hidden, t.content_dim, rng) for t in net.types]
    W_c = rng.normal(0.0, 1.0 / np.sqrt(kappa), size=(len(net.types), kappa))
    return EmbedderParams(enc_type, enc_shared, dec_shared, dec_type, W_c, [t.content_kind for t in net.types])


def _check_type(params, type_id):
    if not 0 <= type_id < len(params.enc_type):
        raise UnknownType(f"type id {type_id} not in 0..{len(params.enc_type) - 1}")


def encode(params, content, type_id: int, mode: str = "infer", dropout_rate: float = 0.0, rng=None):
    """x = f_shared(f_type(a)), each a Dropout->affine->ReLU layer."""
    _check_type(params, type_id)
    content = np.asarray(content, dtype=np.float64)
    layer = params.enc_type[type_id]
    if content.shape[-1] != layer.in_dim:
        raise ShapeMismatch(f"type {type_id} content has dim {layer.in_dim}, got {content.shape[-1]}")
    x, _ = mlp_forward([layer, params.enc_shared], content, dropout_rate, mode, rng)
    return x


def reconstruct(params: EmbedderParams, x, type_id: int, mode: str = "infer", dropout_rate: float = 0.0, rng=None):
    _check_type(params, type_id)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.kappa:
        raise ShapeMismatch(f"embedding has dim {x.shape[-1]}, expected {params.kappa}")
    binary = params.kinds[type_id] == "binary"
    out, _ = mlp_forward([params.dec_shared, params.dec_type[type_id]], x, dropout_rate, mode, rng,
                         final_relu=not binary)
    return sigmoid(out) if binary else out


def recon_loss(content, reconstruction, kind: str) -> float:
    a = np.asarray(content, dtype=np.float64)
    r = np.asarray(reconstruction, dtype=np.float64)
    if a.shape != r.shape:
        raise ShapeMismatch(f"content {a.shape} vs reconstruction {r.shape}")
    if kind == "binary":
        r = np.clip(r, _PROB_CLIP, 1.0 - _PROB_CLIP)
        return float(-np.mean(a * np.log(r) + (1.0 - a) * np.log(1.0 - r)))
    return float(np.mean((a - r) ** 2))


def disc_loss(x, type_id: int, W_c: np.ndarray):
    """Softmax type classifier without bias. Returns (loss, {"W_c": ..., "x": ...})."""
    x = np.asarray(x, dtype=np.float64)
    logits = W_c @ x
    loss, g = softmax_cross_entropy(logits, type_id)
    return loss, {"W_c": np.outer(g, x), "x": W_c.T @ g}


@dataclass
class J2Result:
    loss: float
    recon: float
    disc: float
    grads: dict  # parameter name -> gradient
    x_grad: np.ndarray | None  # (len(nodes), kappa) when rows came from a table


def j2_loss(
    params: EmbedderParams,
    net: Network,
    nodes,
    lam: float = 0.1,
    X: np.ndarray | None = None,
    dropout_rate: float = 0.0,
    mode: str = "infer",
    rng: np.random.Generator | None = None,
) -> J2Result:
    """Batch mean of recon_loss + lam * disc_loss with gradients.

    With `X` the embeddings are the table rows X[nodes] and the encoder is not
    used (co-training); otherwise each node is encoded from its content
    (pre-training) and encoder gradients are returned too.
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    nodes = np.asarray(nodes, dtype=np.int64)
    B = len(nodes)
    types = net.node_types[nodes]
    grads = {name: np.zeros_like(arr) for name, arr in params.arrays(encoder=X is None).items()}
    x_grad = np.zeros((B, params.kappa)) if X is not None else None
    total_rec = total_disc = 0.0

    for k in np.unique(types):
        k = int(k)
        pos = np.flatnonzero(types == k)
        members = nodes[pos]
        a = net.contents[k][net.type_index[members]]
        if X is None:
            x, enc_cache = mlp_forward([params.enc_type[k], params.enc_shared], a, dropout_rate, mode, rng)
        else:
            x = X[members]
        binary = params.kinds[k] == "binary"
        z, dec_cache = mlp_forward([params.dec_shared, params.dec_type[k]], x, dropout_rate, mode, rng,
                                   final_relu=not binary)
        d = a.shape[1]
        if binary:
            rec = np.logaddexp(0.0, z) - a * z
            gz = (sigmoid(z) - a) / (d * B)
        else:
            diff = z - a
            rec = diff * diff
            gz = 2.0 * diff / (d * B)
        total_rec += rec.sum() / d

        logits = x @ params.W_c.T
        ce, gl = softmax_cross_entropy(logits, np.full(len(pos), k))
        total_disc += ce.sum()
        gl *= lam / B

        (gds, gdt), gx = mlp_backward(dec_cache, gz)
        grads["dec_shared.W"] += gds[0]
        grads["dec_shared.b"] += gds[1]
        grads[f"dec_type.{k}.W"] += gdt[0]
        grads[f"dec_type.{k}.b"] += gdt[1]
        grads["W_c"] += gl.T @ x
        gx = gx + gl @ params.W_c

        if X is None:
            (get, ges), _ = mlp_backward(enc_cache, gx)
            grads[f"enc_type.{k}.W"] += get[0]
            grads[f"enc_type.{k}.b"] += get[1]
            grads["enc_shared.W"] += ges[0]
            grads["enc_shared.b"] += ges[1]
        else:
            x_grad[pos] = gx

    recon = total_rec / B
    disc = total_disc / B
    return J2Result(recon + lam * disc, recon, disc, grads, x_grad)


def encode_all(params, net: Network) -> np.ndarray:
    X = np.zeros((net.n_nodes, params.kappa))
    for k, members in enumerate(net.type_members):
        if len(members):
            X[members] = encode(params, net.contents[k], k)
    return X


@dataclass
class PretrainResult:
    params: EmbedderParams
    X: np.ndarray
    epochs: int
    history: list


def pretrain(
    net: Network,
    kappa: int = 32,
    hidden: int = 64,
    lam: float = 0.1,
    batch_size: int = 2000,
    lr: float = 1e-3,
    dropout_rate: float = 0.2,
    max_epochs: int = 500,
    patience: int = 10,
    tol: float = 1e-3,
    rng: np.random.Generator | None = None,
    init_rng: np.random.Generator | None = None,
) -> PretrainResult:
    """Minimise J2 with Adam over shuffled minibatches.

    Stops once the relative improvement of the epoch-mean loss stays below
    `tol` for `patience` consecutive epochs, or after `max_epochs`.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    init_rng = init_rng if init_rng is not None else rng
    params = init_embedder(net, kappa, hidden, init_rng)
    arrays = params.arrays()
    adam = AdamState(lr=lr)
    history = []
    best = np.inf
    stall = 0
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(net.n_nodes)
        losses = []
        for lo in range(0, len(order), batch_size):
            batch = order[lo:lo + batch_size]
            res = j2_loss(params, net, batch, lam, dropout_rate=dropout_rate, mode="train", rng=rng)
            if not np.isfinite(res.loss):
                raise Diverged(f"J2 became non-finite at pretrain epoch {epoch}")
            adam_step(arrays, res.grads, adam)
            losses.append(res.loss * len(batch))
        mean = sum(losses) / net.n_nodes
        history.append(mean)
        if np.isfinite(best) and (best - mean) / max(abs(best), 1e-12) < tol:
            stall += 1
        else:
            stall = 0
        best = min(best, mean)
        if stall >= patience:
            break
    else:
        epoch = max_epochs
    log.info("pretrain stopped after %d epochs, J2 = %.4f", epoch, history[-1] if history else float("nan"))
    return PretrainResult(params, encode_all(params, net), epoch, history)


def embed_unseen(encoder, content, type_id: int) -> np.ndarray:
    """Infer-mode embedding of a node from its content alone."""
    return encode(encoder, content, type_id)


def reconstruction_accuracy(params: EmbedderParams, net: Network, X: np.ndarray | None = None) -> float:
    """Fraction of binary content bits reproduced after thresholding at 0.5."""
    X = encode_all(params, net) if X is None else X
    hit = total = 0
    for k, members in enumerate(net.type_members):
        if params.kinds[k] != "binary" or not len(members):
            continue
        rec = reconstruct(params, X[members], k)
        hit += np.sum((rec >= 0.5) == (net.contents[k] >= 0.5))
        total += rec.size
    return hit / total if total else float("nan")


def type_accuracy(params: EmbedderParams, net: Network, X: np.ndarray | None = None) -> float:
    X = encode_all(params, net) if X is None else X
    pred = np.argmax(X @ params.W_c.T, axis=1)
    return float(np.mean(pred == net.node_types))
