"""Small dense-network kernel in float64 numpy.

Layers are plain (W, b) pairs, forward passes return an explicit cache and
backward passes consume it. Everything here works on a single vector or on a
batch of row vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BadLabel,
    DegenerateVariance,
    ShapeMismatch,
    StaleCache,
)

EPS_SIGMA = 1e-4
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class DenseLayer:
    W: np.ndarray  # (out_dim, in_dim)
    b: np.ndarray  # (out_dim,)

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    def checksum(self) -> float:
        return float(self.W.sum()) + float(self.b.sum())

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.W.copy(), self.b.copy())


def init_layer(in_dim: int, out_dim: int, rng: np.random.Generator, scale: float | None = None) -> DenseLayer:
    # He-normal for ReLU chains
    if scale is None:
        scale = np.sqrt(2.0 / in_dim)
    W = rng.normal(0.0, scale, size=(out_dim, in_dim))
    return DenseLayer(W, np.zeros(out_dim))


def relu(z):
    return np.maximum(z, 0.0)


def softplus(z):
    return np.logaddexp(0.0, z)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class MLPCache:
    layers: list
    inputs: list  # input to each layer, before dropout
    masks: list  # scaled keep-masks (None when dropout inactive)
    pre: list  # pre-activations
    final_relu: bool
    squeeze: bool
    checksums: tuple
    used: bool = field(default=False)


def mlp_forward(
    layers: Sequence[DenseLayer],
    x: np.ndarray,
    dropout_rate: float = 0.0,
    mode: str = "infer",
    rng: np.random.Generator | None = None,
    final_relu: bool = True,
    masks: Sequence[np.ndarray | None] | None = None,
):
    """Dropout -> affine -> ReLU for each layer.

    `masks` freezes the dropout pattern (one boolean keep-mask per layer, or
    None for no dropout at that layer); otherwise masks are drawn from `rng`
    in train mode. Inverted dropout: kept units are scaled by 1/(1-rate).
    """
    if not 0.0 <= dropout_rate < 1.0:
        raise ValueError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    h = np.asarray(x, dtype=np.float64)
    squeeze = h.ndim == 1
    if squeeze:
        h = h[None, :]
    if masks is not None and len(masks) != len(layers):
        raise ShapeMismatch("one dropout mask per layer is required")

    inputs, used_masks, pres = [], [], []
    n = len(layers)
    for i, layer in enumerate(layers):
        if h.shape[1] != layer.in_dim:
            raise ShapeMismatch(f"layer {i} expects {layer.in_dim} inputs, got {h.shape[1]}")
        inputs.append(h)
        mask = None
        if masks is not None:
            if masks[i] is not None:
                keep = np.broadcast_to(np.asarray(masks[i], dtype=bool), h.shape)
                mask = keep / (1.0 - dropout_rate)
        elif mode == "train" and dropout_rate > 0.0:
            if rng is None:
                raise ValueError("train-mode dropout needs an rng")
            mask = (rng.random(h.shape) >= dropout_rate) / (1.0 - dropout_rate)
        used_masks.append(mask)
        hd = h * mask if mask is not None else h
        z = hd @ layer.W.T + layer.b
        pres.append(z)
        h = relu(z) if (final_relu or i < n - 1) else z

    cache = MLPCache(
        layers=list(layers),
        inputs=inputs,
        masks=used_masks,
        pre=pres,
        final_relu=final_relu,
        squeeze=squeeze,
        checksums=tuple(layer.checksum() for layer in layers),
    )
    return (h[0] if squeeze else h), cache


def mlp_backward(cache: MLPCache, upstream_grad: np.ndarray):
    """Reverse pass. Returns ([(dW, db), ...], input_grad); grads sum over the batch."""
    if cache.used:
        raise StaleCache("cache already consumed by a backward pass")
    current = tuple(layer.checksum() for layer in cache.layers)
    if current != cache.checksums:
        raise StaleCache("layer parameters changed since the forward pass")
    cache.used = True

    g = np.asarray(upstream_grad, dtype=np.float64)
    if cache.squeeze:
        g = g[None, :]
    n = len(cache.layers)
    grads = [None] * n
    for i in range(n - 1, -1, -1):
        layer = cache.layers[i]
        z = cache.pre[i]
        if cache.final_relu or i < n - 1:
            g = g * (z > 0.0)
        mask = cache.masks[i]
        hd = cache.inputs[i] * mask if mask is not None else cache.inputs[i]
        grads[i] = (g.T @ hd, g.sum(axis=0))
        g = g @ layer.W
        if mask is not None:
            g = g * mask
    return grads, (g[0] if cache.squeeze else g)


def softmax_cross_entropy(logits: np.ndarray, label):
    """Loss -log softmax(logits)[label] and its gradient wrt logits.

    Accepts one logit vector with an int label, or a (B, C) batch with a label
    array (per-row losses returned).
    """
    z = np.asarray(logits, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z[None, :]
    labels = np.atleast_1d(np.asarray(label))
    if labels.shape[0] != z.shape[0]:
        raise ShapeMismatch("one label per logit row")
    if np.any(labels < 0) or np.any(labels >= z.shape[1]):
        raise BadLabel(f"label out of range for {z.shape[1]} classes")
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z.shape[0])
    loss = lse - shifted[rows, labels]
    grad = np.exp(shifted - lse[:, None])
    grad[rows, labels] -= 1.0
    if single:
        return float(loss[0]), grad[0]
    return loss, grad


@dataclass
class GaussianPolicyOutput:
    mean: np.ndarray
    variance: np.ndarray


def gaussian_log_prob(a: np.ndarray, out: GaussianPolicyOutput, eps_sigma: float = EPS_SIGMA):
    """Diagonal-Gaussian log density with partials wrt mean and variance.

    Works row-wise for batches; logp has one entry per row.
    """
    a = np.asarray(a, dtype=np.float64)
    mu = np.asarray(out.mean, dtype=np.float64)
    var = np.asarray(out.variance, dtype=np.float64)
    if a.shape != mu.shape or mu.shape != var.shape:
        raise ShapeMismatch(f"shapes differ: a{a.shape} mean{mu.shape} var{var.shape}")
    # tolerance for the rounding in softplus(raw) + eps
    if np.any(var < eps_sigma * (1.0 - 1e-9)) or not np.all(np.isfinite(var)):
        raise DegenerateVariance("variance below eps_sigma")
    diff = a - mu
    sq = diff * diff / var
    logp = -0.5 * (LOG_2PI + np.log(var) + sq).sum(axis=-1)
    grad_mean = diff / var
    grad_var = 0.5 * (sq - 1.0) / var
    if np.ndim(logp) == 0:
        logp = float(logp)
    return logp, grad_mean, grad_var


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, rows: dict | None = None):
    """One bias-corrected Adam update, in place on `params`.

    `rows` maps a parameter name to unique row indices; its gradient then holds
    only those rows and only those rows (and their moments) are touched.
    Parameters missing from `grads` are left alone.
    """
    rows = rows or {}
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for name, g in grads.items():
        p = params[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        idx = rows.get(name)
        if idx is None:
            if g.shape != p.shape:
                raise ShapeMismatch(f"{name}: grad {g.shape} vs param {p.shape}")
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        else:
            if g.shape != (len(idx),) + p.shape[1:]:
                raise ShapeMismatch(f"{name}: row grad {g.shape} vs {len(idx)} rows of {p.shape}")
            m[idx] = state.beta1 * m[idx] + (1.0 - state.beta1) * g
            v[idx] = state.beta2 * v[idx] + (1.0 - state.beta2) * g * g
            p[idx] -= state.lr * (m[idx] / c1) / (np.sqrt(v[idx] / c2) + state.eps)
    return params, state


def finite_diff_check(
    loss_fn: Callable[[], float],
    params: Sequence[np.ndarray],
    analytic: Sequence[np.ndarray],
    h: float = 1e-5,
    max_coords: int = 40,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic grads and central differences.

    `loss_fn` reads the arrays in `params` (perturbed in place) and must be
    deterministic. Up to `max_coords` coordinates per array are sampled.
    Relative error is |ga - gn| / max(|ga| + |gn|, 1e-8) so that matching
    zeros count as exact.
    """
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.reshape(-1)
        gflat = np.asarray(ga).reshape(-1)
        if flat.size != gflat.size:
            raise ShapeMismatch("analytic gradient shape differs from parameter")
        if flat.size <= max_coords:
            coords = np.arange(flat.size)
        else:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for c in coords:
            old = flat[c]
            flat[c] = old + h
            fp = loss_fn()
            flat[c] = old - h
            fm = loss_fn()
            flat[c] = old
            gn = (fp - fm) / (2.0 * h)
            denom = abs(gflat[c]) + abs(gn)
            if denom < 1e-8:
                continue
            # tiny gradients where both sides sit at rounding level
            if abs(gflat[c] - gn) < 1e-9:
                continue
            worst = max(worst, abs(gflat[c] - gn) / denom)
    return worst
