"""Forward passes for (pruned) toy models and output-drift measurement."""
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import erf

from .errors import ShapeError
from .model import Activation

LN_EPS = 1e-5


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)).astype(x.dtype))


def silu(x):
    return x / (1.0 + np.exp(-x))


ACTIVATIONS = {Activation.GELU: gelu, Activation.SILU: silu}


def _check_batch(x, d_hidden):
    if x.ndim != 3 or x.shape[-1] != d_hidden:
        raise ShapeError(f"expected activations [B, N, {d_hidden}], got {x.shape}")


def ffn_forward(ffn, x, activation=Activation.GELU, hidden_mask=None):
    """Two-matrix: act(x W_up^T + b_up) W_down^T + b_down.
    Gated: (act(x W_gate^T) * x W_up^T) W_down^T.

    ``hidden_mask`` (length n_rows) zeroes intermediate units, which is how
    a pruned layer is emulated on the unpruned weights.
    """
    _check_batch(x, ffn.d_hidden)
    act = ACTIVATIONS[Activation(activation)]
    up = x @ ffn.w_up.T
    if ffn.w_gate is not None:
        hidden = act(x @ ffn.w_gate.T) * up
    else:
        if ffn.b_up is not None:
            up = up + ffn.b_up
        hidden = act(up)
    if hidden_mask is not None:
        hidden = hidden * np.asarray(hidden_mask, dtype=hidden.dtype)
    out = hidden @ ffn.w_down.T
    if ffn.b_down is not None:
        out = out + ffn.b_down
    return out


def layer_norm(x, eps=LN_EPS):
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps)


def attention_forward(attn, x, n_heads):
    """Causal multi-head self-attention with 1/sqrt(head_dim) scaling."""
    B, N, _ = x.shape
    d_attn = attn.d_attn
    hd = d_attn // n_heads

    def heads(w):
        return (x @ w.T).reshape(B, N, n_heads, hd).transpose(0, 2, 1, 3)

    q, k, v = heads(attn.w_q), heads(attn.w_k), heads(attn.w_v)
    scores = q @ k.transpose(0, 1, 3, 2) / np.sqrt(hd).astype(x.dtype)
    future = np.triu(np.ones((N, N), dtype=bool), k=1)
    scores = np.where(future, -np.inf, scores)
    scores = scores - scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=-1, keepdims=True)
    ctx = (weights @ v).transpose(0, 2, 1, 3).reshape(B, N, d_attn)
    return ctx @ attn.w_o.T


def model_forward(model, x, apply_head=False):
    """Pre-norm blocks: y = x + Attn(LN(x)); z = y + FFN(LN(y)). Returns hidden states (or logits)."""
    cfg = model.config
    x = np.asarray(x)
    _check_batch(x, cfg.d_hidden)
    h = x
    for layer in model.layers:
        h = h + attention_forward(layer.attention, layer_norm(h), cfg.n_heads)
        h = h + ffn_forward(layer.ffn, layer_norm(h), cfg.activation)
    if apply_head:
        return layer_norm(h) @ model.head.T
    return h


@dataclass(frozen=True)
class DriftMetrics:
    mse: float
    max_abs: float
    cosine_mean: float

    def to_dict(self):
        return asdict(self)


def output_drift(original, compressed, n_probes=16, seed=0, batch=4, seq_len=32):
    """Compare hidden states of two models on shared standard-normal probe batches."""
    a_cfg, b_cfg = original.config, compressed.config
    if (a_cfg.d_hidden, a_cfg.n_layers, a_cfg.n_heads) != (b_cfg.d_hidden, b_cfg.n_layers, b_cfg.n_heads):
        raise ShapeError("models differ in d_hidden, layer count or head count")
    rng = np.random.default_rng(seed)
    sq_sum = 0.0
    count = 0
    max_abs = 0.0
    cos_sum = 0.0
    tokens = 0
    for _ in range(n_probes):
        x = rng.standard_normal((batch, seq_len, a_cfg.d_hidden)).astype(np.float32)
        ya = model_forward(original, x).astype(np.float64)
        yb = model_forward(compressed, x).astype(np.float64)
        diff = ya - yb
        sq_sum += float(np.sum(diff * diff))
        count += diff.size
        max_abs = max(max_abs, float(np.max(np.abs(diff))))
        na = np.linalg.norm(ya, axis=-1)
        nb = np.linalg.norm(yb, axis=-1)
        cos = np.sum(ya * yb, axis=-1) / np.maximum(na * nb, 1e-30)
        cos_sum += float(np.sum(np.clip(cos, -1.0, 1.0)))
        tokens += cos.size
    return DriftMetrics(sq_sum / count, max_abs, cos_sum / tokens)
