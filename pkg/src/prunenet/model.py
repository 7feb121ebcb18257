"""In-memory transformer weight bundles and synthetic model generation."""
import enum
import warnings
from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, ShapeError

DTYPE = np.float32


class FFNStyle(str, enum.Enum):
    TWO_MATRIX = "two_matrix"
    GATED = "gated"


class Activation(str, enum.Enum):
    GELU = "gelu"
    SILU = "silu"


@dataclass(frozen=True)
class ModelConfig:
    d_hidden: int
    d_intermediate: int
    n_layers: int
    vocab_size: int
    n_heads: int = 1
    ffn_style: FFNStyle = FFNStyle.TWO_MATRIX
    activation: Activation = Activation.GELU
    ffn_bias: bool = False

    def __post_init__(self):
        object.__setattr__(self, "ffn_style", FFNStyle(self.ffn_style))
        object.__setattr__(self, "activation", Activation(self.activation))
        for name in ("d_hidden", "d_intermediate", "vocab_size", "n_heads"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not isinstance(self.n_layers, (int, np.integer)) or self.n_layers < 0:
            raise ConfigError(f"n_layers must be a non-negative integer, got {self.n_layers!r}")
        if self.d_intermediate < self.d_hidden:
            raise ConfigError(
                f"d_intermediate ({self.d_intermediate}) must be >= d_hidden ({self.d_hidden})"
            )
        if self.d_intermediate == self.d_hidden:
            warnings.warn("d_intermediate == d_hidden: FFN does not expand", stacklevel=3)
        if self.d_hidden % self.n_heads:
            raise ConfigError(f"d_hidden ({self.d_hidden}) not divisible by n_heads ({self.n_heads})")
        if self.ffn_bias and self.ffn_style is FFNStyle.GATED:
            raise ConfigError("gated FFNs carry no biases")

    @property
    def gated(self):
        return self.ffn_style is FFNStyle.GATED

    def to_dict(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = value.value if isinstance(value, enum.Enum) else value
        return out

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        missing = known - set(data)
        if missing:
            raise ConfigError(f"config is missing fields: {sorted(missing)}")
        try:
            return cls(**{k: data[k] for k in known})
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def _check_matrix(name, arr, shape):
    if arr.ndim != len(shape) or arr.shape != tuple(shape):
        raise ShapeError(f"{name}: expected shape {tuple(shape)}, got {arr.shape}")


@dataclass(frozen=True)
class FFNWeights:
    w_up: np.ndarray
    w_down: np.ndarray
    w_gate: Optional[np.ndarray] = None
    b_up: Optional[np.ndarray] = None
    b_down: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.w_up.ndim != 2:
            raise ShapeError(f"w_up must be 2-D, got shape {self.w_up.shape}")
        n, d = self.w_up.shape
        _check_matrix("w_down", self.w_down, (d, n))
        if self.w_gate is not None:
            _check_matrix("w_gate", self.w_gate, (n, d))
        if self.b_up is not None:
            _check_matrix("b_up", self.b_up, (n,))
        if self.b_down is not None:
            _check_matrix("b_down", self.b_down, (d,))

    @property
    def n_rows(self):
        return self.w_up.shape[0]

    @property
    def d_hidden(self):
        return self.w_up.shape[1]


@dataclass(frozen=True)
class AttentionWeights:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray

    def __post_init__(self):
        if self.w_q.ndim != 2:
            raise ShapeError(f"w_q must be 2-D, got shape {self.w_q.shape}")
        d_attn, d = self.w_q.shape
        _check_matrix("w_k", self.w_k, (d_attn, d))
        _check_matrix("w_v", self.w_v, (d_attn, d))
        _check_matrix("w_o", self.w_o, (d, d_attn))

    @property
    def d_attn(self):
        return self.w_q.shape[0]


@dataclass(frozen=True)
class Layer:
    attention: AttentionWeights
    ffn: FFNWeights


@dataclass(frozen=True)
class Layout:
    """Tensor shapes of a (possibly pruned) model, without the weights.

    Lets the accounting code reason about billion-parameter configurations
    that could never be materialized here.
    """

    config: ModelConfig
    ffn_rows: tuple = ()
    attn_dims: tuple = ()

    def __post_init__(self):
        L = self.config.n_layers
        if not self.ffn_rows:
            object.__setattr__(self, "ffn_rows", (self.config.d_intermediate,) * L)
        if not self.attn_dims:
            object.__setattr__(self, "attn_dims", (self.config.d_hidden,) * L)
        if len(self.ffn_rows) != L or len(self.attn_dims) != L:
            raise ShapeError("layout widths must list one entry per layer")

    def shapes(self):
        cfg = self.config
        d = cfg.d_hidden
        yield "embed", (cfg.vocab_size, d)
        for i, (n, a) in enumerate(zip(self.ffn_rows, self.attn_dims)):
            for name in ("w_q", "w_k", "w_v"):
                yield f"layer.{i}.attn.{name}", (a, d)
            yield f"layer.{i}.attn.w_o", (d, a)
            yield f"layer.{i}.ffn.w_up", (n, d)
            yield f"layer.{i}.ffn.w_down", (d, n)
            if cfg.gated:
                yield f"layer.{i}.ffn.w_gate", (n, d)
            if cfg.ffn_bias:
                yield f"layer.{i}.ffn.b_up", (n,)
                yield f"layer.{i}.ffn.b_down", (d,)
        yield "head", (cfg.vocab_size, d)

    def param_count(self):
        return sum(int(np.prod(shape)) for _, shape in self.shapes())


@dataclass(frozen=True)
class Model:
    config: ModelConfig
    layers: tuple
    embed: np.ndarray
    head: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        cfg = self.config
        if len(self.layers) != cfg.n_layers:
            raise ShapeError(f"expected {cfg.n_layers} layers, got {len(self.layers)}")
        _check_matrix("embed", self.embed, (cfg.vocab_size, cfg.d_hidden))
        _check_matrix("head", self.head, (cfg.vocab_size, cfg.d_hidden))
        for i, layer in enumerate(self.layers):
            if layer.ffn.d_hidden != cfg.d_hidden or layer.attention.w_q.shape[1] != cfg.d_hidden:
                raise ShapeError(f"layer {i}: d_hidden differs from config ({cfg.d_hidden})")
            if (layer.ffn.w_gate is not None) != cfg.gated:
                raise ShapeError(f"layer {i}: w_gate presence disagrees with ffn_style")
            if (layer.ffn.b_up is not None, layer.ffn.b_down is not None) != (cfg.ffn_bias,) * 2:
                raise ShapeError(f"layer {i}: bias presence disagrees with ffn_bias")
            if layer.attention.d_attn % cfg.n_heads:
                raise ShapeError(f"layer {i}: d_attn not divisible by n_heads")

    @property
    def layout(self):
        return Layout(
            self.config,
            tuple(layer.ffn.n_rows for layer in self.layers),
            tuple(layer.attention.d_attn for layer in self.layers),
        )

    def tensors(self):
        """(name, array) pairs in canonical checkpoint order."""
        yield "embed", self.embed
        for i, layer in enumerate(self.layers):
            att, ffn = layer.attention, layer.ffn
            yield f"layer.{i}.attn.w_q", att.w_q
            yield f"layer.{i}.attn.w_k", att.w_k
            yield f"layer.{i}.attn.w_v", att.w_v
            yield f"layer.{i}.attn.w_o", att.w_o
            yield f"layer.{i}.ffn.w_up", ffn.w_up
            yield f"layer.{i}.ffn.w_down", ffn.w_down
            for name in ("w_gate", "b_up", "b_down"):
                value = getattr(ffn, name)
                if value is not None:
                    yield f"layer.{i}.ffn.{name}", value
        yield "head", self.head

    def with_layers(self, layers):
        return replace(self, layers=tuple(layers))


def as_layout(obj):
    if isinstance(obj, Layout):
        return obj
    if isinstance(obj, Model):
        return obj.layout
    if isinstance(obj, ModelConfig):
        return Layout(obj)
    raise TypeError(f"cannot derive a layout from {type(obj).__name__}")


def param_count(obj):
    """Total element count of every tensor (embeddings, head, attention, FFN, biases).

    Accepts a materialized :class:`Model` (counts actual arrays) or a
    :class:`ModelConfig` / :class:`Layout` (counts declared shapes).
    """
    if isinstance(obj, Model):
        return sum(int(arr.size) for _, arr in obj.tensors())
    return as_layout(obj).param_count()


def synthesize_model(config, seed):
    """Random model with N(0, 1/d_hidden) weights and zero biases; pure in (config, seed)."""
    if not isinstance(config, ModelConfig):
        raise ConfigError("synthesize_model needs a ModelConfig")
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(config.d_hidden)

    def draw(shape):
        return (rng.standard_normal(shape) * scale).astype(DTYPE)

    d, n = config.d_hidden, config.d_intermediate
    embed = draw((config.vocab_size, d))
    layers = []
    for _ in range(config.n_layers):
        attention = AttentionWeights(draw((d, d)), draw((d, d)), draw((d, d)), draw((d, d)))
        w_up = draw((n, d))
        w_down = draw((d, n))
        w_gate = draw((n, d)) if config.gated else None
        b_up = np.zeros(n, DTYPE) if config.ffn_bias else None
        b_down = np.zeros(d, DTYPE) if config.ffn_bias else None
        layers.append(Layer(attention, FFNWeights(w_up, w_down, w_gate, b_up, b_down)))
    head = draw((config.vocab_size, d))
    return Model(config, tuple(layers), embed, head)


def models_equal(a, b):
    """Bit-exact comparison of configs and every tensor."""
    if a.config != b.config:
        return False
    ta, tb = list(a.tensors()), list(b.tensors())
    if [name for name, _ in ta] != [name for name, _ in tb]:
        return False
    return all(
        x.dtype == y.dtype and x.shape == y.shape and x.tobytes() == y.tobytes()
        for (_, x), (_, y) in zip(ta, tb)
    )
