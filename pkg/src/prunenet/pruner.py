"""Row/column slicing of FFN and attention weights under a compression plan."""
import enum
from dataclasses import dataclass, field

import numpy as np

from . import policy as pol
from .errors import ConfigError, ShapeError
from .model import AttentionWeights, FFNWeights, Layer, Layout
from .policy import keep_count


class PruneTarget(str, enum.Enum):
    FFN = "ffn"
    ATTN = "attn"
    BOTH = "both"


class Selector(str, enum.Enum):
    POLICY = "policy"
    RANDOM = "random"
    TOPK = "topk"


@dataclass(frozen=True)
class CompressionPlan:
    per_layer_ratio: tuple
    target: PruneTarget = PruneTarget.FFN
    selector: Selector = Selector.POLICY
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "per_layer_ratio", tuple(float(r) for r in self.per_layer_ratio))
        object.__setattr__(self, "target", PruneTarget(self.target))
        object.__setattr__(self, "selector", Selector(self.selector))
        for r in self.per_layer_ratio:
            if not 0.0 <= r < 1.0:
                raise ConfigError(f"compression ratio must lie in [0, 1), got {r}")

    @classmethod
    def uniform(cls, ratio, n_layers, **kwargs):
        return cls((ratio,) * n_layers, **kwargs)

    @property
    def prunes_ffn(self):
        return self.target in (PruneTarget.FFN, PruneTarget.BOTH)

    @property
    def prunes_attn(self):
        return self.target in (PruneTarget.ATTN, PruneTarget.BOTH)


def planned_layout(config, plan):
    """Shapes ``compress_model`` would produce for a dense model of ``config``."""
    L = config.n_layers
    if len(plan.per_layer_ratio) != L:
        raise ConfigError(f"plan lists {len(plan.per_layer_ratio)} ratios for {L} layers")
    heads = config.n_heads
    ffn_rows = tuple(
        keep_count(config.d_intermediate, r) if plan.prunes_ffn else config.d_intermediate
        for r in plan.per_layer_ratio
    )
    attn_dims = tuple(
        heads * keep_count(config.d_hidden // heads, r) if plan.prunes_attn else config.d_hidden
        for r in plan.per_layer_ratio
    )
    return Layout(config, ffn_rows, attn_dims)


def _check_index_set(kept, n):
    kept = np.asarray(kept, dtype=np.int64).ravel()
    if kept.size == 0:
        raise ConfigError("kept index set is empty")
    if kept.min() < 0 or kept.max() >= n:
        raise IndexError(f"kept index out of range [0, {n})")
    if np.unique(kept).size != kept.size:
        raise ConfigError("kept index set has duplicates")
    return np.sort(kept)


def prune_ffn_layer(ffn, kept):
    """Keep rows ``kept`` of w_up / w_gate / b_up and the matching columns of w_down."""
    kept = _check_index_set(kept, ffn.n_rows)
    return FFNWeights(
        w_up=ffn.w_up[kept],
        w_down=ffn.w_down[:, kept],
        w_gate=None if ffn.w_gate is None else ffn.w_gate[kept],
        b_up=None if ffn.b_up is None else ffn.b_up[kept],
        b_down=None if ffn.b_down is None else ffn.b_down.copy(),
    )


def prune_attention_layer(attn, kept, n_heads=1):
    """Keep inner channels ``kept``: rows of w_q/w_k/w_v, columns of w_o.

    Every head must keep the same number of channels so the inner width
    still reshapes into ``n_heads`` equal heads.
    """
    kept = _check_index_set(kept, attn.d_attn)
    if attn.d_attn % n_heads:
        raise ShapeError(f"d_attn {attn.d_attn} not divisible by {n_heads} heads")
    head_dim = attn.d_attn // n_heads
    per_head = np.bincount(kept // head_dim, minlength=n_heads)
    if np.any(per_head != per_head[0]):
        raise ConfigError(f"kept channels per head differ: {per_head.tolist()}")
    return AttentionWeights(attn.w_q[kept], attn.w_k[kept], attn.w_v[kept], attn.w_o[:, kept])


@dataclass
class CompressionResult:
    model: object
    kept: list  # per layer FFN kept rows (None when FFN untouched)
    ks: list  # per layer FFN KS distance
    attn_kept: list = field(default_factory=list)
    attn_ks: list = field(default_factory=list)

    def __iter__(self):
        # unpacks as (model, kept, ks)
        return iter((self.model, self.kept, self.ks))

    def plan_record(self, plan):
        layers = []
        for i, layer in enumerate(self.model.layers):
            layers.append({
                "layer": i,
                "ratio": plan.per_layer_ratio[i],
                "ffn_kept_rows": layer.ffn.n_rows,
                "ks_distance": self.ks[i],
                "attn_kept_dims": layer.attention.d_attn,
                "attn_ks_distance": self.attn_ks[i] if self.attn_ks else None,
            })
        return {
            "target": plan.target.value,
            "selector": plan.selector.value,
            "seed": plan.seed,
            "per_layer_ratio": list(plan.per_layer_ratio),
            "layers": layers,
        }


def _select(w_state, keep, plan, policy, rng, groups):
    n = w_state.shape[0]
    if keep == n:
        return np.arange(n)
    if plan.selector is Selector.RANDOM:
        return pol.random_selection(n, keep, rng, groups)
    if policy is None:
        raise ConfigError(f"selector {plan.selector.value!r} needs a policy")
    if plan.selector is Selector.TOPK:
        return pol.topk_selection(pol.importance_scores(w_state, policy), keep, groups)
    return pol.select_rows(w_state, policy, keep, rng, groups).kept


def _ks(w_state, kept):
    if kept.size == w_state.shape[0]:
        return 0.0
    return pol.layer_penalty(w_state, w_state[kept], "ks")


def compress_model(model, policy, plan, attn_policy=None):
    """Prune every layer according to ``plan``; returns a :class:`CompressionResult`.

    ``policy`` scores FFN rows, ``attn_policy`` scores attention channels.
    Both are required only for the policy and top-k selectors.
    """
    cfg = model.config
    if len(plan.per_layer_ratio) != cfg.n_layers:
        raise ConfigError(f"plan lists {len(plan.per_layer_ratio)} ratios for {cfg.n_layers} layers")
    if plan.selector is not Selector.RANDOM:
        if plan.prunes_ffn and policy is None:
            raise ConfigError(f"selector {plan.selector.value!r} needs an FFN policy")
        if plan.prunes_attn and attn_policy is None:
            raise ConfigError(f"selector {plan.selector.value!r} needs an attention policy")
    elif policy is not None and plan.prunes_ffn:
        raise ConfigError("random selector takes no policy")

    layers, kept_all, ks_all, attn_kept, attn_ks = [], [], [], [], []
    for i, layer in enumerate(model.layers):
        ratio = plan.per_layer_ratio[i]
        ffn, attn = layer.ffn, layer.attention
        kept, ks = None, 0.0
        if plan.prunes_ffn:
            w = np.asarray(ffn.w_up, dtype=np.float64)
            rng = np.random.default_rng([plan.seed, pol.PRUNE_STREAM, 0, i])
            kept = _select(w, keep_count(ffn.n_rows, ratio), plan, policy, rng, 1)
            ks = _ks(w, kept)
            ffn = prune_ffn_layer(ffn, kept)
        if plan.prunes_attn:
            w = np.asarray(attn.w_o, dtype=np.float64).T
            heads = cfg.n_heads
            keep = heads * keep_count(attn.d_attn // heads, ratio)
            rng = np.random.default_rng([plan.seed, pol.PRUNE_STREAM, 1, i])
            a_kept = _select(w, keep, plan, attn_policy, rng, heads)
            attn_ks.append(_ks(w, a_kept))
            attn_kept.append(a_kept)
            attn = prune_attention_layer(attn, a_kept, heads)
        kept_all.append(kept)
        ks_all.append(ks)
        layers.append(Layer(attn, ffn))
    return CompressionResult(model.with_layers(layers), kept_all, ks_all, attn_kept, attn_ks)

