"""Policy learner: row importance scores, stochastic row selection and REINFORCE training.

The learner holds two matrices shared by every layer. For a state matrix
``W`` (n rows, d columns) it scores rows with
``sigmoid(w_proj @ (W @ w_inter.T))``, perturbs the scores with logistic
noise, and draws the kept rows from the normalized perturbed scores.
"""
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .errors import ConfigError, ShapeError
from .optim import AdamWHyper, AdamWState, adamw_update, global_norm

CLAMP = 1e-7

# substream tags, so initialization, training and pruning never share draws
_INIT_STREAM = 0
_TRAIN_STREAM = 1
PRUNE_STREAM = 2


class Target(str, enum.Enum):
    FFN = "ffn"
    ATTN = "attn"


def keep_count(n, ratio):
    """round((1 - ratio) * n), halves rounded away from zero."""
    if not 0.0 <= ratio < 1.0:
        raise ConfigError(f"compression ratio must lie in [0, 1), got {ratio}")
    k = int(math.floor((1.0 - ratio) * n + 0.5))
    if k < 1:
        raise ConfigError(f"ratio {ratio} keeps no rows out of {n}")
    return min(k, n)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _logit(p):
    return np.log(p) - np.log1p(-p)


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


@dataclass
class PolicyParams:
    w_inter: np.ndarray  # (n, d)
    w_proj: np.ndarray  # (1, n)

    def __post_init__(self):
        self.w_inter = np.asarray(self.w_inter, dtype=np.float64)
        self.w_proj = np.asarray(self.w_proj, dtype=np.float64)
        if self.w_inter.ndim != 2:
            raise ShapeError(f"w_inter must be 2-D, got {self.w_inter.shape}")
        if self.w_proj.shape != (1, self.w_inter.shape[0]):
            raise ShapeError(f"w_proj must be (1, {self.w_inter.shape[0]}), got {self.w_proj.shape}")

    @property
    def n(self):
        return self.w_inter.shape[0]

    @property
    def d(self):
        return self.w_inter.shape[1]

    @classmethod
    def initialize(cls, n, d, seed):
        rng = np.random.default_rng([seed, _INIT_STREAM])
        w_inter = rng.standard_normal((n, d)) / math.sqrt(d)
        w_proj = rng.standard_normal((1, n)) / math.sqrt(n)
        return cls(w_inter, w_proj)

    def as_dict(self):
        return {"w_inter": self.w_inter, "w_proj": self.w_proj}

    def copy(self):
        return PolicyParams(self.w_inter.copy(), self.w_proj.copy())

    def check_state(self, w):
        if w.ndim != 2 or w.shape != (self.n, self.d):
            raise ShapeError(f"state matrix shape {w.shape} does not match policy ({self.n}, {self.d})")


@dataclass
class SelectionOutcome:
    importance: np.ndarray
    perturbed: np.ndarray
    epsilon: np.ndarray
    kept: np.ndarray  # ascending
    log_prob: float


@dataclass
class EpisodeStats:
    per_layer_penalty: np.ndarray
    returns: np.ndarray
    loss: float
    grad_norm: float

    def to_dict(self):
        return {
            "per_layer_penalty": [float(x) for x in self.per_layer_penalty],
            "returns": [float(x) for x in self.returns],
            "loss": float(self.loss),
            "grad_norm": float(self.grad_norm),
        }


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    learning_rate: float = 5e-4
    episodes: int = 20
    compression_ratio: float = 0.3
    seed: int = 0
    reward_kind: str = "ks"
    target: Target = Target.FFN
    adamw: AdamWHyper = field(default_factory=AdamWHyper)

    def __post_init__(self):
        object.__setattr__(self, "target", Target(self.target))
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.episodes < 0:
            raise ConfigError(f"episodes must be non-negative, got {self.episodes}")
        if not 0.0 < self.compression_ratio < 1.0:
            raise ConfigError(f"compression ratio must lie in (0, 1), got {self.compression_ratio}")
        if self.reward_kind not in spectral.DISTANCES:
            raise ConfigError(f"reward_kind must be one of {sorted(spectral.DISTANCES)}")

    def keep_count(self, n, groups=1):
        """Kept rows for width ``n``; must drop at least one and keep at least one."""
        k = groups * keep_count(n // groups, self.compression_ratio)
        if k >= n:
            raise ConfigError(f"ratio {self.compression_ratio} removes no rows out of {n}")
        return k


# ---------------------------------------------------------------------------
# scoring and selection


def importance_scores(w_up, policy):
    """Per-row importance in (0, 1): sigmoid(w_proj @ (w_up @ w_inter.T))."""
    w_up = np.asarray(w_up, dtype=np.float64)
    policy.check_state(w_up)
    # (w_proj @ w_up) @ w_inter.T equals w_proj @ (w_up @ w_inter.T) without the n x n product
    return sigmoid((policy.w_proj @ w_up) @ policy.w_inter.T).ravel()


def perturb_importance(importance, epsilon, clamp=CLAMP):
    """sigmoid(logit(eps) + logit(importance)), arguments clamped to [clamp, 1 - clamp]."""
    importance = np.asarray(importance, dtype=np.float64)
    epsilon = np.asarray(epsilon, dtype=np.float64)
    if importance.shape != epsilon.shape:
        raise ShapeError(f"importance {importance.shape} and epsilon {epsilon.shape} differ")
    c = np.clip(importance, clamp, 1.0 - clamp)
    e = np.clip(epsilon, clamp, 1.0 - clamp)
    return sigmoid(_logit(e) + _logit(c))


def _check_groups(n, keep, groups):
    if groups < 1 or n % groups:
        raise ShapeError(f"{n} entries cannot be split into {groups} equal groups")
    if keep % groups:
        raise ConfigError(f"keep count {keep} is not divisible by {groups} groups")
    return n // groups, keep // groups


def sample_indices(perturbed, keep_count, rng, groups=1):
    """Weighted sampling without replacement (Gumbel-top-k on log weights).

    With ``groups > 1`` the index range is split into equal contiguous blocks
    and ``keep_count / groups`` indices are drawn inside each block.
    """
    w = np.asarray(perturbed, dtype=np.float64).ravel()
    n = w.size
    if not 1 <= keep_count <= n:
        raise ConfigError(f"keep_count must lie in [1, {n}], got {keep_count}")
    block, per_block = _check_groups(n, keep_count, groups)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    with np.errstate(divide="ignore"):
        keys = (np.log(w) + rng.gumbel(size=n)).reshape(groups, block)
    if np.any(np.all(np.isneginf(keys), axis=1)):
        raise ValueError("all-zero weights")
    order = np.argsort(-keys, axis=1, kind="stable")[:, :per_block]
    if np.any(np.isneginf(np.take_along_axis(keys, order, axis=1))):
        raise ValueError("fewer positive weights than requested indices")
    kept = (order + block * np.arange(groups)[:, None]).ravel()
    return np.sort(kept)


def selection_log_prob(perturbed, kept, groups=1):
    """sum over kept i of log p_i, p the perturbed weights normalized within each group."""
    w = np.asarray(perturbed, dtype=np.float64).ravel()
    kept = np.asarray(kept, dtype=np.int64).ravel()
    if kept.size and (kept.min() < 0 or kept.max() >= w.size):
        raise IndexError("selected index out of range")
    block, _ = _check_groups(w.size, kept.size, groups)
    totals = w.reshape(groups, block).sum(axis=1)
    return float(np.sum(np.log(w[kept]) - np.log(totals[kept // block])))


def random_selection(n, keep_count, rng, groups=1):
    """Uniform random subset of ``keep_count`` distinct indices, ascending."""
    if not 1 <= keep_count <= n:
        raise ConfigError(f"keep_count must lie in [1, {n}], got {keep_count}")
    block, per_block = _check_groups(n, keep_count, groups)
    picks = [g * block + rng.choice(block, size=per_block, replace=False) for g in range(groups)]
    return np.sort(np.concatenate(picks))


def topk_selection(importance, keep_count, groups=1):
    """Indices of the largest scores (ties to the lower index), ascending."""
    s = np.asarray(importance, dtype=np.float64).ravel()
    n = s.size
    if not 1 <= keep_count <= n:
        raise ConfigError(f"keep_count must lie in [1, {n}], got {keep_count}")
    block, per_block = _check_groups(n, keep_count, groups)
    order = np.argsort(-s.reshape(groups, block), axis=1, kind="stable")[:, :per_block]
    return np.sort((order + block * np.arange(groups)[:, None]).ravel())


def select_rows(w_state, policy, keep, rng, groups=1):
    """Score, perturb and sample one layer's kept rows."""
    importance = importance_scores(w_state, policy)
    epsilon = np.clip(rng.random(importance.size), CLAMP, 1.0 - CLAMP)
    perturbed = perturb_importance(importance, epsilon)
    kept = sample_indices(perturbed, keep, rng, groups)
    return SelectionOutcome(importance, perturbed, epsilon, kept, selection_log_prob(perturbed, kept, groups))


# ---------------------------------------------------------------------------
# REINFORCE


def discounted_returns(penalties, gamma):
    """G_l = D_l + gamma * G_{l+1}, accumulated from the last layer backwards."""
    d = np.asarray(penalties, dtype=np.float64).ravel()
    if d.size == 0:
        raise ValueError("no penalties")
    if not 0.0 <= gamma <= 1.0:
        raise ConfigError(f"gamma must lie in [0, 1], got {gamma}")
    out = np.empty_like(d)
    acc = 0.0
    for i in range(d.size - 1, -1, -1):
        acc = d[i] + gamma * acc
        out[i] = acc
    return out


def reinforce_loss(policy, states, epsilons, kept_sets, returns, groups=1):
    """Surrogate loss and its exact gradient, with noise, selections and returns held fixed.

    loss = mean over layers of G_l * log P(S_l). Descending this loss lowers
    the probability of selections in proportion to the penalty they incurred.
    Returns ``(loss, {"w_inter": ..., "w_proj": ...})``.
    """
    grad_inter = np.zeros_like(policy.w_inter)
    grad_proj = np.zeros(policy.n)
    loss = 0.0
    n_layers = len(states)
    for w, eps, kept, g_ret in zip(states, epsilons, kept_sets, returns):
        w = np.asarray(w, dtype=np.float64)
        policy.check_state(w)
        v = (policy.w_proj @ w).ravel()  # (d,)
        z = policy.w_inter @ v  # (n,)
        imp = sigmoid(z)
        c = np.clip(imp, CLAMP, 1.0 - CLAMP)
        y = _logit(np.clip(eps, CLAMP, 1.0 - CLAMP)) + _logit(c)
        pert = sigmoid(y)
        log_pert = _log_sigmoid(y)

        block, per_block = _check_groups(pert.size, len(kept), groups)
        totals = pert.reshape(groups, block).sum(axis=1)
        log_p = float(np.sum(log_pert[kept]) - per_block * np.sum(np.log(totals)))
        coef = g_ret / n_layers
        loss += coef * log_p

        # d log_p / d pert
        d_pert = -per_block / np.repeat(totals, block)
        d_pert[kept] += 1.0 / pert[kept]
        # through sigmoid(y), logit(clamp(imp)) and sigmoid(z)
        unclamped = (imp > CLAMP) & (imp < 1.0 - CLAMP)
        d_z = coef * d_pert * pert * (1.0 - pert) * unclamped * imp * (1.0 - imp) / (c * (1.0 - c))
        grad_inter += np.outer(d_z, v)
        grad_proj += w @ (policy.w_inter.T @ d_z)
    grads = {"w_inter": grad_inter, "w_proj": grad_proj.reshape(1, -1)}
    return loss, grads


def policy_states(model, target=Target.FFN):
    """Per-layer state matrices whose rows the policy scores."""
    target = Target(target)
    if target is Target.FFN:
        return [np.asarray(layer.ffn.w_up, dtype=np.float64) for layer in model.layers]
    return [np.asarray(layer.attention.w_o, dtype=np.float64).T for layer in model.layers]


def target_groups(model, target):
    return model.config.n_heads if Target(target) is Target.ATTN else 1


def layer_penalty(reference, sliced, reward_kind="ks"):
    """Distance between singular-value samples of an original and a sliced matrix."""
    ref = reference if isinstance(reference, np.ndarray) and reference.ndim == 1 else spectral.singular_values(reference).values
    return spectral.DISTANCES[reward_kind](ref, spectral.singular_values(sliced).values)


def policy_gradient(model, policy, config, episode=0, reference_spectra=None):
    """Run one episode over all layers and return ``(grads, EpisodeStats)``."""
    states = policy_states(model, config.target)
    groups = target_groups(model, config.target)
    if not states:
        raise ConfigError("model has no layers")
    if reference_spectra is None:
        reference_spectra = [spectral.singular_values(w).values for w in states]
    epsilons, kept_sets, penalties = [], [], []
    for l, w in enumerate(states):
        policy.check_state(w)
        rng = np.random.default_rng([config.seed, _TRAIN_STREAM, episode, l])
        outcome = select_rows(w, policy, config.keep_count(w.shape[0], groups), rng, groups)
        epsilons.append(outcome.epsilon)
        kept_sets.append(outcome.kept)
        penalties.append(layer_penalty(reference_spectra[l], w[outcome.kept], config.reward_kind))
    penalties = np.asarray(penalties)
    returns = discounted_returns(penalties, config.gamma)
    loss, grads = reinforce_loss(policy, states, epsilons, kept_sets, returns, groups)
    norm = global_norm(grads)
    if not (math.isfinite(loss) and math.isfinite(norm)):
        raise FloatingPointError("non-finite policy gradient")
    return grads, EpisodeStats(penalties, returns, loss, norm)


def train_policy(model, config, policy=None):
    """Run ``config.episodes`` REINFORCE + AdamW episodes. Returns ``(policy, history)``."""
    states = policy_states(model, config.target)
    if not states:
        raise ConfigError("model has no layers")
    n, d = states[0].shape
    if policy is None:
        policy = PolicyParams.initialize(n, d, config.seed)
    else:
        policy = policy.copy()
    reference = [spectral.singular_values(w).values for w in states]
    state = AdamWState()
    params = policy.as_dict()
    history = []
    for episode in range(config.episodes):
        grads, stats = policy_gradient(model, policy, config, episode, reference)
        adamw_update(params, grads, state, config.adamw, config.learning_rate)
        history.append(stats)
    return policy, history
