import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AdamWHyper:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01


@dataclass
class AdamWState:
    step: int = 0
    exp_avg: dict = field(default_factory=dict)
    exp_avg_sq: dict = field(default_factory=dict)

    def copy(self):
        return AdamWState(
            self.step,
            {k: v.copy() for k, v in self.exp_avg.items()},
            {k: v.copy() for k, v in self.exp_avg_sq.items()},
        )


def adamw_update(params, grads, state, hyper, lr):
    """One AdamW step, in place on ``params`` (name -> array) and ``state``.

    Weight decay is decoupled: parameters shrink by ``lr * weight_decay``
    before the bias-corrected Adam move, independent of the gradient.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name!r}")
    state.step += 1
    t = state.step
    bias1 = 1.0 - hyper.beta1**t
    bias2 = 1.0 - hyper.beta2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        m = state.exp_avg.setdefault(name, np.zeros_like(p))
        v = state.exp_avg_sq.setdefault(name, np.zeros_like(p))
        if hyper.weight_decay:
            p *= 1.0 - lr * hyper.weight_decay
        m *= hyper.beta1
        m += (1.0 - hyper.beta1) * g
        v *= hyper.beta2
        v += (1.0 - hyper.beta2) * g * g
        denom = np.sqrt(v / bias2) + hyper.eps
        p -= (lr / bias1) * m / denom


def global_norm(grads):
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
