"""Parameter, sparsity and FLOPs accounting."""
import csv
import io
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from .errors import ConfigError, ShapeError
from .model import as_layout, param_count

FLOPS_CONVENTION = (
    "2 FLOPs per multiply-accumulate over Q/K/V/O, FFN and LM-head matmuls per token, "
    "times seq_len, plus 4*L*seq_len^2*d_hidden for attention scores; embeddings, "
    "softmax and normalization excluded"
)
FLOPS_TOLERANCE_NOTE = "calibrated to within 10% of the dense LLaMA-2-7B figure at seq_len 1024"


def intrinsic_threshold(d_hidden, d_intermediate):
    """Smallest compression ratio at which adding a d x (1-r)d adapter per matrix still shrinks the model.

    (d_hidden + d_intermediate) / (5 d_hidden + 3 d_intermediate), evaluated exactly.
    """
    if d_hidden <= 0 or d_intermediate <= 0:
        raise ConfigError("dimensions must be positive")
    return float(Fraction(d_hidden + d_intermediate, 5 * d_hidden + 3 * d_intermediate))


def intrinsic_param_counts(config, r):
    """(P_uncompressed, P_compressed) for a model that slices one dimension of every
    attention and FFN matrix by ``r`` and carries learned adapters, two-matrix FFN assumed."""
    if not 0.0 <= r <= 1.0:
        raise ConfigError(f"r must lie in [0, 1], got {r}")
    if config.gated:
        warnings.warn("intrinsic parameter formula assumes a two-matrix FFN", stacklevel=2)
    d, di, L, V = config.d_hidden, config.d_intermediate, config.n_layers, config.vocab_size
    p = 1.0 - r
    shared = 2 * V * d
    uncompressed = shared + (4 * d * d + 2 * d * di) * L
    compressed = shared + (5 * p * d * d + 3 * p * d * di) * L
    return float(uncompressed), float(compressed)


def effective_sparsity(before, after):
    """1 - params(after) / params(before)."""
    total = param_count(before)
    if total == 0:
        raise ConfigError("model has no parameters")
    return 1.0 - param_count(after) / total


def flops_estimate(model_or_config, seq_len):
    """Forward-pass FLOPs for one sequence of ``seq_len`` tokens (see FLOPS_CONVENTION)."""
    if seq_len < 1:
        raise ConfigError("seq_len must be >= 1")
    layout = as_layout(model_or_config)
    cfg = layout.config
    d = cfg.d_hidden
    ffn_mats = 3 if cfg.gated else 2
    macs = cfg.vocab_size * d  # LM head
    for n, a in zip(layout.ffn_rows, layout.attn_dims):
        macs += 4 * a * d + ffn_mats * n * d
    return 2.0 * macs * seq_len + 4.0 * cfg.n_layers * seq_len**2 * d


@dataclass
class LayerRow:
    layer: int
    kept_rows: int
    ks_distance: float


@dataclass
class CompressionReport:
    sparsity_ratio: float
    effective_sparsity: float
    params_before: int
    params_after: int
    flops_before: float
    flops_after: float
    seq_len: int
    per_layer: list = field(default_factory=list)
    flops_convention: str = FLOPS_CONVENTION
    flops_calibration: str = FLOPS_TOLERANCE_NOTE

    @property
    def flops_ratio(self):
        return self.flops_before / self.flops_after

    def to_dict(self):
        out = asdict(self)
        out["flops_ratio"] = self.flops_ratio
        return out

    def layers_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["layer", "kept_rows", "ks_distance"])
        for row in self.per_layer:
            writer.writerow([row.layer, row.kept_rows, f"{row.ks_distance:.9g}"])
        return buf.getvalue()


def build_report(before, after, diagnostics=None, seq_len=1024, sparsity_ratio=None):
    """Assemble a report from the dense and compressed models (or layouts).

    ``diagnostics`` is a per-layer sequence of KS distances (or a plan record
    from :meth:`CompressionResult.plan_record`). ``sparsity_ratio`` defaults to
    the mean per-layer ratio of the plan record, else to the fraction of FFN
    rows removed.
    """
    lb, la = as_layout(before), as_layout(after)
    L = lb.config.n_layers
    if la.config.n_layers != L:
        raise ShapeError(f"layer counts differ: {L} vs {la.config.n_layers}")
    ks = [0.0] * L
    if isinstance(diagnostics, dict):
        ks = [row["ks_distance"] for row in diagnostics["layers"]]
        if sparsity_ratio is None and diagnostics.get("per_layer_ratio"):
            ratios = diagnostics["per_layer_ratio"]
            sparsity_ratio = sum(ratios) / len(ratios)
    elif diagnostics is not None:
        ks = [float(x) for x in diagnostics]
    if len(ks) != L:
        raise ShapeError(f"diagnostics list {len(ks)} layers, models have {L}")
    if sparsity_ratio is None:
        total = sum(lb.ffn_rows)
        sparsity_ratio = 1.0 - sum(la.ffn_rows) / total if total else 0.0
    rows = [LayerRow(i, int(n), float(k)) for i, (n, k) in enumerate(zip(la.ffn_rows, ks))]
    return CompressionReport(
        sparsity_ratio=float(sparsity_ratio),
        effective_sparsity=effective_sparsity(lb, la),
        params_before=param_count(lb),
        params_after=param_count(la),
        flops_before=flops_estimate(lb, seq_len),
        flops_after=flops_estimate(la, seq_len),
        seq_len=seq_len,
        per_layer=rows,
    )
