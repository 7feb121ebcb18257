import json
import warnings
from fractions import Fraction

import numpy as np
import pytest

from prunenet.analysis import (
    build_report,
    effective_sparsity,
    flops_estimate,
    intrinsic_param_counts,
    intrinsic_threshold,
)
from prunenet.errors import ConfigError, ShapeError
from prunenet.model import Layout, ModelConfig, synthesize_model
from prunenet.pruner import CompressionPlan, compress_model, planned_layout

LLAMA2_7B = ModelConfig(4096, 11008, 32, 32000, n_heads=32, ffn_style="gated", activation="silu")
PHI2 = ModelConfig(2560, 10240, 32, 51200, n_heads=32)


def test_threshold_values():
    assert intrinsic_threshold(2560, 10240) == pytest.approx(0.2941, abs=1e-4)
    assert intrinsic_threshold(2560, 10240) == float(Fraction(12800, 43520))
    assert intrinsic_threshold(64, 64) == 0.25
    assert intrinsic_threshold(4096, 11008) == pytest.approx(15104 / 53504, rel=1e-15)
    assert intrinsic_threshold(4096, 11008) == pytest.approx(0.2823, abs=1e-4)
    with pytest.raises(ConfigError):
        intrinsic_threshold(0, 4)


def test_intrinsic_counts_boundary():
    cfg = ModelConfig(96, 384, 4, 100)
    t = intrinsic_threshold(96, 384)
    unc, comp = intrinsic_param_counts(cfg, t)
    assert comp == pytest.approx(unc, rel=1e-12)
    unc0, comp0 = intrinsic_param_counts(cfg, 0.0)
    assert comp0 == 2 * 100 * 96 + (5 * 96**2 + 3 * 96 * 384) * 4 > unc0


def test_intrinsic_counts_phi2_below_threshold():
    unc, comp = intrinsic_param_counts(PHI2, 0.20)
    assert comp > unc


@pytest.mark.parametrize("dims", [(2560, 10240), (4096, 11008), (64, 65), (16, 80), (1000, 1001)])
def test_threshold_biconditional(dims):
    cfg = ModelConfig(dims[0], dims[1], 3, 50)
    t = intrinsic_threshold(*dims)
    for r in np.linspace(0, 1, 100):
        unc, comp = intrinsic_param_counts(cfg, r)
        if abs(r - t) > 1e-9:
            assert (r > t) == (comp < unc)


def test_intrinsic_counts_gated_warns():
    with pytest.warns(UserWarning):
        intrinsic_param_counts(LLAMA2_7B, 0.3)
    with pytest.raises(ConfigError):
        intrinsic_param_counts(PHI2, 1.5)


def test_effective_sparsity_llama():
    after = planned_layout(LLAMA2_7B, CompressionPlan.uniform(0.3, 32))
    assert after.ffn_rows[0] == 7706
    assert effective_sparsity(LLAMA2_7B, after) == pytest.approx(0.19, abs=0.01)
    assert effective_sparsity(LLAMA2_7B, LLAMA2_7B) == 0.0


def test_effective_sparsity_tiny_hand():
    cfg = ModelConfig(2, 4, 1, 3, ffn_bias=True)
    before = synthesize_model(cfg, 0)
    after = compress_model(before, None, CompressionPlan((0.5,), selector="random")).model
    # 50 params before; dropping 2 hidden units removes 2*2 (up) + 2*2 (down) + 2 (b_up)
    assert effective_sparsity(before, after) == pytest.approx(10 / 50)


def test_flops_llama():
    dense = flops_estimate(LLAMA2_7B, 1024)
    pruned = flops_estimate(planned_layout(LLAMA2_7B, CompressionPlan.uniform(0.3, 32)), 1024)
    assert abs(dense / 1.35e13 - 1) < 0.10
    assert abs(pruned / 1.09e13 - 1) < 0.10
    assert dense / pruned == pytest.approx(1.24, abs=0.05)


def test_flops_seq_len_superlinear():
    assert flops_estimate(PHI2, 2048) > 2 * flops_estimate(PHI2, 1024)
    with pytest.raises(ConfigError):
        flops_estimate(PHI2, 0)


def test_flops_ffn_reduction_exact():
    cfg = ModelConfig(16, 64, 2, 10)
    after = Layout(cfg, ffn_rows=(48, 64))
    assert flops_estimate(cfg, 8) - flops_estimate(after, 8) == 2 * 8 * (2 * 16 * 16)


def test_report_ratio_zero(tiny_model):
    plan = CompressionPlan.uniform(0.0, 3, selector="random")
    res = compress_model(tiny_model, None, plan)
    rep = build_report(tiny_model, res.model, res.plan_record(plan))
    assert rep.effective_sparsity == 0.0 and rep.flops_ratio == 1.0 and rep.sparsity_ratio == 0.0


def test_report_llama_pair():
    after = planned_layout(LLAMA2_7B, CompressionPlan.uniform(0.3, 32))
    rep = build_report(LLAMA2_7B, after, sparsity_ratio=0.3)
    assert rep.effective_sparsity == pytest.approx(0.19, abs=0.01)
    assert rep.flops_ratio == pytest.approx(1.24, abs=0.05)
    assert rep.params_after == round(rep.params_before * (1 - rep.effective_sparsity))
    json.dumps(rep.to_dict())


def test_report_random_plans_invariant(tiny_model):
    rng = np.random.default_rng(0)
    for i in range(50):
        plan = CompressionPlan(tuple(rng.uniform(0, 0.95, 3)), "ffn", "random", i)
        res = compress_model(tiny_model, None, plan)
        rep = build_report(tiny_model, res.model, res.plan_record(plan))
        assert 0.0 <= rep.effective_sparsity <= rep.sparsity_ratio + 1e-9
        assert rep.params_after == round(rep.params_before * (1 - rep.effective_sparsity))


def test_report_attention_rounding_bound(tiny_model):
    # head-uniform rounding can overshoot r by at most half a channel per head
    cfg = tiny_model.config
    d, heads = cfg.d_hidden, cfg.n_heads
    slack = cfg.n_layers * (0.5 * 2 * d + heads * 0.5 * 4 * d) / 2480
    rng = np.random.default_rng(1)
    for i in range(50):
        plan = CompressionPlan(tuple(rng.uniform(0, 0.8, 3)), "both", "random", i)
        res = compress_model(tiny_model, None, plan)
        rep = build_report(tiny_model, res.model, res.plan_record(plan))
        assert rep.params_before == 2480
        assert 0.0 <= rep.effective_sparsity <= rep.sparsity_ratio + slack


def test_report_csv_and_errors(tiny_model):
    rep = build_report(tiny_model, tiny_model, [0.1, 0.123456789012, 0.0])
    lines = rep.layers_csv().splitlines()
    assert lines[0] == "layer,kept_rows,ks_distance"
    assert lines[2] == "1,32,0.123456789"
    with pytest.raises(ShapeError):
        build_report(tiny_model, tiny_model, [0.1])
