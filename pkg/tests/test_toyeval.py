import math

import numpy as np
import pytest

from prunenet.errors import ShapeError
from prunenet.model import AttentionWeights, FFNWeights, Layer, Model, ModelConfig, synthesize_model
from prunenet.pruner import CompressionPlan, compress_model, prune_ffn_layer
from prunenet.toyeval import ffn_forward, layer_norm, model_forward, output_drift


def test_ffn_zero_weights_with_bias():
    ffn = FFNWeights(np.zeros((4, 2)), np.zeros((2, 4)), None, np.full(4, 0.7), np.zeros(2))
    assert not ffn_forward(ffn, np.ones((1, 3, 2)), "gelu").any()


def test_ffn_scalar_silu():
    ffn = FFNWeights(np.array([[1.0]]), np.array([[1.0]]))
    out = ffn_forward(ffn, np.array([[[2.0]]]), "silu")
    assert out[0, 0, 0] == pytest.approx(2.0 / (1.0 + math.exp(-2.0)))
    assert out[0, 0, 0] == pytest.approx(1.7616, abs=1e-4)


def test_ffn_scalar_gelu():
    ffn = FFNWeights(np.array([[1.0]]), np.array([[1.0]]))
    out = ffn_forward(ffn, np.array([[[1.0]]]), "gelu")
    assert out[0, 0, 0] == pytest.approx(0.5 * (1 + math.erf(1 / math.sqrt(2))), rel=1e-12)


def test_ffn_gated_formula():
    rng = np.random.default_rng(0)
    up, gate, down = rng.standard_normal((5, 3)), rng.standard_normal((5, 3)), rng.standard_normal((3, 5))
    x = rng.standard_normal((2, 4, 3))
    silu = lambda v: v / (1 + np.exp(-v))
    expected = (silu(x @ gate.T) * (x @ up.T)) @ down.T
    np.testing.assert_allclose(ffn_forward(FFNWeights(up, down, gate), x, "silu"), expected, rtol=1e-12)


def test_ffn_shape_and_errors():
    rng = np.random.default_rng(1)
    ffn = FFNWeights(rng.standard_normal((6, 3)), rng.standard_normal((3, 6)))
    assert ffn_forward(ffn, rng.standard_normal((2, 5, 3))).shape == (2, 5, 3)
    with pytest.raises(ShapeError):
        ffn_forward(ffn, rng.standard_normal((2, 5, 4)))


@pytest.mark.parametrize("gated", [False, True])
def test_masked_equals_pruned(gated):
    rng = np.random.default_rng(2)
    n, d = 10, 4
    ffn = FFNWeights(
        rng.standard_normal((n, d)),
        rng.standard_normal((d, n)),
        rng.standard_normal((n, d)) if gated else None,
        None if gated else rng.standard_normal(n),
        None if gated else rng.standard_normal(d),
    )
    kept = np.array([0, 3, 4, 7, 9])
    mask = np.zeros(n)
    mask[kept] = 1
    x = rng.standard_normal((3, 6, d))
    np.testing.assert_allclose(
        ffn_forward(prune_ffn_layer(ffn, kept), x), ffn_forward(ffn, x, hidden_mask=mask), atol=1e-6
    )


def test_layer_norm_constant_row_finite():
    out = layer_norm(np.full((1, 2, 4), 3.0))
    assert np.all(out == 0)


def test_zero_model_is_identity():
    cfg = ModelConfig(4, 8, 2, 3, n_heads=2)
    z = lambda *s: np.zeros(s, np.float32)
    layer = Layer(AttentionWeights(z(4, 4), z(4, 4), z(4, 4), z(4, 4)), FFNWeights(z(8, 4), z(4, 8)))
    model = Model(cfg, [layer, layer], z(3, 4), z(3, 4))
    x = np.random.default_rng(3).standard_normal((2, 5, 4)).astype(np.float32)
    assert np.array_equal(model_forward(model, x), x)


def test_causality(tiny_model):
    x = np.random.default_rng(4).standard_normal((1, 6, 8)).astype(np.float32)
    y = x.copy()
    y[0, 4:] += 1.0
    a, b = model_forward(tiny_model, x), model_forward(tiny_model, y)
    np.testing.assert_array_equal(a[0, :4], b[0, :4])
    assert not np.allclose(a[0, 4:], b[0, 4:])


def test_r0_bit_identical_and_shapes(tiny_model):
    x = np.random.default_rng(5).standard_normal((2, 7, 8)).astype(np.float32)
    same = compress_model(tiny_model, None, CompressionPlan.uniform(0.0, 3, selector="random")).model
    assert model_forward(same, x).tobytes() == model_forward(tiny_model, x).tobytes()
    pruned = compress_model(tiny_model, None, CompressionPlan.uniform(0.3, 3, target="both", selector="random")).model
    out = model_forward(pruned, x)
    assert out.shape == x.shape and np.all(np.isfinite(out))
    assert model_forward(pruned, x, apply_head=True).shape == (2, 7, 11)


def test_drift_identity_and_determinism(tiny_model):
    m = output_drift(tiny_model, tiny_model, n_probes=3, seed=1)
    assert m.mse == 0.0 and m.max_abs == 0.0
    assert m.cosine_mean == pytest.approx(1.0, abs=1e-12)
    pruned = compress_model(tiny_model, None, CompressionPlan.uniform(0.3, 3, selector="random")).model
    a = output_drift(tiny_model, pruned, n_probes=3, seed=2)
    assert a == output_drift(tiny_model, pruned, n_probes=3, seed=2)
    assert a.mse > 0 and a.max_abs > 0 and -1 <= a.cosine_mean <= 1


def test_drift_incompatible(tiny_model):
    other = synthesize_model(ModelConfig(4, 32, 3, 11), 0)
    with pytest.raises(ShapeError):
        output_drift(tiny_model, other)


def test_drift_monotone_in_ratio():
    cfg = ModelConfig(16, 64, 2, 5, n_heads=2)
    ratios = (0.1, 0.2, 0.3, 0.5)
    means = np.zeros(len(ratios))
    for seed in range(20):
        model = synthesize_model(cfg, seed)
        for i, r in enumerate(ratios):
            pruned = compress_model(model, None, CompressionPlan.uniform(r, 2, selector="random", seed=seed)).model
            means[i] += output_drift(model, pruned, n_probes=2, seed=seed).mse / 20
    assert np.all(np.diff(means) >= 0)
