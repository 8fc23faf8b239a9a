import math

import numpy as np
import pytest

import bunet


def test_losses_at_perfect_overlap():
    mask = np.array([1.0, 0.0, 1.0, 0.0])
    assert bunet.soft_dsc(mask, mask) == pytest.approx(1.0)
    assert bunet.dice_loss(mask, mask) == pytest.approx(0.0, abs=1e-9)
    assert bunet.cos_dice_from_dsc(1.0, 1.7) == 0.0
    assert bunet.cos_dice_from_dsc(0.0, 1.7) == 1.0


def test_cos_dice_matches_closed_form():
    rng = np.random.default_rng(3)
    pred = rng.uniform(size=100)
    mask = (rng.uniform(size=100) > 0.5).astype(float)
    d = bunet.soft_dsc(pred, mask)
    assert bunet.cos_dice_loss(pred, mask, 2.0) == pytest.approx(math.cos(math.pi / 2 * d) ** 2, rel=1e-9)


def test_loss_gradient_chain_rule():
    rng = np.random.default_rng(5)
    pred = rng.uniform(0.1, 0.9, size=(2, 1, 4, 4))
    mask = (rng.uniform(size=pred.shape) > 0.5).astype(float)
    _, d, g_cos = bunet.loss_gradient(pred, mask, "cosdice", 1.7)
    _, _, g_dice = bunet.loss_gradient(pred, mask, "dice")
    assert g_cos.shape == pred.shape
    np.testing.assert_allclose(g_cos, bunet.cos_dice_weight(d, 1.7) * g_dice, rtol=1e-9)


def test_bad_q_raises():
    with pytest.raises(bunet.ConfigError):
        bunet.loss_gradient(np.ones(4), np.ones(4), "cosdice", 0.5)


def test_fusion_variance():
    add = bunet.fusion_variance("add", 100_000)
    cat = bunet.fusion_variance("concat", 100_000)
    assert abs(add["variance"] - 2.0) < 4 * add["standard_error"]
    assert abs(cat["variance"] - 1.0) < 4 * cat["standard_error"]


def test_metrics_on_shifted_cube():
    a = np.zeros((6, 10, 10), dtype=np.uint8)
    b = np.zeros_like(a)
    a[1:5, 2:6, 2:6] = 1
    b[1:5, 2:6, 3:7] = 1
    assert bunet.vdsc(a, a) == 1.0
    assert bunet.vdsc(a, b) == pytest.approx(0.75)
    assert bunet.hausdorff(a, b) == pytest.approx(1.0)
    assert bunet.hausdorff(a, b, spacing=(1.0, 1.0, 2.0)) == pytest.approx(2.0)
    assert bunet.ravd(a, b) == pytest.approx(0.0)
    with pytest.raises(bunet.MetricUndefined):
        bunet.hausdorff(a, np.zeros_like(a))


def test_parse_mhd():
    h = bunet.parse_mhd(
        "NDims = 3\nDimSize = 8 6 4\nElementType = MET_SHORT\nElementSpacing = 0.5 0.5 2\nElementDataFile = a.raw\n"
    )
    assert h["shape"] == (4, 6, 8)
    assert h["spacing"] == (2.0, 0.5, 0.5)
    with pytest.raises(bunet.DataError):
        bunet.parse_mhd("NDims = 3\n")


def test_gen_synthetic_is_reproducible():
    first = bunet.gen_synthetic(3, 32, 11)
    second = bunet.gen_synthetic(3, 32, 11)
    assert len(first) == 3
    for (i1, m1), (i2, m2) in zip(first, second):
        assert i1.shape == (32, 32)
        np.testing.assert_array_equal(i1, i2)
        np.testing.assert_array_equal(m1, m2)
        assert set(np.unique(m1)) <= {0.0, 1.0}


def test_model_summary_cluster3():
    s = bunet.model_summary()
    assert s["clusters"] == 18
    assert s["relu_clusters"] == {4, 5, 13, 14}
    relu_layers = [layer for layer, _, act in s["layers"] if act == "relu"]
    assert relu_layers == [7, 8, 9, 10, 25, 26, 27, 28]
    with pytest.raises(bunet.ConfigError):
        bunet.model_summary(size=60)
