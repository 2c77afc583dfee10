"""Smoke tests for the python bindings against numpy oracles."""

import math

import numpy as np
import pytest

import macft


def test_matmul_matches_numpy():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(5, 7))
    b = rng.normal(size=(7, 4))
    got = macft.matmul(a, b)
    np.testing.assert_allclose(got, a @ b, rtol=0, atol=1e-12)


def test_softmax_matches_numpy():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 6)) * 3.0
    got = macft.softmax(x, axis=1)
    e = np.exp(x - x.max(axis=1, keepdims=True))
    want = e / e.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)
    np.testing.assert_allclose(np.asarray(got).sum(axis=1), 1.0, atol=1e-12)


def test_layer_norm_matches_numpy():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(4, 8))
    gamma = rng.normal(size=8)
    beta = rng.normal(size=8)
    got = macft.layer_norm(x, gamma, beta, 1e-6)
    mean = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    want = (x - mean) / np.sqrt(var + 1e-6) * gamma + beta
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


def test_gelu_fixture():
    got = np.asarray(macft.gelu(np.array([[1.0, 0.5, -1.0]])))
    want = np.array([[0.8411919906082768, 0.34571400982514394, -0.15880800939172324]])
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-15)


def test_conv2d_identity_kernel():
    rng = np.random.default_rng(6)
    img = rng.normal(size=(5, 5, 2))
    kernel = np.zeros((1, 1, 2, 2))
    kernel[0, 0, 0, 0] = 1.0
    kernel[0, 0, 1, 1] = 1.0
    got = macft.conv2d(img, kernel, stride=1, padding=0)
    np.testing.assert_allclose(got, img, rtol=0, atol=0)


def test_soft_argmax_uniform_and_peak():
    x, y = macft.soft_argmax(np.zeros((6, 6)))
    assert x == pytest.approx(0.5, abs=1e-12)
    assert y == pytest.approx(0.5, abs=1e-12)
    m = np.zeros((4, 4))
    m[1, 2] = 1000.0
    x, y = macft.soft_argmax(m)
    assert x == pytest.approx(2.5 / 4.0, abs=1e-6)
    assert y == pytest.approx(1.5 / 4.0, abs=1e-6)


def test_positional_table_spot_values():
    t = np.asarray(macft.sinusoid_pos_table(4, 4, 8))
    assert t.shape == (16, 8)
    assert t[1, 0] == pytest.approx(math.sin(1.0), abs=1e-15)
    assert t[1, 2] == pytest.approx(math.cos(1.0), abs=1e-15)


def test_divergence_fixture_and_nonnegativity():
    got = macft.kl_divergence(np.zeros((1, 2)), np.array([[0.0, math.log(3.0)]]))
    assert got == pytest.approx(0.14384103622589042, abs=1e-12)
    rng = np.random.default_rng(7)
    for _ in range(100):
        a = rng.normal(size=(2, 5))
        b = rng.normal(size=(2, 5))
        assert macft.kl_divergence(a, b) >= -1e-12


def test_box_losses():
    a = [1.0, 1.0, 2.0, 2.0]
    b = [2.0, 2.0, 2.0, 2.0]
    assert macft.giou_loss(a, b) == pytest.approx(68.0 / 63.0, abs=1e-14)
    assert macft.l1_box_loss(a, b) == pytest.approx(0.5, abs=1e-15)
    assert macft.box_loss(a, b) == pytest.approx(
        2.0 * 68.0 / 63.0 + 5.0 * 0.5, abs=1e-13
    )
    assert macft.box_loss(a, a) == 0.0


def test_repair_box_clamps_degenerate_extents():
    assert macft.repair_box([0.5, 0.5, -0.2, 0.4]) == [0.5, 0.5, 1e-3, 0.4]


def test_metrics_fixture():
    gts = np.array([[0, 0, 10, 10]] * 4, dtype=float)
    preds = np.array(
        [[0, 0, 10, 10], [3, 4, 10, 10], [6, 8, 10, 10], [15, 20, 10, 10]], dtype=float
    )
    assert macft.cle([3, 4, 10, 10], [0, 0, 10, 10]) == 5.0
    assert macft.iou([0, 0, 10, 10], [0, 0, 10, 10]) == 1.0
    thresholds, values, pr20 = macft.precision_curve(preds, gts)
    assert len(thresholds) == len(values) == 51
    assert pr20 == 0.75
    thresholds, values, auc, sr50 = macft.success_curve(gts, gts)
    assert all(v == 1.0 for v in values)
    assert auc == pytest.approx(1.0, abs=1e-14)  # trapezoid accumulation ulp
    assert sr50 == 1.0
    assert macft.mean_iou(gts, gts) == 1.0


def test_model_predict_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(11)
    z = rng.uniform(size=(16, 16, 3))
    x = rng.uniform(size=(32, 32, 3))
    model = macft.Model(variant="full", seed=77, fusion_k=2)
    assert model.variant == "full"
    assert model.param_count > 0
    box = model.predict(z, x, z, x)
    assert len(box) == 4
    assert 0.0 <= box[0] <= 1.0 and 0.0 <= box[1] <= 1.0
    assert box[2] > 0.0 and box[3] > 0.0

    path = str(tmp_path / "model.ckpt")
    model.save(path)
    twin = macft.Model(variant="full", seed=78, fusion_k=2)
    assert twin.predict(z, x, z, x) != box
    twin.load(path)
    assert twin.predict(z, x, z, x) == box


def test_single_modality_model_ignores_missing_stream():
    rng = np.random.default_rng(12)
    z = rng.uniform(size=(16, 16, 3))
    x = rng.uniform(size=(32, 32, 3))
    empty = np.zeros((0,))
    model = macft.Model(variant="b-rgb", seed=5, fusion_k=2)
    box = model.predict(z, x, empty, empty)
    assert box[2] > 0.0
