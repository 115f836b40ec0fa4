import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import spearmanr

from scaleface.embeddings import CentroidMatrix, SyntheticSpec, generate_synthetic, normalize
from scaleface.errors import FormatError, NumericError, ShapeError
from scaleface.gradnet import finite_diff_check
from scaleface.scale_head import (
    ScaleHead, ScaleHeadConfig, TrainConfig, activate, head_forward, head_loss, load_head,
    predict_scales, save_head, train_head,
)

from conftest import unit


def zero_head(name, d=4):
    head = ScaleHead.init(d, ScaleHeadConfig.from_name(name), np.random.default_rng(0))
    for p in head.net.params():
        p[...] = 0.0
    return head


@pytest.mark.parametrize("name, expected", [("sigm_64", 32.0), ("exp", 1.0), ("shifted_sigm_32_64", 48.0)])
def test_zero_net_scales(name, expected, rng):
    s = head_forward(zero_head(name), unit(rng.normal(size=(5, 4))))
    np.testing.assert_array_equal(s, np.full(5, expected))


@pytest.mark.parametrize("name", ["exp", "sigm_64", "shifted_sigm_32_64", "relu_8"])
def test_activation_derivatives(name):
    cfg = ScaleHeadConfig.from_name(name)
    a = np.linspace(-3, 3, 13) + 0.05
    _, ds = activate(cfg, a)
    h = 1e-6
    fd = (activate(cfg, a + h)[0] - activate(cfg, a - h)[0]) / (2 * h)
    np.testing.assert_allclose(ds, fd, rtol=1e-6, atol=1e-6)


def test_shifted_sigmoid_range():
    s, _ = activate(ScaleHeadConfig.from_name("shifted_sigm_32_64"), np.array([-50.0, 50.0]))
    assert 32.0 <= s[0] < 32.001 and 63.999 < s[1] <= 64.0


def test_config_names():
    for name in ("exp", "sigm_64", "shifted_sigm_32_64", "relu_8", "sigm_32", "relu_1"):
        assert ScaleHeadConfig.from_name(name).name == name
    for bad in ("tanh", "sigm", "relu_x", "shifted_sigm_64_32"):
        with pytest.raises(ShapeError):
            ScaleHeadConfig.from_name(bad)
    with pytest.raises(ShapeError):
        ScaleHeadConfig(n_hidden=5)


def test_head_gradients(rng):
    for name in ("exp", "sigm_8", "shifted_sigm_2_6", "relu_1"):
        head = ScaleHead.init(4, ScaleHeadConfig.from_name(name, width=6), rng)
        for layer in head.net.layers:
            layer.bias[:] = rng.uniform(0.1, 0.5, size=layer.bias.shape)
        E = unit(rng.normal(size=(5, 4)))
        W = unit(rng.normal(size=(3, 4)))
        labels = rng.integers(0, 3, 5)

        def ev(ps):
            res, grads = head_loss(head, E, labels, W, 0.5)
            return res.loss, grads
        assert finite_diff_check(ev, head.net.params()).passed, name


def small_set(seed=0):
    emb, s, _ = generate_synthetic(SyntheticSpec(d=8, num_classes=4, per_class=40, seed=seed))
    return normalize(emb), s


def test_zero_epochs_is_noop():
    u, _ = small_set()
    cfg = ScaleHeadConfig.from_name("sigm_64", width=16)
    rep = train_head(u, u.labels, cfg, 0.5, TrainConfig(epochs=0, seed=4))
    fresh = ScaleHead.init(8, cfg, np.random.default_rng(np.random.SeedSequence(4).spawn(2)[0]))
    assert rep.losses == []
    for a, b in zip(rep.head.net.params(), fresh.net.params()):
        np.testing.assert_array_equal(a, b)


def test_training_deterministic_and_decreasing():
    u, _ = small_set()
    cfg = ScaleHeadConfig.from_name("sigm_64", width=16)
    r1 = train_head(u, u.labels, cfg, 0.5, TrainConfig(epochs=5, seed=1))
    r2 = train_head(u, u.labels, cfg, 0.5, TrainConfig(epochs=5, seed=1))
    assert r1.losses == r2.losses
    for a, b in zip(r1.head.net.params(), r2.head.net.params()):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(r1.centroids.centroids, r2.centroids.centroids)
    assert r1.losses[-1] < r1.losses[0]
    np.testing.assert_allclose(np.linalg.norm(r1.centroids.centroids, axis=1), 1.0, atol=1e-12)


def test_frozen_centroids_stay_put():
    u, _ = small_set()
    C = CentroidMatrix(unit(np.random.default_rng(2).normal(size=(4, 8))))
    rep = train_head(u, u.labels, ScaleHeadConfig.from_name("exp", width=8), 0.5,
                     TrainConfig(epochs=2, freeze_centroids=True), centroids=C)
    np.testing.assert_array_equal(rep.centroids.centroids, C.centroids)


def test_training_rejects_raw_inputs():
    with pytest.raises(ShapeError):
        train_head(np.full((3, 2), 2.0), [0, 0, 1], ScaleHeadConfig(), 0.5, TrainConfig())


def test_divergence_reports_epoch():
    u, _ = small_set()
    head_cfg = ScaleHeadConfig.from_name("exp", width=8)
    with pytest.raises(NumericError, match="epoch 1"):
        train_head(u, u.labels, head_cfg, 0.5, TrainConfig(epochs=2, lr=1e6))


def test_predict_scales_tie_break():
    s, order = predict_scales(zero_head("sigm_64"), unit(np.ones((4, 4))))
    assert order.tolist() == [0, 1, 2, 3]
    assert np.all(s == 32.0)


def test_scales_track_generator():
    emb, s_true, _ = generate_synthetic(SyntheticSpec(d=32, num_classes=10, per_class=50, seed=1))
    u = normalize(emb)
    rep = train_head(u, u.labels, ScaleHeadConfig(), 0.5, TrainConfig(seed=0))
    pred = head_forward(rep.head, u)
    assert spearmanr(pred, s_true).statistic > 0.4


def test_head_round_trip(tmp_path, rng):
    head = ScaleHead.init(5, ScaleHeadConfig.from_name("shifted_sigm_32_64", n_hidden=3, width=7), rng)
    save_head(tmp_path / "h.sfh", head)
    back = load_head(tmp_path / "h.sfh")
    assert back.config == head.config
    for a, b in zip(head.net.params(), back.net.params()):
        np.testing.assert_array_equal(a, b)
    save_head(tmp_path / "g.sfh", back)
    assert (tmp_path / "g.sfh").read_bytes() == (tmp_path / "h.sfh").read_bytes()


def test_head_file_errors(tmp_path, rng):
    path = tmp_path / "h.sfh"
    save_head(path, ScaleHead.init(3, ScaleHeadConfig(width=4), rng))
    raw = path.read_bytes()
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError, match="magic"):
        load_head(path)
    path.write_bytes(raw[:-8])
    with pytest.raises(FormatError, match="bytes"):
        load_head(path)
    path.write_bytes(raw[:6])
    with pytest.raises(FormatError, match="truncated"):
        load_head(path)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["exp", "sigm_64", "shifted_sigm_32_64", "relu_8"]),
       st.lists(st.floats(-30, 30), min_size=1, max_size=20))
def test_activations_nonnegative_and_monotone(name, a):
    cfg = ScaleHeadConfig.from_name(name)
    a = np.sort(np.array(a))
    s, ds = activate(cfg, a)
    assert np.all(s >= 0) and np.all(ds >= 0)
    assert np.all(np.diff(s) >= 0)
