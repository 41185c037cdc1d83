import math

import numpy as np
import pytest

from scratchsense import oracles
from scratchsense.net import autodiff as ad
from scratchsense.net import checkpoint as ck
from scratchsense.net.gradcheck import TINY, gradient_check
from scratchsense.net.model import ModelConfig, ScratchNet, valid_mask
from scratchsense.net.train import (AdamState, TrainConfig, TrainState, adam_step, batch_indices,
                                    compute_tsm, cross_entropy_loss, extract_features, forward,
                                    loss_and_gradients, predict_night, softmax, tile_windows, train)
from scratchsense import stats_eval as se


def _window(rng, cfg=TINY, batch=1):
    return rng.standard_normal((batch, cfg.in_channels, cfg.window))


# -- autodiff ops against naive oracles --------------------------------------

def test_conv1d_matches_naive_oracle(rng):
    x = rng.standard_normal((2, 3, 17))
    w = rng.standard_normal((4, 3, 5))
    b = rng.standard_normal(4)
    out = ad.conv1d(ad.constant(x), ad.constant(w), ad.constant(b)).data
    ref = oracles.naive_conv1d(x, w, b)
    assert np.max(np.abs(out - ref)) <= 1e-6 * np.max(np.abs(ref))


def test_zero_input_zero_features():
    model = ScratchNet.create(TINY, 0)
    feats = extract_features(model, np.zeros((1, 2, 60)))
    assert np.all(feats == 0)


def test_identical_windows_identical_features(rng):
    model = ScratchNet.create(TINY, 1)
    x = _window(rng)
    assert np.array_equal(extract_features(model, x), extract_features(model, np.concatenate([x, x]))[1:])


def test_tsm_matches_naive_oracle(rng):
    f = rng.standard_normal((40, 5))
    assert np.allclose(compute_tsm(f, 12), oracles.naive_cosine_tsm(f, 12), atol=1e-12)


def test_tsm_constant_and_orthogonal():
    const = np.tile(np.array([0.3, -1.0, 2.0]), (50, 1))
    tsm = compute_tsm(const, 10)
    valid = valid_mask(50, 10)
    assert np.max(np.abs(tsm[valid] - 1.0)) <= 1e-9
    assert np.all(tsm[~valid] == 0)
    eye = np.eye(2)[np.arange(30) % 2]
    assert np.all(np.abs(compute_tsm(eye, 4)[:-1, 1]) < 1e-15)


@pytest.mark.parametrize("period", [4, 8, 15])
def test_tsm_stripe_law(period):
    rng = np.random.default_rng(period)
    base = rng.standard_normal((period, 6))
    f = np.tile(base, (900 // period + 1, 1))[:900]
    L = 45
    tsm = compute_tsm(f, L)
    valid = valid_mask(900, L)
    col = np.array([tsm[valid[:, l], l].mean() for l in range(L)])
    assert 1 + int(np.argmax(col[1:])) == period


def test_tsm_gradient_handles_zero_vector():
    f = np.zeros((1, 3, 5))
    f[0, :, 1:] = 1.0
    t = ad.Tensor(f, requires_grad=True)
    out = ad.similarity_matrix(t, 3)
    out.backward(np.ones_like(out.data))
    assert np.all(np.isfinite(t.grad))


# -- forward, loss, gradients ------------------------------------------------

def test_forward_shape_and_softmax(rng):
    model = ScratchNet.create(TINY, 2)
    logits = forward(model, _window(rng, batch=3))
    assert logits.shape == (3, 3, 60)
    assert np.allclose(softmax(logits).sum(axis=1), 1.0, atol=1e-9)
    x = _window(rng)
    assert np.array_equal(forward(model, x), forward(model, x))
    # (ticks, channels) input for a single window
    assert forward(model, x[0].T).shape == (1, 3, 60)


def test_forward_rejects_bad_windows(rng):
    model = ScratchNet.create(TINY, 2)
    with pytest.raises(ValueError):
        forward(model, rng.standard_normal((1, 2, 59)))
    with pytest.raises(ValueError):
        forward(model, rng.standard_normal((1, 3, 60)))
    bad = _window(rng)
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        forward(model, bad)


def test_uniform_logits_loss_is_ln3():
    assert cross_entropy_loss(np.zeros((60, 3)), np.zeros(60, int)) == pytest.approx(math.log(3), abs=1e-12)


def test_confident_logits_loss_near_zero():
    labels = np.array([0, 1, 2, 1])
    logits = np.full((4, 3), -50.0)
    logits[np.arange(4), labels] = 50.0
    assert cross_entropy_loss(logits, labels) < 1e-12


def test_loss_matches_direct_formula(rng):
    logits = rng.standard_normal((30, 3)) * 3
    labels = rng.integers(0, 3, 30)
    ref = np.mean([-(logits[t, labels[t]] - math.log(sum(math.exp(v) for v in logits[t]))) for t in range(30)])
    assert abs(cross_entropy_loss(logits, labels) - ref) <= 1e-9


def test_loss_rejects_bad_labels():
    with pytest.raises(ValueError):
        cross_entropy_loss(np.zeros((4, 3)), np.array([0, 1, 3, 0]))


@pytest.mark.slow
def test_gradients_match_finite_differences():
    res = gradient_check(TINY, seed=0, h=1e-4)
    assert res.n_parameters == ScratchNet.create(TINY).n_parameters()
    assert res.max_rel_error <= 1e-4, res


def test_zero_head_blocks_upstream_gradients(rng):
    model = ScratchNet.create(TINY, 3)
    model.params["head.w"][:] = 0
    _, grads = loss_and_gradients(model, _window(rng), rng.integers(0, 3, (1, 60)))
    for name, g in grads.items():
        if not name.startswith("head."):
            assert np.all(g == 0), name
    assert np.any(grads["head.w"] != 0)


def test_loss_scaling_scales_gradients(rng):
    model = ScratchNet.create(TINY, 4)
    x, y = _window(rng), rng.integers(0, 3, (1, 60))
    l1, g1 = loss_and_gradients(model, x, y)
    l2, g2 = loss_and_gradients(model, x, y, loss_scale=2.0)
    assert l2 == 2 * l1
    for name in g1:
        assert np.array_equal(g2[name], 2 * g1[name])


# -- Adam and training -------------------------------------------------------

def test_adam_first_step():
    params = {"p": np.array([0.5, -0.5])}
    state = AdamState(lr=1e-3)
    adam_step(params, {"p": np.ones(2)}, state)
    step = 1e-3 * 1.0 / (1.0 + 1e-8)
    assert np.allclose(params["p"], [0.5 - step, -0.5 - step], atol=1e-12, rtol=0)
    assert state.step == 1


def test_adam_zero_gradient_is_noop():
    params = {"p": np.array([1.0, 2.0])}
    state = AdamState(lr=0.1)
    for _ in range(50):
        adam_step(params, {"p": np.zeros(2)}, state)
    assert np.array_equal(params["p"], [1.0, 2.0])


def test_batch_indices_cover_each_epoch():
    seen = np.concatenate([batch_indices(10, 5, 3, it) for it in range(2)])
    assert sorted(seen) == list(range(10))
    assert np.array_equal(batch_indices(10, 4, 3, 7), batch_indices(10, 4, 3, 7))


def _synthetic_set(rng, n=10, cfg=TINY):
    x = rng.standard_normal((n, cfg.in_channels, cfg.window)) * 0.3
    y = np.zeros((n, cfg.window), dtype=np.int8)
    for i in range(n):
        s = int(rng.integers(5, 35))
        y[i, s:s + 15] = 1
        x[i, :, s:s + 15] += np.sin(np.arange(15) * 2.1)
    return x, y


def test_training_descends(rng):
    x, y = _synthetic_set(rng)
    state = train(x, y, ScratchNet.create(TINY, 0), TrainConfig(batch_size=4, iterations=200, lr=3e-3, seed=1))
    assert np.mean(state.losses[-10:]) < np.mean(state.losses[:10])


def test_single_example_overfits(rng):
    x, y = _synthetic_set(rng, n=1)
    y[0, 40:50] = 2
    state = train(x, y, ScratchNet.create(TINY, 0), TrainConfig(batch_size=1, iterations=600, lr=1e-2, seed=0))
    assert state.losses[-1] < 0.05


def test_training_is_deterministic(rng):
    x, y = _synthetic_set(rng)
    cfg = TrainConfig(batch_size=4, iterations=15, seed=5)
    a = train(x, y, ScratchNet.create(TINY, 0), cfg)
    b = train(x, y, ScratchNet.create(TINY, 0), cfg)
    for name in a.model.params:
        assert np.array_equal(a.model.params[name], b.model.params[name])
    assert a.losses == b.losses


def test_training_rejects_scratch_free_split(rng):
    x = rng.standard_normal((3, 2, 60))
    with pytest.raises(ValueError):
        train(x, np.zeros((3, 60), int), ScratchNet.create(TINY, 0), TrainConfig(iterations=1))


def test_checkpoint_round_trip_and_resume(tmp_path, rng):
    x, y = _synthetic_set(rng)
    full_cfg = TrainConfig(batch_size=4, iterations=20, seed=2)
    full = train(x, y, ScratchNet.create(TINY, 0), full_cfg)

    half = train(x, y, ScratchNet.create(TINY, 0), TrainConfig(batch_size=4, iterations=10, seed=2))
    ck.save(tmp_path / "m.ckpt", ck.from_state(half, {"note": "half"}))
    ck.write_loss_csv(tmp_path / "loss.csv", half.losses)
    saved = ck.load(tmp_path / "m.ckpt")
    assert saved.iteration == 10 and saved.meta == {"note": "half"}
    state = ck.to_state(saved, ck.read_loss_csv(tmp_path / "loss.csv"))
    resumed = train(x, y, state.model, full_cfg, state)
    for name in full.model.params:
        assert np.array_equal(full.model.params[name], resumed.model.params[name])
    assert full.losses == resumed.losses


def test_checkpoint_detects_corruption(tmp_path):
    state = TrainState(ScratchNet.create(TINY, 0), AdamState())
    ck.save(tmp_path / "m.ckpt", ck.from_state(state))
    raw = bytearray((tmp_path / "m.ckpt").read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    (tmp_path / "bad.ckpt").write_bytes(bytes(raw))
    with pytest.raises(ck.CheckpointError):
        ck.load(tmp_path / "bad.ckpt")
    with pytest.raises(ck.CheckpointError):
        ck.decode(b"nope")


def test_model_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(kernel_width=4)
    with pytest.raises(ValueError):
        ModelConfig(window=60, lookahead=61)
    cfg = ModelConfig(encoder_channels=(2, 3, 4))
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


# -- whole-night prediction --------------------------------------------------

def test_predict_night_lengths(rng):
    cfg = ModelConfig(in_channels=8, feature_dim=4, window=900, lookahead=45, encoder_channels=(2, 2, 2))
    model = ScratchNet.create(cfg, 0, np.float32)
    p, labels = predict_night(model, rng.standard_normal((1800, 8)).astype(np.float32))
    assert p.shape == (1800,) and labels.shape == (1800,)
    assert np.all((p >= 0) & (p <= 1))
    p2, _ = predict_night(model, rng.standard_normal((1000, 8)).astype(np.float32))
    assert p2.shape == (1000,)


def test_tile_windows_pads_with_last_tick():
    trace = np.arange(25, dtype=float).reshape(25, 1)
    w, pad = tile_windows(trace, 10)
    assert w.shape == (3, 1, 10) and pad == 5
    assert np.all(w[2, 0, 5:] == 24)
    with pytest.raises(ValueError):
        tile_windows(trace[:5], 10)


def test_prediction_metrics_agree_with_stats(rng):
    """Per-tick predictions scored by hand equal the confusion report."""
    x, y = _synthetic_set(rng, n=4)
    state = train(x, y, ScratchNet.create(TINY, 0), TrainConfig(batch_size=2, iterations=40, lr=1e-2, seed=0))
    trace = x.transpose(0, 2, 1).reshape(-1, TINY.in_channels)
    p, labels = predict_night(state.model, trace)
    truth = y.reshape(-1) == 1
    rep = se.confusion_metrics(labels == 1, truth)
    assert rep.tp == int(np.sum((labels == 1) & truth))
    assert rep.fn == int(np.sum((labels != 1) & truth))
    assert rep.total == truth.size
