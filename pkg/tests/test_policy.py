from __future__ import annotations

import math

import numpy as np
import pytest

from pggsim import kernels
from pggsim.policy import (
    PROB_CLAMP,
    STATE_VECTORS,
    AdamState,
    LrSchedule,
    MlpParams,
    adam_step,
    backward,
    backward_batch,
    effective_lr,
    encode_state,
    forward,
    forward_batch,
    kl_two_point,
    load_params,
    make_grads,
    save_params,
)


def _params(hidden=(8, 8, 8), seed=0):
    return MlpParams.init(hidden, np.random.default_rng(seed))


# ---------------------------------------------------------------------- init


def test_init_shapes_and_bounds():
    p = _params((16, 8, 4))
    dims = (5, 16, 8, 4, 2)
    for k, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        assert p.weights[k].shape == (fan_out, fan_in)
        assert p.biases[k].shape == (fan_out,)
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        assert np.all(np.abs(p.weights[k]) <= bound)
        assert np.all(p.biases[k] == 0.0)


def test_init_deterministic_by_seed():
    a, b = _params(seed=3), _params(seed=3)
    c = _params(seed=4)
    assert all(np.array_equal(x, y) for x, y in zip(a.arrays(), b.arrays()))
    assert any(not np.array_equal(x, y) for x, y in zip(a.arrays(), c.arrays()))


# ------------------------------------------------------------------- forward


def test_forward_is_distribution_and_pure():
    p = _params()
    x = np.array([1.0, 0.0, 1.0, 1.0, 0.0])
    cache = forward(p, x)
    assert cache.probs.shape == (1, 2)
    assert np.all(cache.probs > 0.0) and np.all(cache.probs < 1.0)
    assert cache.probs.sum() == pytest.approx(1.0, abs=1e-12)
    again = forward(p, x)
    assert np.array_equal(cache.probs, again.probs)
    assert np.array_equal(cache.logits, again.logits)


def test_softmax_known_logits():
    # zero hidden weights push all activations to 0, so the output layer's
    # bias becomes the logits directly
    p = MlpParams(
        weights=[np.zeros((4, 5)), np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((2, 4))],
        biases=[np.zeros(4), np.zeros(4), np.zeros(4), np.array([math.log(3.0), 0.0])],
    )
    probs = forward(p, np.zeros(5)).probs[0]
    assert probs[0] == pytest.approx(0.75, abs=1e-12)
    assert probs[1] == pytest.approx(0.25, abs=1e-12)


def test_forward_batch_consistent_with_single():
    # BLAS may route a 1-row product through a different kernel than a 32-row
    # one, so agreement is to rounding, not bitwise
    p = _params(seed=7)
    batch = forward_batch(p, STATE_VECTORS)
    for i in (0, 13, 31):
        single = forward(p, STATE_VECTORS[i])
        assert np.allclose(single.probs[0], batch.probs[i], rtol=0.0, atol=1e-12)


def test_forward_rejects_bad_shape():
    with pytest.raises(ValueError):
        forward(_params(), np.zeros(4))


# ------------------------------------------------------------------ backward


def _loss_and_grads(p, x, upstream):
    cache = forward(p, x)
    probs = cache.probs[0]
    loss = float(probs @ upstream)
    dlogits = probs * (upstream - probs @ upstream)
    return loss, backward_batch(p, cache, dlogits[None, :])


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(11)
    p = _params((6, 5, 4), seed=12)
    x = rng.normal(size=5)
    upstream = rng.normal(size=2)
    _, grads = _loss_and_grads(p, x, upstream)
    arrays = p.arrays()
    for arr, g in zip(arrays, grads):
        flat = arr.ravel()
        gflat = g.ravel()
        for k in range(flat.size):
            h = 1e-6 * max(1.0, abs(flat[k]))
            orig = flat[k]
            flat[k] = orig + h
            up, _ = _loss_and_grads(p, x, upstream)
            flat[k] = orig - h
            down, _ = _loss_and_grads(p, x, upstream)
            flat[k] = orig
            numeric = (up - down) / (2.0 * h)
            assert abs(gflat[k] - numeric) <= 1e-4 * max(1.0, abs(gflat[k]), abs(numeric))


def test_backward_accumulates_additively():
    p = _params(seed=5)
    rng = np.random.default_rng(6)
    xs = [rng.normal(size=5) for _ in range(2)]
    ds = [rng.normal(size=2) for _ in range(2)]
    acc = make_grads(p)
    for x, d in zip(xs, ds):
        backward(p, forward(p, x), d, acc)
    for k in range(len(acc)):
        separate = sum(backward(p, forward(p, x), d, make_grads(p))[k] for x, d in zip(xs, ds))
        assert np.allclose(acc[k], separate, atol=1e-14)


def test_relu_blocks_gradient_at_zero_preactivation():
    # first hidden unit has zero weights and bias, so its pre-activation is
    # exactly 0; no gradient may flow back through it
    p = _params((4, 4, 4), seed=9)
    p.weights[0][0, :] = 0.0
    p.biases[0][0] = 0.0
    cache = forward(p, np.ones(5))
    assert cache.pre[0][0, 0] == 0.0
    grads = backward_batch(p, cache, np.array([[1.0, -1.0]]))
    assert np.all(grads[0][0, :] == 0.0)  # incoming weights of the dead unit


def test_backward_rejects_shape_mismatch():
    p = _params()
    cache = forward(p, np.zeros(5))
    with pytest.raises(ValueError):
        backward_batch(p, cache, np.zeros((2, 3)))


# ---------------------------------------------------------------------- adam


def test_adam_first_step_is_signwise_lr():
    p = _params(seed=20)
    before = [a.copy() for a in p.arrays()]
    grads = [np.full_like(a, 0.5) for a in p.arrays()]
    state = AdamState.for_params(p)
    adam_step(p, grads, state, lr=1e-3)
    for arr, prev in zip(p.arrays(), before):
        step = prev - arr
        assert np.allclose(step, 1e-3 * 0.5 / (0.5 + 1e-8), atol=1e-12)
    assert state.t == 1


def test_adam_zero_gradient_is_noop():
    p = _params(seed=21)
    before = [a.copy() for a in p.arrays()]
    adam_step(p, make_grads(p), AdamState.for_params(p), lr=1e-2)
    for arr, prev in zip(p.arrays(), before):
        assert np.array_equal(arr, prev)


def test_adam_rejects_nonfinite_without_mutating():
    p = _params(seed=22)
    before = [a.copy() for a in p.arrays()]
    grads = make_grads(p)
    grads[3][0] = np.nan
    state = AdamState.for_params(p)
    with pytest.raises(ValueError):
        adam_step(p, grads, state, lr=1e-3)
    for arr, prev in zip(p.arrays(), before):
        assert np.array_equal(arr, prev)
    assert state.t == 0


# ------------------------------------------------------------------ schedule


def test_lr_schedule_halving():
    sched = LrSchedule(1e-4, 1000)
    assert effective_lr(sched, 0) == 1e-4
    assert effective_lr(sched, 999) == 1e-4
    assert effective_lr(sched, 1000) == 5e-5
    assert effective_lr(sched, 2500) == 2.5e-5


def test_lr_schedule_validation():
    with pytest.raises(ValueError):
        LrSchedule(0.0, 1000)
    with pytest.raises(ValueError):
        LrSchedule(1e-4, 0)
    with pytest.raises(ValueError):
        effective_lr(LrSchedule(1e-4, 10), -1)


# ---------------------------------------------------------------- state code


def test_encode_state_order():
    grid = np.zeros((3, 3), dtype=np.uint8)
    grid[1, 1] = 1  # self
    grid[0, 1] = 1  # north of (1,1)
    grid[1, 0] = 1  # west of (1,1)
    assert np.array_equal(encode_state(grid, (1, 1)), [1.0, 1.0, 0.0, 1.0, 0.0])


def test_encode_state_matches_state_index_everywhere():
    rng = np.random.default_rng(31)
    grid = (rng.random((6, 6)) < 0.5).astype(np.uint8)
    idx = kernels.state_index(grid)
    for x in range(6):
        for y in range(6):
            assert np.array_equal(STATE_VECTORS[idx[x, y]], encode_state(grid, (x, y)))


# ------------------------------------------------------------------------ KL


def test_kl_known_values():
    assert kl_two_point(0.5, 0.9) == pytest.approx(0.510826, abs=1e-6)
    assert kl_two_point(0.9, 0.5) == pytest.approx(0.368064, abs=1e-6)


def test_kl_zero_iff_equal():
    rng = np.random.default_rng(40)
    for p in rng.random(50):
        assert kl_two_point(p, p) == 0.0
    for p, q in rng.random((50, 2)):
        if abs(p - q) > 1e-9:
            assert kl_two_point(p, q) > 0.0


def test_kl_clamps_extremes_finite():
    v = kl_two_point(0.0, 1.0)
    assert np.isfinite(v)
    assert v > 10.0  # two clamped seven-decade log ratios


# --------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip(tmp_path):
    p = _params((7, 6, 5), seed=50)
    path = tmp_path / "net.ckpt"
    save_params(p, path)
    q = load_params(path)
    assert q.hidden == (7, 6, 5)
    for a, b in zip(p.arrays(), q.arrays()):
        assert np.array_equal(a, b)


def test_checkpoint_header_layout(tmp_path):
    p = _params((7, 6, 5), seed=51)
    path = tmp_path / "net.ckpt"
    save_params(p, path)
    blob = path.read_bytes()
    assert blob[:4] == b"PGGM"
    assert int.from_bytes(blob[4:8], "little") == 1
    assert int.from_bytes(blob[8:10], "little") == 7
    assert int.from_bytes(blob[10:12], "little") == 6
    assert int.from_bytes(blob[12:14], "little") == 5
    assert blob[14:16] == b"\x00\x00"
    n_params = sum(a.size for a in p.arrays())
    assert len(blob) == 16 + 8 * n_params
    first = np.frombuffer(blob, dtype="<f8", count=5, offset=16)
    assert np.array_equal(first, p.weights[0][0])


def test_checkpoint_rejects_corruption(tmp_path):
    p = _params(seed=52)
    path = tmp_path / "net.ckpt"
    save_params(p, path)
    blob = bytearray(path.read_bytes())

    bad_magic = tmp_path / "magic.ckpt"
    bad_magic.write_bytes(b"XXXX" + bytes(blob[4:]))
    with pytest.raises(ValueError, match="magic"):
        load_params(bad_magic)

    bad_version = tmp_path / "version.ckpt"
    bad_version.write_bytes(bytes(blob[:4]) + (9).to_bytes(4, "little") + bytes(blob[8:]))
    with pytest.raises(ValueError, match="version"):
        load_params(bad_version)

    truncated = tmp_path / "short.ckpt"
    truncated.write_bytes(bytes(blob[:-8]))
    with pytest.raises(ValueError, match="size"):
        load_params(truncated)
