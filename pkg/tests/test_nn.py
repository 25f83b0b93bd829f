import math

import numpy as np
import pytest

from windlab import nn
from windlab.nn import (
    AdamState, NetParams, NetSpec, ShapeMismatch,
    adam_step, forward, forward_batch, init_adam, init_params,
    loss_and_grad, soft_update,
)


def small_params(rng=None, dims=(3, 4, 1)):
    rng = rng or np.random.default_rng(0)
    spec = NetSpec(dims[0], tuple(dims[1:-1]), dims[-1])
    p = init_params(spec, rng)
    # non-degenerate output layer for gradient tests
    p.weights[-1] = rng.uniform(-0.5, 0.5, size=p.weights[-1].shape)
    p.biases[-1] = rng.uniform(-0.5, 0.5, size=p.biases[-1].shape)
    return p


def test_forward_zero_params_gives_zero():
    spec = NetSpec(7, (8, 4), 1)
    p = init_params(spec, np.random.default_rng(0))
    for w in p.weights:
        w[:] = 0.0
    out, _ = forward(p, np.ones(7))
    assert out == 0.0


def test_forward_hand_computed_two_neurons():
    # 2 inputs -> 2 ReLU units -> 1 linear output, tiny weights by hand
    w1 = np.array([[1.0, -1.0], [0.5, 2.0]])
    b1 = np.array([0.0, -0.25])
    w2 = np.array([[2.0], [3.0]])
    b2 = np.array([0.5])
    p = NetParams([w1, w2], [b1, b2])
    x = np.array([1.0, 2.0])
    h = np.maximum(x @ w1 + b1, 0.0)          # (2.0, 2.75)
    expected = float((h @ w2 + b2)[0])        # 4 + 8.25 + 0.5
    out, _ = forward(p, x)
    assert out == pytest.approx(expected, abs=1e-15)
    assert out == pytest.approx(12.75, abs=1e-15)


def test_forward_relu_kills_negative_preactivation():
    w1 = np.array([[1.0, 1.0]])
    b1 = np.array([0.0, 0.0])
    w2 = np.array([[5.0], [7.0]])
    b2 = np.array([0.0])
    p = NetParams([w1, w2], [b1, b2])
    out_pos, _ = forward(p, np.array([2.0]))
    out_neg, _ = forward(p, np.array([-2.0]))
    assert out_pos == pytest.approx(24.0)
    assert out_neg == 0.0  # both hidden units clipped


def test_forward_deterministic():
    p = small_params()
    x = np.array([0.3, -1.2, 0.7])
    o1, _ = forward(p, x)
    o2, _ = forward(p, x)
    assert o1 == o2


def test_forward_shape_mismatch():
    p = small_params()
    with pytest.raises(ShapeMismatch):
        forward(p, np.ones(5))
    with pytest.raises(ShapeMismatch):
        loss_and_grad(p, np.ones((2, 5)), np.zeros(2))


def test_loss_zero_when_targets_match():
    p = small_params()
    x = np.random.default_rng(1).normal(size=(4, 3))
    targets = forward_batch(p, x)
    loss, grad = loss_and_grad(p, x, targets, l2_lambda=0.0)
    assert loss == 0.0
    for gw in grad.weights:
        assert np.allclose(gw, 0.0, atol=1e-16)
    for gb in grad.biases:
        assert np.allclose(gb, 0.0, atol=1e-16)


def test_l2_gradient_is_two_lambda_w():
    p = small_params()
    x = np.random.default_rng(2).normal(size=(4, 3))
    targets = forward_batch(p, x)  # zero MSE
    lam = 0.05
    loss, grad = loss_and_grad(p, x, targets, l2_lambda=lam)
    expected_loss = lam * sum(np.sum(w * w) for w in p.weights)
    assert loss == pytest.approx(expected_loss, rel=1e-12)
    for gw, w in zip(grad.weights, p.weights):
        assert np.allclose(gw, 2 * lam * w, atol=1e-14)
    for gb in grad.biases:  # biases excluded from the penalty
        assert np.allclose(gb, 0.0, atol=1e-14)


def _finite_diff_check(p, x, y, lam, rng, n_probe=60):
    """Max relative error of analytic vs central-difference gradient over a
    random subset of coordinates."""
    loss0, grad = loss_and_grad(p, x, y, l2_lambda=lam)
    eps = 1e-6
    worst = 0.0
    flat = []
    for li in range(len(p.weights)):
        for idx in np.ndindex(p.weights[li].shape):
            flat.append(("w", li, idx))
        for idx in np.ndindex(p.biases[li].shape):
            flat.append(("b", li, idx))
    sel = rng.choice(len(flat), size=min(n_probe, len(flat)), replace=False)
    for s in sel:
        kind, li, idx = flat[s]
        arr = p.weights[li] if kind == "w" else p.biases[li]
        g = grad.weights[li][idx] if kind == "w" else grad.biases[li][idx]
        orig = arr[idx]
        arr[idx] = orig + eps
        lp, _ = loss_and_grad(p, x, y, l2_lambda=lam)
        arr[idx] = orig - eps
        lm, _ = loss_and_grad(p, x, y, l2_lambda=lam)
        arr[idx] = orig
        fd = (lp - lm) / (2 * eps)
        denom = max(abs(fd), abs(g), 1e-8)
        worst = max(worst, abs(fd - g) / denom)
    return worst


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    for trial in range(10):
        dims = (3, rng.integers(2, 8), rng.integers(2, 6), 1)
        p = small_params(rng, dims)
        x = rng.normal(size=(5, 3))
        y = rng.normal(size=5)
        lam = float(rng.choice([0.0, 0.01]))
        worst = _finite_diff_check(p, x, y, lam, rng)
        assert worst < 1e-6


def test_adam_first_step_on_scalar_quadratic():
    # f(w) = w^2, w0 = 1, lr = 0.1: Adam's first step has unit magnitude
    # times lr (bias correction cancels), so w1 = 1 - 0.1 * g/|g| ~ 0.9
    p = NetParams([np.array([[1.0]])], [np.array([0.0])])
    adam = init_adam(p, learning_rate=0.1)
    grad = NetParams([np.array([[2.0]])], [np.array([0.0])])  # df/dw at w=1
    p2 = adam_step(p, grad, adam)
    assert p2.weights[0][0, 0] == pytest.approx(0.9, abs=1e-7)


def test_adam_zero_gradient_keeps_params():
    p = small_params()
    adam = init_adam(p, 0.01)
    zero = NetParams([np.zeros_like(w) for w in p.weights],
                     [np.zeros_like(b) for b in p.biases])
    p2 = adam_step(p, zero, adam)
    for w1, w2 in zip(p.weights, p2.weights):
        assert np.array_equal(w1, w2)
    assert adam.step == 1


def test_adam_descends_quadratic():
    # hand-rolled scalar Adam oracle, run side by side
    w = 1.0
    m = v = 0.0
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    p = NetParams([np.array([[1.0]])], [np.array([0.0])])
    adam = init_adam(p, lr)
    traj = []
    for t in range(1, 40):
        g = 2 * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        grad = NetParams([np.array([[2.0 * p.weights[0][0, 0]]])], [np.array([0.0])])
        p = adam_step(p, grad, adam)
        traj.append(abs(p.weights[0][0, 0]))
        assert p.weights[0][0, 0] == pytest.approx(w, abs=1e-12)
    # oracle trajectory: |w| falls monotonically until momentum carries it
    # across zero (step ~11), after which it stays well inside the start
    assert all(b < a for a, b in zip(traj[:10], traj[1:11]))
    assert max(traj[11:]) < 0.35


def test_soft_update_blend_cases():
    t = NetParams([np.zeros((2, 2))], [np.zeros(2)])
    o = NetParams([np.ones((2, 2))], [np.ones(2)])
    assert np.allclose(soft_update(t, o, 0.1).weights[0], 0.1)
    assert np.allclose(soft_update(t, o, 1.0).weights[0], 1.0)
    assert np.allclose(soft_update(t, o, 0.0).weights[0], 0.0)


def test_soft_update_contracts_distance():
    rng = np.random.default_rng(3)
    t = small_params(rng)
    o = small_params(rng)
    tau = 0.25
    d0 = sum(np.sum((wt - wo) ** 2) for wt, wo in zip(t.weights, o.weights))
    t2 = soft_update(t, o, tau)
    d1 = sum(np.sum((wt - wo) ** 2) for wt, wo in zip(t2.weights, o.weights))
    assert math.sqrt(d1) == pytest.approx((1 - tau) * math.sqrt(d0), rel=1e-12)


def test_soft_update_shape_mismatch():
    t = NetParams([np.zeros((2, 2))], [np.zeros(2)])
    o = NetParams([np.zeros((3, 2))], [np.zeros(2)])
    with pytest.raises(ShapeMismatch):
        soft_update(t, o, 0.5)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    p = init_params(NetSpec(7, (256, 128, 64), 1), rng)
    path = tmp_path / "net.ckpt"
    nn.save_checkpoint(path, p)
    loaded = nn.load_checkpoint(path)
    for w1, w2 in zip(p.weights, loaded.weights):
        assert w1.tobytes() == w2.tobytes()
    for b1, b2 in zip(p.biases, loaded.biases):
        assert b1.tobytes() == b2.tobytes()
    # and a second save is byte-identical
    path2 = tmp_path / "net2.ckpt"
    nn.save_checkpoint(path2, loaded)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError):
        nn.load_checkpoint(path)


def test_default_spec_matches_architecture():
    spec = NetSpec()
    assert spec.layer_dims == (7, 256, 128, 64, 1)
    p = init_params(spec, np.random.default_rng(0))
    assert [w.shape for w in p.weights] == [(7, 256), (256, 128), (128, 64), (64, 1)]
    assert p.spec() == spec
