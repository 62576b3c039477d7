import numpy as np
import pytest

from pam import nn
from pam.rng import Rng

from helpers import finite_diff_grads, max_rel_err, reference_mlp_forward, directional_diff, grad_dot


def _rand_mlp(dims, rng, scale=1.0):
    mlp = nn.init_mlp(dims, rng)
    for w in mlp.weights:
        w *= scale
    for b in mlp.biases:
        b += 0.1 * rng.normals(b.shape)
    return mlp


def test_zero_net_zero_output():
    mlp = nn.Mlp([np.zeros((3, 4)), np.zeros((4, 2))], [np.zeros(4), np.zeros(2)])
    out = nn.forward(mlp, np.array([1.0, -2.0, 3.0]))
    assert np.array_equal(out, np.zeros(2))


def test_identity_single_layer():
    mlp = nn.Mlp([np.eye(3)], [np.zeros(3)])
    v = np.array([0.5, -1.5, 2.0])
    assert np.allclose(nn.forward(mlp, v), v, atol=0)


def test_forward_matches_loop_reference():
    rng = Rng(21)
    for _ in range(10):
        mlp = _rand_mlp((4, 7, 5, 3), rng)
        x = rng.normals(4)
        got = nn.forward(mlp, x)
        ref = reference_mlp_forward(mlp, x)
        assert np.allclose(got, ref, rtol=1e-12, atol=1e-12)


def test_forward_dim_mismatch_fatal():
    mlp = nn.init_mlp((3, 2), Rng(0))
    with pytest.raises(ValueError):
        nn.forward(mlp, np.zeros(4))


def test_backward_zero_output_grad():
    rng = Rng(22)
    mlp = _rand_mlp((3, 5, 2), rng)
    grads, dx = nn.backward(mlp, rng.normals(3), np.zeros(2))
    assert all(np.all(g == 0) for g in grads.weights + grads.biases)
    assert np.all(dx == 0)


def test_backward_linear_layer_analytic():
    rng = Rng(23)
    w = rng.normals((3, 2))
    b = rng.normals(2)
    mlp = nn.Mlp([w.copy()], [b.copy()])
    x = rng.normals(3)
    g = rng.normals(2)
    grads, dx = nn.backward(mlp, x, g)
    assert np.allclose(grads.weights[0], np.outer(x, g), atol=1e-14)
    assert np.allclose(grads.biases[0], g, atol=1e-14)
    assert np.allclose(dx, w @ g, atol=1e-14)


def test_backward_matches_finite_differences_small():
    rng = Rng(24)
    worst = 0.0
    for _ in range(30):
        mlp = _rand_mlp((3, 6, 4, 2), rng)
        x = rng.normals(3)
        g = rng.normals(2)
        analytic, _ = nn.backward(mlp, x, g)
        fd = finite_diff_grads(lambda: float(nn.forward(mlp, x) @ g), mlp)
        worst = max(worst, max_rel_err(analytic, fd))
    assert worst < 1e-4


def test_backward_matches_fd_pipeline_architectures():
    # directional projections on the production-size networks
    rng = Rng(25)
    for dims in ((2, 64, 64), (73, 128, 128, 4)):
        worst = 0.0
        for _ in range(50):
            mlp = _rand_mlp(dims, rng)
            x = rng.normals(dims[0])
            g = rng.normals(dims[-1])
            analytic, _ = nn.backward(mlp, x, g)
            direction = nn.init_mlp(dims, rng.spawn(1))
            fd = directional_diff(lambda: float(nn.forward(mlp, x) @ g), mlp, direction)
            an = grad_dot(analytic, direction)
            assert abs(an - fd) / max(abs(an), abs(fd), 1e-6) < 1e-4, dims
            worst = max(worst, abs(an - fd))


def test_forward_backward_pure():
    rng = Rng(26)
    mlp = _rand_mlp((3, 5, 2), rng)
    x = rng.normals(3)
    g = rng.normals(2)
    y1 = nn.forward(mlp, x)
    y2 = nn.forward(mlp, x)
    assert np.array_equal(y1, y2)
    g1, dx1 = nn.backward(mlp, x, g)
    g2, dx2 = nn.backward(mlp, x, g)
    assert np.array_equal(dx1, dx2)
    assert all(np.array_equal(a, b) for a, b in zip(g1.weights + g1.biases, g2.weights + g2.biases))


def test_flatten_roundtrip():
    rng = Rng(27)
    mlp = _rand_mlp((4, 6, 3), rng)
    flat = nn.flatten_params(mlp)
    back = nn.unflatten_params(flat, (4, 6, 3))
    assert all(np.array_equal(a, b) for a, b in zip(mlp.weights + mlp.biases, back.weights + back.biases))
    assert mlp.param_count() == flat.size


def test_adam_zero_grads_noop():
    rng = Rng(28)
    mlp = _rand_mlp((3, 4, 2), rng)
    before = nn.flatten_params(mlp).copy()
    state = nn.adam_init(mlp)
    ok = nn.adam_step(mlp, nn.zeros_like_grads(mlp), state, lr=1e-3)
    assert ok
    assert np.array_equal(nn.flatten_params(mlp), before)


def test_adam_constant_gradient_monotone():
    mlp = nn.Mlp([np.array([[1.0]])], [np.array([0.0])])
    grads = nn.Mlp([np.array([[0.5]])], [np.array([0.0])])
    state = nn.adam_init(mlp)
    values = [mlp.weights[0][0, 0]]
    for _ in range(50):
        nn.adam_step(mlp, grads, state, lr=1e-2)
        values.append(mlp.weights[0][0, 0])
    assert all(b < a for a, b in zip(values, values[1:]))


def test_adam_single_step_hand_computed():
    # p=1.0, g=0.5, lr=0.1, fresh state:
    # m = 0.1*0.5 = 0.05 ; v = 0.001*0.25 = 0.00025
    # m_hat = 0.05/0.1 = 0.5 ; v_hat = 0.00025/0.001 = 0.25
    # p' = 1.0 - 0.1 * 0.5 / (sqrt(0.25) + 1e-8)
    expected = 1.0 - 0.1 * 0.5 / (np.sqrt(0.25) + 1e-8)
    mlp = nn.Mlp([np.array([[1.0]])], [np.array([0.0])])
    grads = nn.Mlp([np.array([[0.5]])], [np.array([0.0])])
    state = nn.adam_init(mlp)
    nn.adam_step(mlp, grads, state, lr=0.1)
    assert abs(mlp.weights[0][0, 0] - expected) < 1e-15
    assert state.step == 1


def test_adam_rejects_nonfinite_gradients():
    rng = Rng(29)
    mlp = _rand_mlp((2, 3, 1), rng)
    before = nn.flatten_params(mlp).copy()
    grads = nn.zeros_like_grads(mlp)
    grads.weights[0][0, 0] = np.nan
    state = nn.adam_init(mlp)
    ok = nn.adam_step(mlp, grads, state, lr=1e-3)
    assert not ok
    assert np.array_equal(nn.flatten_params(mlp), before)
    assert state.step == 0
    assert np.all(state.m.weights[0] == 0)
