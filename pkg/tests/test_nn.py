import numpy as np
import pytest

from tracksense.nn import AdamState, Mlp, adam_update, load_mlp, mlp_from_dict, mlp_to_dict, save_mlp


def test_zero_weights_output_bias():
    mlp = Mlp([3, 2])
    mlp.biases[0][:] = [1.5, -2.0]
    out = mlp.forward(np.array([9.0, -3.0, 4.0]))
    assert np.array_equal(out, [1.5, -2.0])


def test_single_linear_layer_matches_matmul():
    rng = np.random.default_rng(0)
    mlp = Mlp([4, 3])
    w = rng.normal(size=(4, 3))
    b = rng.normal(size=3)
    mlp.weights[0][:] = w
    mlp.biases[0][:] = b
    x = rng.normal(size=(5, 4))
    assert np.allclose(mlp.forward(x), x @ w + b, atol=1e-15)


def test_tanh_saturation():
    mlp = Mlp([2, 8, 1], rng=np.random.default_rng(1))
    mlp.weights[0] *= 100.0
    # mathematically tanh stays in (-1, 1); float64 rounds the tails to +-1.0
    _, cache = mlp._forward_cached(np.array([[1e6, -1e6]]))
    hidden = cache[1]
    assert np.all(np.abs(hidden) <= 1.0)
    assert np.abs(hidden).max() > 0.999
    assert np.all(np.isfinite(mlp.forward(np.array([1e12, -1e12]))))


def test_flat_and_structured_views_agree():
    mlp = Mlp([3, 4, 2], rng=np.random.default_rng(2))
    mlp.weights[0][0, 0] = 123.0
    assert mlp.params[0] == 123.0
    new = mlp.params.copy()
    new[0] = -7.0
    mlp.set_params(new)
    assert mlp.weights[0][0, 0] == -7.0


def test_linear_gradient_closed_form():
    mlp = Mlp([3, 2])
    x = np.array([1.0, 2.0, -1.0])
    up = np.array([0.5, -2.0])
    g = mlp.gradient(x, up)
    w_grad = g[:6].reshape(3, 2)
    b_grad = g[6:]
    assert np.allclose(w_grad, np.outer(x, up), atol=1e-15)
    assert np.allclose(b_grad, up, atol=1e-15)


def test_zero_upstream_zero_gradient():
    mlp = Mlp([3, 5, 2], rng=np.random.default_rng(3))
    g = mlp.gradient(np.ones(3), np.zeros(2))
    assert np.all(g == 0.0)


def test_gradient_matches_finite_differences():
    # keystone: 10 random nets, central differences h=1e-5, rel err < 1e-4
    rng = np.random.default_rng(4)
    shapes = [
        [2, 3, 1], [3, 4, 2], [4, 8, 3], [5, 6, 6, 2], [2, 2, 2],
        [6, 4, 1], [3, 3, 3, 3], [4, 5, 2], [2, 7, 2], [5, 5, 1],
    ]
    h = 1e-5
    for sizes in shapes:
        mlp = Mlp(sizes, rng=rng, out_gain=0.5)
        x = rng.normal(size=sizes[0])
        up = rng.normal(size=sizes[-1])
        analytic = mlp.gradient(x, up)
        base = mlp.params.copy()
        fd = np.zeros_like(base)
        for i in range(base.size):
            for sign, slot in ((+1, 0), (-1, 1)):
                p = base.copy()
                p[i] += sign * h
                mlp.set_params(p)
                val = float(mlp.forward(x) @ up)
                fd[i] += sign * val
            fd[i] /= 2 * h
        mlp.set_params(base)
        denom = np.maximum(np.maximum(np.abs(fd), np.abs(analytic)), 1e-6)
        rel = np.abs(analytic - fd) / denom
        assert rel.max() < 1e-4, (sizes, rel.max())


def test_gradient_batched_equals_sum_of_singles():
    rng = np.random.default_rng(5)
    mlp = Mlp([3, 4, 2], rng=rng)
    xs = rng.normal(size=(6, 3))
    ups = rng.normal(size=(6, 2))
    batched = mlp.gradient(xs, ups)
    summed = sum(mlp.gradient(x, u) for x, u in zip(xs, ups))
    assert np.allclose(batched, summed, atol=1e-12)


def test_dimension_mismatch_errors():
    mlp = Mlp([3, 2])
    with pytest.raises(ValueError):
        mlp.forward(np.ones(4))
    with pytest.raises(ValueError):
        mlp.gradient(np.ones(3), np.ones(3))


def test_adam_one_step_hand_computed():
    params = np.array([1.0, -2.0])
    grads = np.array([0.5, -1.5])
    st = AdamState.fresh(2, lr=0.01)
    new, st2 = adam_update(params, grads, st)
    # by hand: m = 0.1*g, v = 0.001*g^2; bias-corrected m_hat = g, v_hat = g^2
    # update = lr * g / (|g| + eps)
    expected = params - 0.01 * grads / (np.abs(grads) + 1e-8)
    assert np.allclose(new, expected, atol=1e-12)
    assert st2.step == 1


def test_adam_zero_gradient_no_change():
    params = np.array([3.0, 4.0, 5.0])
    st = AdamState.fresh(3)
    new, _ = adam_update(params, np.zeros(3), st)
    assert np.array_equal(new, params)


def test_adam_rejects_nan_gradient():
    st = AdamState.fresh(2)
    with pytest.raises(ValueError):
        adam_update(np.ones(2), np.array([1.0, np.nan]), st)


def test_adam_converges_on_quadratic():
    st = AdamState.fresh(1, lr=0.1)
    p = np.array([10.0])
    for _ in range(500):
        p, st = adam_update(p, 2 * p, st)
    assert abs(p[0]) < 1e-3


def test_set_params_rejects_nonfinite():
    mlp = Mlp([2, 2])
    bad = np.full(mlp.n_params(), np.inf)
    with pytest.raises(ValueError):
        mlp.set_params(bad)


def test_serialization_round_trip_bit_exact(tmp_path):
    mlp = Mlp([4, 8, 8, 3], rng=np.random.default_rng(6))
    save_mlp(mlp, tmp_path / "m.json")
    back = load_mlp(tmp_path / "m.json")
    assert back.layer_sizes == mlp.layer_sizes
    assert np.array_equal(back.params, mlp.params)


def test_serialization_version_guard():
    mlp = Mlp([2, 2])
    d = mlp_to_dict(mlp)
    d["version"] = 999
    with pytest.raises(ValueError):
        mlp_from_dict(d)
