import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advexplore import nn


def test_zero_weights_give_zero_output():
    mlp = nn.MLP([3, 5, 2], np.random.default_rng(0))
    for v in mlp.params.values():
        v[...] = 0.0
    assert np.all(mlp(np.ones((4, 3))) == 0.0)


def test_identity_layer_is_passthrough():
    mlp = nn.MLP([3, 3], np.random.default_rng(0))
    mlp.params["W0"][...] = np.eye(3)
    mlp.params["b0"][...] = 0.0
    x = np.array([0.3, -2.0, 5.0])
    np.testing.assert_array_equal(mlp(x), x)


def test_dense_matches_hand_multiply():
    rng = np.random.default_rng(1)
    mlp = nn.MLP([3, 2, 2], rng)
    x = rng.standard_normal(3)
    W0, b0, W1, b1 = (mlp.params[k] for k in ("W0", "b0", "W1", "b1"))
    h = [np.tanh(sum(x[i] * W0[i, j] for i in range(3)) + b0[j]) for j in range(2)]
    y = [sum(h[i] * W1[i, j] for i in range(2)) + b1[j] for j in range(2)]
    np.testing.assert_allclose(mlp(x), y, rtol=1e-12)


def test_dense_rejects_wrong_width():
    mlp = nn.MLP([3, 2], np.random.default_rng(0))
    with pytest.raises(ValueError):
        mlp(np.zeros(4))


def test_init_range():
    rng = np.random.default_rng(0)
    mlp = nn.MLP([16, 9], rng)
    assert np.all(np.abs(mlp.params["W0"]) <= 1 / 4)
    cell = nn.LSTMCell(5, 4, rng)
    assert np.all(np.abs(cell.params["W"]) <= 1 / 3)


def test_lstm_zero_everything_gives_zero_state():
    cell = nn.LSTMCell(3, 4, np.random.default_rng(0))
    for v in cell.params.values():
        v[...] = 0.0
    (h, c), cache = cell.step(np.zeros((1, 3)), cell.initial_state(1))
    assert np.all(h == 0) and np.all(c == 0)
    _, i, f, o, g, _, _ = cache
    assert np.all(i == 0.5) and np.all(f == 0.5) and np.all(o == 0.5) and np.all(g == 0)


def test_lstm_step_matches_gate_algebra():
    rng = np.random.default_rng(3)
    cell = nn.LSTMCell(2, 3, rng)
    x = rng.standard_normal((1, 2))
    h0, c0 = rng.standard_normal((1, 3)), rng.standard_normal((1, 3))
    (h, c), _ = cell.step(x, (h0, c0))
    z = np.concatenate([x, h0], axis=1) @ cell.params["W"] + cell.params["b"]
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))  # noqa: E731
    i, f, o, g = sig(z[:, :3]), sig(z[:, 3:6]), sig(z[:, 6:9]), np.tanh(z[:, 9:])
    c_ref = f * c0 + i * g
    np.testing.assert_allclose(c, c_ref, rtol=1e-12)
    np.testing.assert_allclose(h, o * np.tanh(c_ref), rtol=1e-12)


def test_lstm_deterministic_and_pure():
    rng = np.random.default_rng(0)
    cell = nn.LSTMCell(3, 4, rng)
    before = nn.copy_params(cell.params)
    xs = rng.standard_normal((6, 2, 3))
    h1, _ = cell.forward(xs)
    h2, _ = cell.forward(xs)
    np.testing.assert_array_equal(h1, h2)
    for k in before:
        np.testing.assert_array_equal(before[k], cell.params[k])


def test_lstm_width_mismatch():
    cell = nn.LSTMCell(3, 4, np.random.default_rng(0))
    with pytest.raises(ValueError):
        cell.step(np.zeros((1, 2)), cell.initial_state(1))


def test_zero_loss_has_zero_gradient():
    mlp = nn.MLP([3, 4, 2], np.random.default_rng(0))
    _, acts = mlp.forward(np.ones((2, 3)))
    grads, dx = mlp.backward(acts, np.zeros((2, 2)))
    assert all(np.all(g == 0) for g in grads.values())
    assert np.all(dx == 0)


def test_scalar_linear_closed_form():
    mlp = nn.MLP([1, 1], np.random.default_rng(0))
    mlp.params["W0"][...] = 0.7
    mlp.params["b0"][...] = 0.0
    x = np.array([[1.3]])
    y, acts = mlp.forward(x)
    grads, _ = mlp.backward(acts, y)  # L = y^2 / 2
    np.testing.assert_allclose(grads["W0"], y * x)


def _composition(rng):
    enc = nn.MLP([4, 8, 8], rng, out_tanh=True)
    cell = nn.LSTMCell(8, 8, rng)
    head = nn.MLP([8, 2], rng)
    params = {**nn.prefixed("enc", enc.params), **nn.prefixed("lstm", cell.params),
              **nn.prefixed("head", head.params)}
    xs = rng.standard_normal((5, 3, 4))
    target = rng.standard_normal((5, 3, 2))

    def loss():
        y = head(cell.forward(enc(xs))[0])
        return 0.5 * float(np.sum((y - target) ** 2))

    def grads():
        f, ce = enc.forward(xs)
        hs, cc = cell.forward(f)
        y, ch = head.forward(hs)
        gh, dh = head.backward(ch, y - target)
        gc, df = cell.backward(cc, dh)
        ge, _ = enc.backward(ce, df)
        return {**nn.prefixed("enc", ge), **nn.prefixed("lstm", gc), **nn.prefixed("head", gh)}

    return params, loss, grads


def test_gradient_check_dense_recurrent():
    rng = np.random.default_rng(7)
    params, loss, grads = _composition(rng)
    g = grads()
    keys = sorted(params)
    errs = []
    for _ in range(100):
        k = keys[rng.integers(len(keys))]
        idx = tuple(rng.integers(s) for s in params[k].shape)
        old = params[k][idx]
        params[k][idx] = old + 1e-5
        up = loss()
        params[k][idx] = old - 1e-5
        down = loss()
        params[k][idx] = old
        num = (up - down) / 2e-5
        errs.append(abs(num - g[k][idx]) / max(abs(num), abs(g[k][idx]), 1e-8))
    assert max(errs) < 1e-4


def test_adam_zero_grad_keeps_params():
    p = {"w": np.array([1.0, -2.0])}
    opt = nn.Adam(p, lr=0.1)
    opt.step({"w": np.zeros(2)})
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])


def test_adam_first_step_hand_value():
    p = {"w": np.array([0.0, 0.0, 0.0])}
    g = np.array([0.3, -4.0, 1e-3])
    opt = nn.Adam(p, lr=0.01)
    opt.step({"w": g.copy()})
    # bias-corrected first step: m_hat = g, v_hat = g^2
    np.testing.assert_allclose(p["w"], -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12)


def test_adam_tensors_independent():
    p = {"a": np.zeros(2), "b": np.zeros(3)}
    opt = nn.Adam(p, lr=0.01)
    opt.step({"a": np.ones(2), "b": np.zeros(3)})
    assert np.all(p["b"] == 0) and np.all(p["a"] < 0)


def test_adam_rejects_non_finite():
    p = {"w": np.zeros(2)}
    with pytest.raises(FloatingPointError):
        nn.Adam(p).step({"w": np.array([np.nan, 0.0])})


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=3, max_size=3), st.integers(1, 30))
def test_adam_step_bound(g0, steps):
    rng = np.random.default_rng(steps)
    p = {"w": np.zeros(3)}
    opt = nn.Adam(p, lr=1e-3)
    for t in range(steps):
        before = p["w"].copy()
        opt.step({"w": np.asarray(g0) * rng.uniform(-2, 2, size=3)})
        assert np.all(np.abs(p["w"] - before) <= 2 * 1e-3)


def test_clip_grad_norm():
    g = {"a": np.array([3.0, 0.0]), "b": np.array([4.0])}
    norm = nn.clip_grad_norm(g, 1.0)
    assert norm == pytest.approx(5.0)
    assert nn.global_norm(g) == pytest.approx(1.0)
    g2 = {"a": np.array([0.3])}
    nn.clip_grad_norm(g2, 1.0)
    assert g2["a"][0] == 0.3


def test_param_roundtrip_bit_stable(tmp_path):
    rng = np.random.default_rng(0)
    params = {"x.W0": rng.standard_normal((3, 4)), "b": rng.standard_normal(5).astype(np.float32)}
    nn.save_params(tmp_path / "p.npz", params)
    back = nn.load_params(tmp_path / "p.npz")
    assert back.keys() == params.keys()
    for k in params:
        assert back[k].dtype == params[k].dtype
        assert back[k].tobytes() == params[k].tobytes()


def test_prefix_split_roundtrip():
    p = {"W0": np.zeros(1), "b0": np.ones(1)}
    flat = {**nn.prefixed("pi", p), "other": np.zeros(2)}
    assert nn.split_prefixed("pi", flat).keys() == p.keys()
