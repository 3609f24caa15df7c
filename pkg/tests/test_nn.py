"""Numerics substrate checks: forwards against naive-loop oracles, backwards
against central finite differences."""

import numpy as np
import pytest

from quadfault.nn import (
    LSTM,
    Adam,
    Conv2D,
    Dense,
    Flatten,
    LstmCellWeights,
    MaxPool2,
    ReLU,
    SGD,
    Sequential,
    check_gradients,
    load_checkpoint,
    lstm_cell_forward,
    mse,
    save_checkpoint,
    softmax_xent,
)

RNG = np.random.default_rng(42)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def random_cell_weights(rng, d, k):
    return LstmCellWeights(
        w_f=rng.normal(size=(k, d + k)),
        w_i=rng.normal(size=(k, d + k)),
        w_o=rng.normal(size=(k, d + k)),
        w_c=rng.normal(size=(k, d + k)),
        b_f=rng.normal(size=k),
        b_i=rng.normal(size=k),
        b_o=rng.normal(size=k),
        b_c=rng.normal(size=k),
    )


class TestLstmCell:
    def test_zero_weights_zero_state(self):
        d, k = 2, 3
        w = LstmCellWeights(
            *(np.zeros((k, d + k)) for _ in range(4)), *(np.zeros(k) for _ in range(4))
        )
        h, c = lstm_cell_forward(np.zeros(d), np.zeros(k), np.zeros(k), w)
        # c~ = tanh(0) = 0, so c = 0.5*0 + 0.5*0 = 0 and h = 0.5*tanh(0) = 0
        np.testing.assert_allclose(c, 0.0)
        np.testing.assert_allclose(h, 0.0)

    def test_saturated_forget_gate_remembers(self):
        d, k = 1, 4
        w = LstmCellWeights(
            w_f=np.zeros((k, d + k)),
            w_i=np.full((k, d + k), 0.0),
            w_o=np.zeros((k, d + k)),
            w_c=np.zeros((k, d + k)),
            b_f=np.full(k, 50.0),     # forget gate pinned at 1
            b_i=np.full(k, -50.0),    # input gate pinned at 0
            b_o=np.zeros(k),
            b_c=np.zeros(k),
        )
        v = np.array([0.3, -1.2, 0.7, 2.0])
        h, c = lstm_cell_forward(np.zeros(d), np.zeros(k), v, w)
        np.testing.assert_allclose(c, v, atol=1e-12)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(7)
        d, k = 2, 3
        w = random_cell_weights(rng, d, k)
        x = rng.normal(size=d)
        h_prev = rng.normal(size=k)
        c_prev = rng.normal(size=k)

        # independent scalar-loop evaluation of the gate equations
        h_ref = np.zeros(k)
        c_ref = np.zeros(k)
        hx = np.concatenate([h_prev, x])
        for j in range(k):
            f = _sigmoid(sum(w.w_f[j, m] * hx[m] for m in range(d + k)) + w.b_f[j])
            i = _sigmoid(sum(w.w_i[j, m] * hx[m] for m in range(d + k)) + w.b_i[j])
            o = _sigmoid(sum(w.w_o[j, m] * hx[m] for m in range(d + k)) + w.b_o[j])
            cb = np.tanh(sum(w.w_c[j, m] * hx[m] for m in range(d + k)) + w.b_c[j])
            c_ref[j] = f * c_prev[j] + i * cb
            h_ref[j] = o * np.tanh(c_ref[j])

        h, c = lstm_cell_forward(x, h_prev, c_prev, w)
        np.testing.assert_allclose(h, h_ref, atol=1e-12)
        np.testing.assert_allclose(c, c_ref, atol=1e-12)

    def test_gate_ranges(self):
        rng = np.random.default_rng(3)
        d, k = 3, 5
        w = random_cell_weights(rng, d, k)
        for _ in range(50):
            h, c = lstm_cell_forward(
                rng.normal(size=d), rng.uniform(-0.9, 0.9, size=k), rng.normal(size=k), w
            )
            assert np.all(np.abs(h) < 1.0)

    def test_shape_mismatch_rejected(self):
        w = random_cell_weights(np.random.default_rng(0), 2, 3)
        with pytest.raises(ValueError):
            lstm_cell_forward(np.zeros(5), np.zeros(3), np.zeros(3), w)

    def test_layer_matches_cell_function(self):
        rng = np.random.default_rng(11)
        layer = LSTM(2, 4, rng, return_sequences=True)
        x = rng.normal(size=(3, 6, 2))
        out = layer.forward(x)
        w = layer.cell_weights()
        h = np.zeros((3, 4))
        c = np.zeros((3, 4))
        for t in range(6):
            h, c = lstm_cell_forward(x[:, t, :], h, c, w)
            np.testing.assert_allclose(out[:, t, :], h, atol=1e-12)


class TestConv2d:
    def test_delta_kernel_is_identity(self):
        rng = np.random.default_rng(5)
        conv = Conv2D(1, 1, rng)
        conv.params["w"] = np.zeros((3, 3, 1, 1))
        conv.params["w"][1, 1, 0, 0] = 1.0
        conv.params["b"][:] = 0.0
        x = rng.normal(size=(1, 7, 6, 1))
        out = conv.forward(x)
        np.testing.assert_allclose(out[0, :, :, 0], x[0, 1:-1, 1:-1, 0], atol=1e-12)

    def test_all_ones_counts_taps(self):
        conv = Conv2D(1, 1, np.random.default_rng(0))
        conv.params["w"] = np.ones((3, 3, 1, 1))
        conv.params["b"][:] = 0.0
        out = conv.forward(np.ones((1, 5, 5, 1)))
        np.testing.assert_allclose(out, 9.0)

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            h = rng.integers(3, 8)
            w_ = rng.integers(3, 8)
            cin = rng.integers(1, 4)
            cout = rng.integers(1, 5)
            conv = Conv2D(cin, cout, rng)
            x = rng.normal(size=(2, h, w_, cin))
            out = conv.forward(x)
            kern = conv.params["w"]
            bias = conv.params["b"]
            ref = np.zeros((2, h - 2, w_ - 2, cout))
            for b in range(2):
                for i in range(h - 2):
                    for j in range(w_ - 2):
                        for o in range(cout):
                            acc = bias[o]
                            for di in range(3):
                                for dj in range(3):
                                    for ci in range(cin):
                                        acc += x[b, i + di, j + dj, ci] * kern[di, dj, ci, o]
                            ref[b, i, j, o] = acc
            np.testing.assert_allclose(out, ref, atol=1e-10)

    def test_undersized_input_rejected(self):
        conv = Conv2D(1, 1, np.random.default_rng(0))
        with pytest.raises(ValueError):
            conv.forward(np.zeros((1, 2, 5, 1)))


class TestMaxPool:
    def test_constant_input(self):
        pool = MaxPool2()
        out = pool.forward(np.full((1, 4, 4, 2), 3.5))
        np.testing.assert_allclose(out, 3.5)
        assert out.shape == (1, 2, 2, 2)

    def test_single_window(self):
        pool = MaxPool2()
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1)
        np.testing.assert_allclose(pool.forward(x), [[[[4.0]]]])

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            h = int(rng.integers(2, 9))
            w = int(rng.integers(2, 9))
            c = int(rng.integers(1, 4))
            x = rng.normal(size=(2, h, w, c))
            out = MaxPool2().forward(x)
            for b in range(2):
                for i in range(h // 2):
                    for j in range(w // 2):
                        for ch in range(c):
                            block = x[b, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2, ch]
                            assert out[b, i, j, ch] == block.max()


class TestSoftmaxXent:
    def test_uniform_logits(self):
        loss, probs, _ = softmax_xent(np.zeros(16), 3)
        np.testing.assert_allclose(probs, 1.0 / 16.0)
        np.testing.assert_allclose(loss, np.log(16.0))

    def test_confident_logits(self):
        loss, _, _ = softmax_xent(np.array([10.0, 0.0]), 0)
        np.testing.assert_allclose(loss, -np.log(_sigmoid(10.0)), rtol=1e-6)
        assert loss == pytest.approx(4.54e-5, rel=1e-2)

    def test_shift_invariance(self):
        rng = np.random.default_rng(1)
        logits = rng.normal(size=8)
        _, p1, _ = softmax_xent(logits, 2)
        _, p2, _ = softmax_xent(logits + 123.4, 2)
        np.testing.assert_allclose(p1, p2, atol=1e-12)
        assert p1.sum() == pytest.approx(1.0, abs=1e-6)

    def test_gradient_identity(self):
        rng = np.random.default_rng(2)
        logits = rng.normal(size=5)
        _, probs, grad = softmax_xent(logits, 4)
        onehot = np.zeros(5)
        onehot[4] = 1.0
        np.testing.assert_allclose(grad, probs - onehot, atol=1e-12)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            softmax_xent(np.zeros(4), 4)


class TestGradients:
    """Analytic gradients vs central finite differences, >= 50 trials per layer."""

    def _check_layer(self, make_layer, make_input, trials, loss_kind="mse", tol=1e-4):
        rng = np.random.default_rng(99)
        worst = 0.0
        for _ in range(trials):
            layer = make_layer(rng)
            x = make_input(rng)
            if loss_kind == "mse":
                target = rng.normal(size=layer.forward(x).shape)

                def loss_fn():
                    return mse(layer.forward(x), target)[0]

                out = layer.forward(x)
                _, grad = mse(out, target)
                layer.backward(grad)
            else:
                out = layer.forward(x)
                label = int(rng.integers(out.shape[-1]))
                _, _, grad = softmax_xent(out, label)

                def loss_fn():
                    return softmax_xent(layer.forward(x), label)[0]

                layer.backward(np.atleast_2d(grad))
            worst = max(worst, check_gradients(loss_fn, layer.params, layer.grads, rng))
        assert worst < tol, f"max relative gradient error {worst:.2e}"

    def test_dense(self):
        self._check_layer(
            lambda rng: Dense(4, 3, rng),
            lambda rng: rng.normal(size=(2, 4)),
            trials=50,
        )

    def test_dense_relu(self):
        self._check_layer(
            lambda rng: Dense(4, 3, rng, relu=True),
            lambda rng: rng.normal(size=(2, 4)),
            trials=50,
        )

    def test_conv(self):
        self._check_layer(
            lambda rng: Conv2D(2, 3, rng),
            lambda rng: rng.normal(size=(2, 6, 6, 2)),
            trials=50,
        )

    def test_lstm(self):
        self._check_layer(
            lambda rng: LSTM(2, 3, rng),
            lambda rng: rng.normal(size=(2, 5, 2)),
            trials=50,
        )

    def test_lstm_sequences(self):
        self._check_layer(
            lambda rng: LSTM(2, 3, rng, return_sequences=True),
            lambda rng: rng.normal(size=(2, 4, 2)),
            trials=50,
        )

    def test_input_gradients_through_stack(self):
        # perturb inputs instead of weights: checks backward's return value
        rng = np.random.default_rng(17)
        net = Sequential(
            [Conv2D(1, 2, rng), ReLU(), MaxPool2(), Flatten(), Dense(8, 3, rng)]
        )
        x = rng.normal(size=(1, 6, 6, 1))
        target = rng.normal(size=(1, 3))

        def loss_fn():
            return mse(net.forward(x), target)[0]

        out = net.forward(x)
        _, grad = mse(out, target)
        gx = net.backward(grad)
        err = check_gradients(loss_fn, {"x": x}, {"x": gx}, rng, max_coords=36)
        assert err < 1e-4

    def test_mse_zero_at_minimum(self):
        pred = np.array([[1.0, 2.0]])
        loss, grad = mse(pred, pred.copy())
        assert loss == 0.0
        np.testing.assert_allclose(grad, 0.0)


class TestOptimizers:
    def test_sgd_zero_gradient(self):
        params = {"w": np.array([1.0, 2.0])}
        SGD(lr=0.1, momentum=0.0).step(params, {"w": np.zeros(2)})
        np.testing.assert_allclose(params["w"], [1.0, 2.0])

    def test_sgd_one_step(self):
        params = {"w": np.array([1.0])}
        SGD(lr=0.01, momentum=0.0).step(params, {"w": np.array([2.0])})
        np.testing.assert_allclose(params["w"], [0.98])

    def test_adam_first_step_unit_scale(self):
        # first Adam update is ~lr regardless of gradient magnitude
        for scale in (1e-3, 1.0, 1e3):
            params = {"w": np.array([0.0])}
            Adam(lr=0.01).step(params, {"w": np.array([scale])})
            assert abs(params["w"][0]) == pytest.approx(0.01, rel=1e-4)

    def test_adam_deterministic(self):
        def run():
            rng = np.random.default_rng(5)
            params = {"w": rng.normal(size=4)}
            opt = Adam(lr=0.05)
            for _ in range(20):
                opt.step(params, {"w": params["w"] * 0.3 + 1.0})
            return params["w"]

        np.testing.assert_array_equal(run(), run())


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(4)
        arrays = {"a.w": rng.normal(size=(3, 4)), "b.b": rng.normal(size=7)}
        meta = {"kind": "test", "window": 10}
        path = tmp_path / "ck.bin"
        save_checkpoint(path, arrays, meta)
        loaded, got_meta = load_checkpoint(path)
        assert got_meta == meta
        for name in arrays:
            np.testing.assert_array_equal(loaded[name], arrays[name])

    def test_repeated_save_identical_bytes(self, tmp_path):
        arrays = {"w": np.arange(6.0).reshape(2, 3)}
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        save_checkpoint(p1, arrays, {"x": 1})
        save_checkpoint(p2, arrays, {"x": 1})
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError):
            load_checkpoint(path)
