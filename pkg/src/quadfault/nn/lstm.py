"""LSTM cell and layer with backpropagation through time.

Gate math, with * the Hadamard product and [h, x] concatenation:

    f_t = sigmoid(w_f @ [h_prev, x_t] + b_f)
    i_t = sigmoid(w_i @ [h_prev, x_t] + b_i)
    c~_t = tanh(w_c @ [h_prev, x_t] + b_c)
    o_t = sigmoid(w_o @ [h_prev, x_t] + b_o)
    c_t = f_t * c_prev + i_t * c~_t
    h_t = o_t * tanh(c_t)

Weight matrices are k x (d + k) with the hidden block first, matching the
concatenation order above.
"""

from dataclasses import dataclass

import numpy as np

from quadfault.nn.layers import Layer, glorot_uniform


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class LstmCellWeights:
    """One cell's gate weights; k hidden units over d-dimensional inputs."""

    w_f: np.ndarray
    w_i: np.ndarray
    w_o: np.ndarray
    w_c: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    def __post_init__(self):
        k, dk = self.w_f.shape
        for name in ("w_i", "w_o", "w_c"):
            if getattr(self, name).shape != (k, dk):
                raise ValueError(f"{name} shape {getattr(self, name).shape} != {(k, dk)}")
        for name in ("b_f", "b_i", "b_o", "b_c"):
            if getattr(self, name).shape != (k,):
                raise ValueError(f"{name} shape {getattr(self, name).shape} != {(k,)}")

    @property
    def hidden_size(self):
        return self.w_f.shape[0]

    @property
    def input_size(self):
        return self.w_f.shape[1] - self.w_f.shape[0]


def lstm_cell_forward(x_t, h_prev, c_prev, w: LstmCellWeights):
    """Single-step cell update; returns (h_t, c_t).

    Accepts 1-d vectors or (batch, dim) arrays.
    """
    squeeze = x_t.ndim == 1
    x_t = np.atleast_2d(x_t)
    h_prev = np.atleast_2d(h_prev)
    c_prev = np.atleast_2d(c_prev)
    d, k = w.input_size, w.hidden_size
    if x_t.shape[1] != d:
        raise ValueError(f"input size {x_t.shape[1]} != {d}")
    if h_prev.shape[1] != k or c_prev.shape[1] != k:
        raise ValueError("hidden/cell state size mismatch")

    hx = np.concatenate([h_prev, x_t], axis=1)
    f = _sigmoid(hx @ w.w_f.T + w.b_f)
    i = _sigmoid(hx @ w.w_i.T + w.b_i)
    o = _sigmoid(hx @ w.w_o.T + w.b_o)
    c_bar = np.tanh(hx @ w.w_c.T + w.b_c)
    c_t = f * c_prev + i * c_bar
    h_t = o * np.tanh(c_t)
    if squeeze:
        return h_t[0], c_t[0]
    return h_t, c_t


class LSTM(Layer):
    """LSTM layer over (batch, T, d) sequences.

    ``return_sequences=True`` emits (batch, T, k); otherwise the final
    hidden state (batch, k). Gates are stored in one fused (d+k, 4k) matrix
    ordered f, i, o, c for speed; ``cell_weights()`` unpacks the per-gate
    view for the spec-shaped cell function.
    """

    def __init__(self, input_size, hidden_size, rng, return_sequences=False):
        super().__init__()
        self.d = input_size
        self.k = hidden_size
        self.return_sequences = return_sequences
        dk = input_size + hidden_size
        self.params = {
            "w": glorot_uniform(rng, (dk, 4 * hidden_size), dk, hidden_size),
            "b": np.zeros(4 * hidden_size),
        }

    def cell_weights(self) -> LstmCellWeights:
        k = self.k
        w = self.params["w"]
        b = self.params["b"]
        # fused layout is [h | x] rows; cell API wants k x (d+k) with h first
        return LstmCellWeights(
            w_f=w[:, 0 * k : 1 * k].T.copy(),
            w_i=w[:, 1 * k : 2 * k].T.copy(),
            w_o=w[:, 2 * k : 3 * k].T.copy(),
            w_c=w[:, 3 * k : 4 * k].T.copy(),
            b_f=b[0 * k : 1 * k].copy(),
            b_i=b[1 * k : 2 * k].copy(),
            b_o=b[2 * k : 3 * k].copy(),
            b_c=b[3 * k : 4 * k].copy(),
        )

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] != self.d:
            raise ValueError(f"LSTM expects (batch, T, {self.d}), got {x.shape}")
        b, T, _ = x.shape
        k = self.k
        h = np.zeros((b, k))
        c = np.zeros((b, k))
        self._x = x
        self._cache = []
        hs = np.empty((b, T, k))
        for t in range(T):
            hx = np.concatenate([h, x[:, t, :]], axis=1)
            z = hx @ self.params["w"] + self.params["b"]
            f = _sigmoid(z[:, 0 * k : 1 * k])
            i = _sigmoid(z[:, 1 * k : 2 * k])
            o = _sigmoid(z[:, 2 * k : 3 * k])
            cb = np.tanh(z[:, 3 * k : 4 * k])
            c_new = f * c + i * cb
            tc = np.tanh(c_new)
            h = o * tc
            self._cache.append((hx, f, i, o, cb, c, tc))
            c = c_new
            hs[:, t, :] = h
        self._hs = hs
        return hs if self.return_sequences else hs[:, -1, :]

    def backward(self, gout):
        b, T, _ = self._x.shape
        k = self.k
        if self.return_sequences:
            gh_seq = gout
        else:
            gh_seq = np.zeros((b, T, k))
            gh_seq[:, -1, :] = gout

        gw = np.zeros_like(self.params["w"])
        gb = np.zeros_like(self.params["b"])
        dx = np.empty_like(self._x)
        gh_next = np.zeros((b, k))
        gc_next = np.zeros((b, k))
        for t in range(T - 1, -1, -1):
            hx, f, i, o, cb, c_prev, tc = self._cache[t]
            gh = gh_seq[:, t, :] + gh_next
            go = gh * tc
            gc = gh * o * (1.0 - tc * tc) + gc_next
            gf = gc * c_prev
            gi = gc * cb
            gcb = gc * i
            gz = np.concatenate(
                [
                    gf * f * (1.0 - f),
                    gi * i * (1.0 - i),
                    go * o * (1.0 - o),
                    gcb * (1.0 - cb * cb),
                ],
                axis=1,
            )
            gw += hx.T @ gz
            gb += gz.sum(axis=0)
            ghx = gz @ self.params["w"].T
            gh_next = ghx[:, :k]
            dx[:, t, :] = ghx[:, k:]
            gc_next = gc * f
        self.grads = {"w": gw, "b": gb}
        return dx
