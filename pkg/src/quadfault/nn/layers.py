"""Feed-forward layers with hand-derived backward passes.

Conventions: batch-first arrays, float64, channels-last for images
(batch, H, W, C). Each layer caches what its backward pass needs during
forward; backward returns the gradient w.r.t. the input and fills
``self.grads`` with parameter gradients (summed over the batch, then
divided by batch size by the loss, not here).
"""

import numpy as np


def glorot_uniform(rng, shape, fan_in, fan_out):
    """Uniform init on +-sqrt(6/(fan_in+fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base layer: parameterless unless a subclass fills params/grads."""

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, gout):
        raise NotImplementedError


class Dense(Layer):
    """Fully connected layer, y = x @ w + b, optional ReLU."""

    def __init__(self, n_in, n_out, rng, relu=False):
        super().__init__()
        self.relu = relu
        self.params = {
            "w": glorot_uniform(rng, (n_in, n_out), n_in, n_out),
            "b": np.zeros(n_out),
        }

    def forward(self, x):
        self._x = x
        z = x @ self.params["w"] + self.params["b"]
        if self.relu:
            self._z = z
            return np.maximum(z, 0.0)
        return z

    def backward(self, gout):
        if self.relu:
            gout = gout * (self._z > 0.0)
        self.grads = {
            "w": self._x.T @ gout,
            "b": gout.sum(axis=0),
        }
        return gout @ self.params["w"].T


class ReLU(Layer):
    def forward(self, x):
        self._mask = x > 0.0
        return x * self._mask

    def backward(self, gout):
        return gout * self._mask


class Flatten(Layer):
    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, gout):
        return gout.reshape(self._shape)


def _im2col(x, kh, kw):
    """View (b,H,W,C) as (b, oh, ow, kh, kw, C) patches without copying."""
    b, h, w, c = x.shape
    oh, ow = h - kh + 1, w - kw + 1
    s0, s1, s2, s3 = x.strides
    return np.lib.stride_tricks.as_strided(
        x, (b, oh, ow, kh, kw, c), (s0, s1, s2, s1, s2, s3), writeable=False
    )


class Conv2D(Layer):
    """Valid-mode cross-correlation, stride 1; activation handled separately."""

    def __init__(self, in_channels, out_channels, rng, kernel=3):
        super().__init__()
        kh = kw = kernel
        fan_in = kh * kw * in_channels
        fan_out = kh * kw * out_channels
        self.kernel = kernel
        self.params = {
            "w": glorot_uniform(rng, (kh, kw, in_channels, out_channels), fan_in, fan_out),
            "b": np.zeros(out_channels),
        }

    def forward(self, x):
        if x.ndim != 4:
            raise ValueError(f"Conv2D expects (batch, H, W, C) input, got shape {x.shape}")
        k = self.kernel
        b, h, w, c = x.shape
        if h < k or w < k:
            raise ValueError(f"input {h}x{w} smaller than {k}x{k} kernel")
        self._x = x
        # flatten batch and positions into one GEMM
        cols = _im2col(x, k, k).reshape(b * (h - k + 1) * (w - k + 1), k * k * c)
        self._cols = cols
        wmat = self.params["w"].reshape(k * k * c, -1)
        out = cols @ wmat + self.params["b"]
        return out.reshape(b, h - k + 1, w - k + 1, -1)

    def backward(self, gout):
        k = self.kernel
        b, oh, ow, n_out = gout.shape
        gflat = gout.reshape(b * oh * ow, n_out)
        c = self._x.shape[3]
        wmat = self.params["w"].reshape(k * k * c, n_out)
        self.grads = {
            "w": (self._cols.T @ gflat).reshape(self.params["w"].shape),
            "b": gflat.sum(axis=0),
        }
        # dx: scatter the kernel taps back onto the input grid
        dcols = (gflat @ wmat.T).reshape(b, oh, ow, k, k, c)
        dx = np.zeros_like(self._x)
        for i in range(k):
            for j in range(k):
                dx[:, i : i + oh, j : j + ow, :] += dcols[:, :, :, i, j, :]
        return dx


class MaxPool2(Layer):
    """Non-overlapping 2x2 max pool per channel; trailing odd row/col dropped."""

    @staticmethod
    def _taps(x, oh, ow):
        xs = x[:, : oh * 2, : ow * 2, :]
        return (xs[:, 0::2, 0::2], xs[:, 0::2, 1::2], xs[:, 1::2, 0::2], xs[:, 1::2, 1::2])

    def forward(self, x):
        b, h, w, c = x.shape
        if h < 2 or w < 2:
            raise ValueError(f"MaxPool2 needs H,W >= 2, got {h}x{w}")
        oh, ow = h // 2, w // 2
        self._in_shape = x.shape
        self._x = x
        a, bb, cc, dd = self._taps(x, oh, ow)
        self._out = np.maximum(np.maximum(a, bb), np.maximum(cc, dd))
        return self._out

    def backward(self, gout):
        b, oh, ow, c = gout.shape
        dx = np.zeros(self._in_shape)
        # route each gradient to the first tap matching the max (ties first-win)
        used = np.zeros(gout.shape, dtype=bool)
        for tap, view in zip(self._taps(self._x, oh, ow), self._taps(dx, oh, ow)):
            hit = (tap == self._out) & ~used
            view += gout * hit
            used |= hit
        return dx


class Sequential:
    """Ordered layer stack with namespaced parameter access."""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, gout):
        for layer in reversed(self.layers):
            gout = layer.backward(gout)
        return gout

    def params(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params.items():
                out[f"{i}.{name}"] = arr
        return out

    def grads(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.grads.items():
                out[f"{i}.{name}"] = arr
        return out

    def set_params(self, params):
        for i, layer in enumerate(self.layers):
            for name in layer.params:
                layer.params[name] = params[f"{i}.{name}"]
