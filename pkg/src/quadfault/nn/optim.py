"""SGD with momentum and Adam, operating on name->array parameter dicts."""

import numpy as np


class SGD:
    def __init__(self, lr=0.01, momentum=0.9):
        self.lr = lr
        self.momentum = momentum
        self._vel = {}

    def step(self, params, grads):
        for name, g in grads.items():
            if self.momentum > 0.0:
                v = self._vel.get(name)
                if v is None:
                    v = np.zeros_like(g)
                v = self.momentum * v + g
                self._vel[name] = v
                update = v
            else:
                update = g
            params[name] -= self.lr * update


class Adam:
    def __init__(self, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = {}
        self._v = {}
        self._t = 0

    def step(self, params, grads):
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self._t
        bias2 = 1.0 - b2**self._t
        for name, g in grads.items():
            m = self._m.get(name)
            if m is None:
                m = np.zeros_like(g)
                self._v[name] = np.zeros_like(g)
            v = self._v[name]
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            self._m[name] = m
            self._v[name] = v
            params[name] -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def make_optimizer(name, lr, momentum=0.9):
    if name == "adam":
        return Adam(lr=lr)
    if name == "sgd":
        return SGD(lr=lr, momentum=momentum)
    raise ValueError(f"unknown optimizer {name!r} (expected 'adam' or 'sgd')")
