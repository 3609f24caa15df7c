"""Loss functions returning (loss, aux, gradient-wrt-input) triples."""

import numpy as np


def softmax_xent(logits, labels):
    """Softmax cross-entropy, stabilized by max subtraction.

    logits: (n,) or (batch, n); labels: int index or (batch,) int array.
    Returns (mean loss, probabilities, dloss/dlogits). The gradient is
    already divided by the batch size.
    """
    squeeze = logits.ndim == 1
    logits = np.atleast_2d(logits)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    n = logits.shape[1]
    if n < 2:
        raise ValueError("need at least 2 classes")
    if labels.min() < 0 or labels.max() >= n:
        raise ValueError(f"label out of range for {n} classes")

    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    probs = expz / expz.sum(axis=1, keepdims=True)
    batch = logits.shape[0]
    rows = np.arange(batch)
    logp = shifted[rows, labels] - np.log(expz.sum(axis=1))
    loss = float(-logp.mean())
    grad = probs.copy()
    grad[rows, labels] -= 1.0
    grad /= batch
    if squeeze:
        return loss, probs[0], grad[0]
    return loss, probs, grad


def mse(pred, target):
    """Mean squared error over all elements; returns (loss, dloss/dpred)."""
    diff = pred - target
    loss = float(np.mean(diff * diff))
    grad = 2.0 * diff / diff.size
    return loss, grad
