"""Central finite-difference gradient checking.

The checker perturbs a sample of individual parameter entries and compares
(loss(w+h) - loss(w-h)) / 2h against the analytic gradient. Relative error
uses a symmetric denominator with an absolute floor so near-zero gradients
do not blow up the ratio.
"""

import numpy as np


def check_gradients(loss_fn, params, grads, rng=None, step=1e-5, max_coords=40):
    """Return the max relative error between analytic and numeric gradients.

    loss_fn: callable() -> float, evaluating the loss at the current params
    (arrays are mutated in place for the probes and restored afterwards).
    params/grads: matching name->array dicts with the analytic gradients.
    max_coords: per-array cap on probed entries (all entries if smaller).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for name, arr in params.items():
        g = grads[name]
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        n = flat.size
        idx = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            lp = loss_fn()
            flat[i] = orig - step
            lm = loss_fn()
            flat[i] = orig
            num = (lp - lm) / (2.0 * step)
            denom = max(abs(num), abs(gflat[i]), 1e-8)
            rel = abs(num - gflat[i]) / denom
            worst = max(worst, rel)
    return worst
