"""Central finite differences for the gradient tests."""

import numpy as np


def rel_error(a, b):
    """Norm-wise relative error, robust to entries that are exactly zero."""
    a = np.ravel(a)
    b = np.ravel(b)
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def numeric_grad(f, x, h=1e-6):
    """d f / d x for scalar ``f()`` that reads ``x`` in place."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        up = f()
        x[i] = old - h
        down = f()
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def check_layer(layer, x, rng, h=1e-6):
    """Worst relative error over the input and every parameter for the
    scalar probe ``sum(layer(x) * r)``."""
    out = layer.forward(x)
    r = rng.standard_normal(out.shape)
    gx = layer.backward(r)
    analytic = {k: v.copy() for k, v in layer.grads.items()}

    def loss():
        return float(np.sum(layer.forward(x) * r))

    errs = [rel_error(gx, numeric_grad(loss, x, h))]
    for name, p in layer.params.items():
        errs.append(rel_error(analytic[name], numeric_grad(loss, p, h)))
    return max(errs)
