import numpy as np
import pytest


def finite_difference(f, arrays, h=1e-5):
    """Central finite differences of the scalar ``f()`` w.r.t. each array.

    ``f`` must recompute from the (temporarily mutated) arrays on every
    call; this is the independent oracle the analytic gradients are
    checked against.
    """
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            old = a[ix]
            a[ix] = old + h
            fp = f()
            a[ix] = old - h
            fm = f()
            a[ix] = old
            g[ix] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def max_rel_err(analytic, numeric, floor=1.0):
    """Worst elementwise |a - n| / max(|a|, |n|, floor)."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = np.maximum.reduce([np.abs(analytic), np.abs(numeric), np.full_like(analytic, floor)])
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
