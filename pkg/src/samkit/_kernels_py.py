"""Pure-numpy implementations of the hot per-step vector kernels.

Formula and operand order are fixed and must be kept in sync with the
compiled twin in ``_kernels.pyx``; trajectory-level tests compare the two
backends against each other.  All kernels take float64 1-D arrays, never
mutate their inputs, and return freshly allocated arrays.
"""

import numpy as np

NAME = "python"


def l2_norm(x):
    return float(np.sqrt(np.dot(x, x)))


def normalize_or_zero(g):
    """g / ||g||_2, or the zero vector when ||g|| == 0."""
    n = np.sqrt(np.dot(g, g))
    if n == 0.0:
        return np.zeros_like(g)
    return g / n


def axpy(a, x, y):
    """a*x + y."""
    return a * x + y


def combine(a, x, b, y):
    """a*x + b*y, evaluated in exactly this operand order."""
    return a * x + b * y


def sgd_momentum_step(x, v, g, eta, mu, wd):
    """One SGD-with-momentum step; weight decay is coupled (added to g).

    Returns (x_new, v_new).
    """
    gg = g + wd * x
    v_new = mu * v + gg
    x_new = x - eta * v_new
    return x_new, v_new


def adamw_step(x, m1, m2, g, eta, b1, b2, eps, wd, step):
    """One AdamW step with decoupled weight decay and bias correction.

    ``step`` is the 1-based update count. Returns (x_new, m1_new, m2_new).
    """
    m1_new = b1 * m1 + (1.0 - b1) * g
    m2_new = b2 * m2 + (1.0 - b2) * (g * g)
    bc1 = 1.0 - b1 ** step
    bc2 = 1.0 - b2 ** step
    denom = np.sqrt(m2_new / bc2) + eps
    x_new = x - eta * ((m1_new / bc1) / denom) - (eta * wd) * x
    return x_new, m1_new, m2_new
