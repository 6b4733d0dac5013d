"""Differentiable objective oracles with minibatch semantics.

Each oracle exposes value(x, batch) and gradient(x, batch) where batch is a
``Batch`` (list of sample indices) or None for the full dataset. Oracles are
read-only after construction and safe to call from two workers at once.
Smoothness constants are exact where a closed form exists and None for the
nonconvex network oracle, where only an empirical estimate makes sense.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from samkit.errors import ConfigError
from samkit.vecmath import SeededRng, as_vector

RIDGE = 1e-3  # logistic regression ridge; keeps L finite and the minimizer unique


@dataclass(frozen=True)
class Batch:
    """Immutable minibatch: sample indices plus a monotone stream counter."""

    indices: tuple
    id: int

    def __post_init__(self):
        if len(self.indices) == 0:
            raise ConfigError("batch must be non-empty")

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class LabelNoiseSpec:
    """Flip exactly floor(flip_fraction * n) labels, chosen by the seed."""

    flip_fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.flip_fraction < 1.0:
            raise ConfigError("flip_fraction must be in [0, 1)")


class ProblemOracle:
    """Base class: value/gradient on (point, batch) with known data size."""

    dim: int
    n_samples: int
    lipschitz_L = None  # float when a global constant is known, else None
    convex = False
    name = "oracle"

    def value(self, x, batch=None) -> float:
        raise NotImplementedError

    def gradient(self, x, batch=None) -> np.ndarray:
        raise NotImplementedError

    def _rows(self, batch):
        if batch is None:
            return slice(None)
        idx = np.asarray(batch.indices, dtype=np.intp)
        if idx.min() < 0 or idx.max() >= self.n_samples:
            raise ConfigError("batch indices outside [0, n_samples)")
        return idx


class ToyQuadratic(ProblemOracle):
    """f(x) = ||x||^2 with gradient 2x; the separable sanity objective."""

    convex = True
    name = "toy_quadratic"

    def __init__(self, dim):
        if dim < 1:
            raise ConfigError("dim must be >= 1")
        self.dim = int(dim)
        self.n_samples = 1
        self.lipschitz_L = 2.0

    def value(self, x, batch=None):
        x = as_vector(x, self.dim)
        return float(np.dot(x, x))

    def gradient(self, x, batch=None):
        x = as_vector(x, self.dim)
        return 2.0 * x


def toy_quadratic(dim) -> ToyQuadratic:
    return ToyQuadratic(dim)


def power_iteration_sym(A, tol=1e-10, max_iter=10_000, seed=0):
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    d = A.shape[0]
    if d == 1:
        return float(A[0, 0])
    v = SeededRng(seed, 0xA11CE).normal(d)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = A @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        lam_new = float(v @ (A @ v))
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return lam_new
        lam = lam_new
    return lam


class PsdQuadratic(ProblemOracle):
    """f(x) = 0.5 x'Ax - b'x for symmetric PSD A; gradient Ax - b."""

    convex = True
    name = "psd_quadratic"

    def __init__(self, A, b):
        A = np.ascontiguousarray(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ConfigError("A must be a square matrix")
        if not np.allclose(A, A.T, atol=1e-12, rtol=0.0):
            raise ConfigError("A must be symmetric")
        eigs = np.linalg.eigvalsh(A)
        if eigs.min() < -1e-10:
            raise ConfigError("A must be positive semidefinite")
        self.A = A
        self.b = as_vector(b, A.shape[0])
        self.dim = A.shape[0]
        self.n_samples = 1
        self.lipschitz_L = power_iteration_sym(A)

    def value(self, x, batch=None):
        x = as_vector(x, self.dim)
        return float(0.5 * x @ (self.A @ x) - self.b @ x)

    def gradient(self, x, batch=None):
        x = as_vector(x, self.dim)
        return self.A @ x - self.b

    def minimizer(self):
        """Least-squares solution of Ax = b (exact minimizer when A > 0)."""
        return np.linalg.lstsq(self.A, self.b, rcond=None)[0]

    def min_value(self):
        return self.value(self.minimizer())


def psd_quadratic(A, b) -> PsdQuadratic:
    return PsdQuadratic(A, b)


def random_psd_quadratic(dim, L, seed, min_eig_frac=0.05):
    """Random test quadratic with exact top eigenvalue L and known minimizer.

    Returns (oracle, x_star). Eigenvalues are drawn in
    [min_eig_frac*L, 0.95*L] with the largest forced to L, so the matrix is
    positive definite and power iteration has a spectral gap to work with.
    """
    rng = SeededRng(seed, 0x9D)
    if dim < 1:
        raise ConfigError("dim must be >= 1")
    eigs = min_eig_frac * L + (0.95 - min_eig_frac) * L * rng.uniform(dim)
    eigs[0] = L
    M = rng.normal(dim * dim).reshape(dim, dim)
    Q, _ = np.linalg.qr(M)
    A = (Q * eigs) @ Q.T
    A = 0.5 * (A + A.T)
    x_star = rng.normal(dim) / math.sqrt(dim)
    b = A @ x_star
    oracle = PsdQuadratic(A, b)
    # Hand the generator's exact constant to downstream checks.
    oracle.lipschitz_L = float(L)
    return oracle, x_star


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _log1p_exp(z):
    # log(1 + exp(z)) = max(z, 0) + log1p(exp(-|z|)), stable for any z
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


class LogisticRegression(ProblemOracle):
    """Binary cross-entropy on synthetic Gaussian blobs plus a small ridge.

    value(x, B) = mean_i BCE(sigmoid(a_i . x), y_i) + (RIDGE/2) ||x||^2
    The global smoothness constant is ||X||_2^2 / (4 n) + RIDGE.
    """

    convex = True
    name = "logistic_regression"

    def __init__(self, X, y):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ConfigError("X must be (n, dim) and y (n,)")
        if not set(np.unique(y)) <= {0.0, 1.0}:
            raise ConfigError("labels must be 0/1")
        self.X = X
        self.y = y
        self.n_samples, self.dim = X.shape
        sq = power_iteration_sym(X.T @ X)
        self.lipschitz_L = sq / (4.0 * self.n_samples) + RIDGE

    def value(self, x, batch=None):
        x = as_vector(x, self.dim)
        rows = self._rows(batch)
        z = self.X[rows] @ x
        yb = self.y[rows]
        # BCE(sigmoid(z), y) = log(1+exp(z)) - y*z
        loss = float(np.mean(_log1p_exp(z) - yb * z))
        return loss + 0.5 * RIDGE * float(np.dot(x, x))

    def gradient(self, x, batch=None):
        x = as_vector(x, self.dim)
        rows = self._rows(batch)
        Xb = self.X[rows]
        z = Xb @ x
        p = _sigmoid(z)
        g = Xb.T @ (p - self.y[rows]) / len(p)
        return g + RIDGE * x


def logistic_regression(n, dim, seed, noise: LabelNoiseSpec = None) -> LogisticRegression:
    """Two-class Gaussian blob dataset with optional exact-count label flips."""
    if n < 2 or dim < 1:
        raise ConfigError("need n >= 2 and dim >= 1")
    rng = SeededRng(seed, 0x10619)
    center = 1.5 / math.sqrt(dim) * np.ones(dim)
    n_pos = n // 2
    y = np.zeros(n)
    y[:n_pos] = 1.0
    X = rng.normal(n * dim).reshape(n, dim)
    X[:n_pos] += center
    X[n_pos:] -= center
    order = rng.permutation(n)
    X, y = X[order], y[order]
    if noise is not None and noise.flip_fraction > 0:
        k = int(noise.flip_fraction * n)
        flip = SeededRng(noise.seed, 0xF11B).choice(n, size=k, replace=False)
        y[flip] = 1.0 - y[flip]
    return LogisticRegression(X, y)


class TinyMlp(ProblemOracle):
    """One-hidden-layer tanh network with squared loss, manual backprop.

    The parameter vector packs [W1 (h*din), b1 (h), w2 (h), b2 (1)].
    No global smoothness constant exists; use ``empirical_smoothness`` on a
    recorded run for a local estimate.
    """

    convex = False
    name = "tiny_mlp"
    lipschitz_L = None

    def __init__(self, X, y, hidden):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64)
        if hidden < 1:
            raise ConfigError("hidden must be >= 1")
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ConfigError("X must be (n, dim_in) and y (n,)")
        self.X = X
        self.y = y
        self.hidden = int(hidden)
        self.n_samples, self.dim_in = X.shape
        self.dim = hidden * self.dim_in + hidden + hidden + 1

    def _unpack(self, x):
        h, din = self.hidden, self.dim_in
        i = 0
        W1 = x[i:i + h * din].reshape(h, din); i += h * din
        b1 = x[i:i + h]; i += h
        w2 = x[i:i + h]; i += h
        b2 = x[i]
        return W1, b1, w2, b2

    def value(self, x, batch=None):
        x = as_vector(x, self.dim)
        rows = self._rows(batch)
        W1, b1, w2, b2 = self._unpack(x)
        Xb, yb = self.X[rows], self.y[rows]
        hid = np.tanh(Xb @ W1.T + b1)
        pred = hid @ w2 + b2
        return float(0.5 * np.mean((pred - yb) ** 2))

    def gradient(self, x, batch=None):
        x = as_vector(x, self.dim)
        rows = self._rows(batch)
        W1, b1, w2, b2 = self._unpack(x)
        Xb, yb = self.X[rows], self.y[rows]
        m = len(yb)
        hid = np.tanh(Xb @ W1.T + b1)          # (m, h)
        pred = hid @ w2 + b2                   # (m,)
        dpred = (pred - yb) / m                # d(loss)/d(pred)
        dw2 = hid.T @ dpred
        db2 = float(np.sum(dpred))
        dhid = np.outer(dpred, w2) * (1.0 - hid ** 2)
        dW1 = dhid.T @ Xb
        db1 = dhid.sum(axis=0)
        return np.concatenate([dW1.ravel(), db1, dw2, [db2]])


def tiny_mlp(n, dim_in, hidden, seed) -> TinyMlp:
    """Synthetic regression data from a fixed random teacher network."""
    if n < 1:
        raise ConfigError("need n >= 1")
    rng = SeededRng(seed, 0x3317)
    X = rng.normal(n * dim_in).reshape(n, dim_in)
    W = rng.normal(hidden * dim_in).reshape(hidden, dim_in) / math.sqrt(dim_in)
    v = rng.normal(hidden) / math.sqrt(hidden)
    y = np.tanh(X @ W.T) @ v + 0.05 * rng.normal(n)
    return TinyMlp(X, y, hidden)


def tiny_mlp_from_data(X, y, hidden) -> TinyMlp:
    return TinyMlp(X, y, hidden)


def empirical_smoothness(oracle, points):
    """Max local curvature ||grad f(x)-grad f(x')|| / ||x-x'|| over consecutive points."""
    best = 0.0
    for a, b in zip(points[:-1], points[1:]):
        dx = np.linalg.norm(np.asarray(b) - np.asarray(a))
        if dx == 0.0:
            continue
        dg = np.linalg.norm(oracle.gradient(b) - oracle.gradient(a))
        best = max(best, dg / dx)
    return best


def batches_per_epoch(n_samples, batch_size):
    return (n_samples + batch_size - 1) // batch_size


def sample_next_batch(oracle, rng: SeededRng, batch_size: int, counter: int) -> Batch:
    """Batch number ``counter`` of an epoch-reshuffled stream.

    Within an epoch the samples form a random partition (the last batch may
    be short); the permutation is a pure function of (rng seed, epoch), so
    the same counter always yields the same batch regardless of which worker
    asks or how many batches were drawn before.
    """
    n = oracle.n_samples
    if not 1 <= batch_size <= n:
        raise ConfigError(f"batch_size must be in [1, {n}]")
    per_epoch = batches_per_epoch(n, batch_size)
    epoch, slot = divmod(int(counter), per_epoch)
    perm = rng.split("epoch", epoch).permutation(n)
    lo = slot * batch_size
    hi = min(lo + batch_size, n)
    return Batch(indices=tuple(int(i) for i in perm[lo:hi]), id=int(counter))


def dump_dataset_csv(oracle, path):
    """Write one row per sample: feature columns then the label/target."""
    if not hasattr(oracle, "X"):
        raise ConfigError(f"{oracle.name} has no sample data to dump")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(oracle.X.shape[1])] + ["label"])
        for row, lab in zip(oracle.X, oracle.y):
            w.writerow([repr(float(v)) for v in row] + [repr(float(lab))])


def load_dataset_csv(path):
    """Read a dataset written by ``dump_dataset_csv``; returns (X, y)."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if not header or header[-1] != "label":
            raise ConfigError("expected a header ending in 'label'")
        rows = [[float(v) for v in row] for row in r]
    data = np.asarray(rows, dtype=np.float64)
    if data.size == 0:
        raise ConfigError("dataset file has no rows")
    return data[:, :-1].copy(), data[:, -1].copy()


def finite_difference_gradient(oracle, x, batch=None, h=1e-6):
    """Central-difference gradient, the independent check for backprop code."""
    x = as_vector(x)
    g = np.empty_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (oracle.value(x + e, batch) - oracle.value(x - e, batch)) / (2.0 * h)
    return g
