"""Descent verification and diagnostics over recorded runs.

The central object is the potential

    V_t = f(x_t) + 0.5 * (1 - eta_t * L) * ||grad f(x_t) - grad f(y_t)||^2

for the parallelizable scheme with interpolation 0. On a convex L-smooth
objective with a non-increasing step sequence eta_t < min(1, c/L), one update
decreases V by eta_t*(1 - eta_t*L/2)*||grad f(x_t)||^2 up to an error budget
eta_t^2 * rho^2 * C, with C = (L^2 + L^3 + L^4/(1-c^2)) / 2. ``descent_check``
verifies this per step on a recorded trace; ``convergence_bound`` verifies the
horizon-level consequences (a weighted-average gradient-norm bound and a
min-over-steps bound). All analysis quantities use full-batch gradients even
when the run itself was stochastic.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from samkit.errors import ConfigError
from samkit.pipeline import IterateTrace
from samkit.vecmath import _eta_at

__all__ = [
    "descent_error_constant",
    "potential",
    "descent_check",
    "convergence_bound",
    "grad_alignment",
    "DescentReport",
    "BoundReport",
    "AlignmentSeries",
    "delta0_quadratic",
    "estimate_inf_value",
]


def descent_error_constant(L, c):
    """C(L, c) = (L^2 + L^3 + L^4 / (1 - c^2)) / 2; increasing in both arguments."""
    if not 0.0 < c < 1.0:
        raise ConfigError("c must be in (0, 1)")
    if not L > 0.0:
        raise ConfigError("L must be > 0")
    return 0.5 * (L**2 + L**3 + L**4 / (1.0 - c * c))


def potential(x, y, eta, L, oracle):
    """The per-step potential with full-batch gradients.

    Warns (and still returns the value) when eta*L >= 1, where the
    gradient-gap coefficient stops being positive.
    """
    if eta * L >= 1.0:
        warnings.warn(
            f"eta*L = {eta * L:.3g} >= 1: potential coefficient is not positive",
            RuntimeWarning, stacklevel=2,
        )
    gx = oracle.gradient(x, None)
    gy = oracle.gradient(y, None)
    d = gx - gy
    return oracle.value(x, None) + 0.5 * (1.0 - eta * L) * float(np.dot(d, d))


def _full_step_grid(trace: IterateTrace):
    """Rows for every t in 0..T with vectors, or None if the trace is sparser."""
    rows = {r.t: r for r in trace.rows}
    grid = []
    for t in range(trace.T + 1):
        r = rows.get(t)
        if r is None or r.x is None or r.gx is None:
            return None
        grid.append(r)
    return grid


def _eta_series(trace: IterateTrace, upto_inclusive):
    sched = trace.meta["schedule"]
    return np.array([_eta_at(sched, t, trace.T) for t in range(upto_inclusive + 1)])


@dataclass
class DescentReport:
    applicable: bool
    reason: str = ""
    L: float = None
    c: float = None
    C: float = None
    rho: float = None
    tol: float = None
    V: np.ndarray = None          # V_0 .. V_T
    decrease: np.ndarray = None   # eta_t (1 - eta_t L / 2) ||grad f(x_t)||^2
    budget: np.ndarray = None     # eta_t^2 rho^2 C
    residual: np.ndarray = None   # V_{t+1} - V_t + decrease - budget

    @property
    def max_residual(self):
        return float(np.max(self.residual)) if self.residual is not None else math.nan

    @property
    def passed(self):
        return bool(self.applicable and np.all(self.residual <= self.tol))

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "V", "V_next", "decrease", "budget", "residual"])
            if self.applicable:
                for t in range(len(self.residual)):
                    w.writerow([t, repr(self.V[t]), repr(self.V[t + 1]),
                                repr(self.decrease[t]), repr(self.budget[t]),
                                repr(self.residual[t])])
            w.writerow(["summary",
                        f"applicable={self.applicable}",
                        f"reason={self.reason}",
                        f"max_residual={self.max_residual!r}",
                        f"tol={self.tol!r}",
                        f"passed={self.passed}"])


def _descent_gate(trace: IterateTrace, L, c):
    meta = trace.meta
    if trace.method != "sampa" or meta.get("lam", None) != 0.0:
        return "requires the parallelizable scheme with interpolation 0"
    if not meta["base"].plain:
        return "requires the plain gradient base optimizer"
    if L is None:
        return "requires a known smoothness constant"
    grid = _full_step_grid(trace)
    if grid is None:
        return "requires record_every=1 with recorded vectors"
    r0 = grid[0]
    if r0.y is None or not np.array_equal(r0.x, r0.y):
        return "requires x0 == y0"
    etas = _eta_series(trace, trace.T)
    if np.any(np.diff(etas) > 0):
        return "requires a non-increasing step sequence"
    cap = min(1.0, c / L)
    if not etas[0] < cap:
        return f"requires eta_t < min(1, c/L) = {cap:.3g}"
    return None


def descent_check(trace: IterateTrace, rho, L, c=0.5) -> DescentReport:
    """Per-step residuals of the potential descent inequality.

    The report is marked not-applicable (rather than failed) when the run
    sits outside the inequality's regime. tol = 1e-10 * max(1, |V_0|).
    """
    reason = _descent_gate(trace, L, c)
    if reason is not None:
        return DescentReport(applicable=False, reason=reason)
    C = descent_error_constant(L, c)
    grid = _full_step_grid(trace)
    etas = _eta_series(trace, trace.T)
    T = trace.T
    V = np.empty(T + 1)
    for t, row in enumerate(grid):
        d = row.gx - row.gy
        V[t] = row.f + 0.5 * (1.0 - etas[t] * L) * float(np.dot(d, d))
    gsq = np.array([float(np.dot(r.gx, r.gx)) for r in grid[:T]])
    eta_t = etas[:T]
    decrease = eta_t * (1.0 - eta_t * L / 2.0) * gsq
    budget = eta_t**2 * rho**2 * C
    residual = V[1:] - V[:-1] + decrease - budget
    tol = 1e-10 * max(1.0, abs(V[0]))
    return DescentReport(
        applicable=True, L=L, c=c, C=C, rho=rho, tol=tol,
        V=V, decrease=decrease, budget=budget, residual=residual,
    )


@dataclass
class BoundReport:
    applicable: bool
    reason: str = ""
    L: float = None
    C: float = None
    rho: float = None
    delta0: float = None
    weights: np.ndarray = None
    grad_sq: np.ndarray = None
    lhs_weighted: float = None
    rhs_weighted: float = None
    lhs_min: float = None
    rhs_min: float = None

    @property
    def weights_sum(self):
        return float(np.sum(self.weights)) if self.weights is not None else math.nan

    @property
    def weighted_holds(self):
        return bool(self.applicable and self.lhs_weighted <= self.rhs_weighted)

    @property
    def min_holds(self):
        return bool(self.applicable and self.lhs_min <= self.rhs_min)

    @property
    def passed(self):
        return self.weighted_holds and self.min_holds

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "weight", "grad_sq"])
            if self.applicable:
                for t in range(len(self.weights)):
                    w.writerow([t, repr(self.weights[t]), repr(self.grad_sq[t])])
            w.writerow(["summary",
                        f"applicable={self.applicable}",
                        f"reason={self.reason}",
                        f"lhs_weighted={self.lhs_weighted!r}",
                        f"rhs_weighted={self.rhs_weighted!r}",
                        f"lhs_min={self.lhs_min!r}",
                        f"rhs_min={self.rhs_min!r}",
                        f"passed={self.passed}"])


def convergence_bound(trace: IterateTrace, rho, L, delta0, c=0.5) -> BoundReport:
    """Horizon-level gradient-norm bounds implied by the per-step descent.

    Checks the weighted-average inequality

        sum_t w_t ||grad f(x_t)||^2 <= (delta0 + C rho^2 sum_t eta_t^2) / S,
        w_t = eta_t (1 - eta_t L/2) / S,  S = sum_t eta_t (1 - eta_t L/2)

    and the min-over-steps bound with the combined-case constant

        min_t ||grad f(x_t)||^2 <= (8/3) (2 L delta0 / T + rho sqrt(delta0 C) / sqrt(T)).
    """
    if delta0 is None:
        return BoundReport(applicable=False, reason="delta0 unavailable (inf f unknown)")
    reason = _descent_gate(trace, L, c)
    if reason is not None:
        return BoundReport(applicable=False, reason=reason)
    C = descent_error_constant(L, c)
    grid = _full_step_grid(trace)
    T = trace.T
    etas = _eta_series(trace, T - 1)
    gsq = np.array([float(np.dot(r.gx, r.gx)) for r in grid[:T]])
    raw = etas * (1.0 - etas * L / 2.0)
    S = float(np.sum(raw))
    weights = raw / S
    lhs_weighted = float(np.dot(weights, gsq))
    rhs_weighted = (delta0 + C * rho**2 * float(np.sum(etas**2))) / S
    lhs_min = float(np.min(gsq))
    rhs_min = (8.0 / 3.0) * (2.0 * L * delta0 / T + rho * math.sqrt(delta0 * C) / math.sqrt(T))
    return BoundReport(
        applicable=True, L=L, C=C, rho=rho, delta0=delta0,
        weights=weights, grad_sq=gsq,
        lhs_weighted=lhs_weighted, rhs_weighted=rhs_weighted,
        lhs_min=lhs_min, rhs_min=rhs_min,
    )


@dataclass
class AlignmentSeries:
    """Per recorded step: cosine and Euclidean distance between the full-batch
    gradients at x_t and y_t. Zero-gradient steps report cosine as NaN and are
    excluded from aggregates."""

    ts: np.ndarray
    cos: np.ndarray
    dist: np.ndarray

    def as_mapping(self):
        return {
            int(t): (None if math.isnan(c) else float(c), float(d))
            for t, c, d in zip(self.ts, self.cos, self.dist)
        }

    def median_cos_tail(self, fraction=0.1):
        k = max(1, int(len(self.ts) * fraction))
        tail = self.cos[-k:]
        tail = tail[~np.isnan(tail)]
        return float(np.median(tail)) if tail.size else math.nan

    def dist_at(self, t):
        idx = np.where(self.ts == t)[0]
        if idx.size == 0:
            raise ConfigError(f"step {t} not recorded in the alignment series")
        return float(self.dist[idx[0]])


def grad_alignment(trace: IterateTrace, oracle) -> AlignmentSeries:
    """Cosine/distance series between grad f(x_t) and grad f(y_t), full batch."""
    ts, cos, dist = [], [], []
    for row in trace.rows:
        if row.x is None or row.y is None:
            continue
        gx = row.gx if row.gx is not None else oracle.gradient(row.x, None)
        gy = row.gy if row.gy is not None else oracle.gradient(row.y, None)
        nx, ny = np.linalg.norm(gx), np.linalg.norm(gy)
        ts.append(row.t)
        if nx == 0.0 or ny == 0.0:
            cos.append(math.nan)
        elif np.array_equal(gx, gy):
            cos.append(1.0)  # exact by definition; avoids sqrt rounding
        else:
            cos.append(float(np.dot(gx, gy) / (nx * ny)))
        dist.append(float(np.linalg.norm(gx - gy)))
    if not ts:
        raise ConfigError("trace has no recorded x/y vectors for alignment")
    return AlignmentSeries(
        ts=np.asarray(ts), cos=np.asarray(cos), dist=np.asarray(dist))


def delta0_quadratic(oracle, x0):
    """Exact f(x0) - inf f for quadratics with a computable minimizer."""
    return oracle.value(x0, None) - oracle.min_value()


def estimate_inf_value(oracle, tol=1e-10, max_steps=500_000, x0=None):
    """inf f estimated by a long plain descent to gradient norm <= tol.

    Requires a known smoothness constant; uses step 1/L.
    """
    L = oracle.lipschitz_L
    if L is None:
        raise ConfigError("cannot estimate inf f without a smoothness constant")
    x = np.zeros(oracle.dim) if x0 is None else np.asarray(x0, dtype=np.float64)
    eta = 1.0 / L
    for _ in range(max_steps):
        g = oracle.gradient(x, None)
        if np.linalg.norm(g) <= tol:
            break
        x = x - eta * g
    return oracle.value(x, None)
