"""Dense vector math, step-size schedules, and seeded randomness.

Parameter vectors are plain 1-D float64 numpy arrays. All public operations
validate finiteness of their inputs and never mutate them; functions return
fresh arrays. Randomness comes from a counter-based (Philox) generator so
that a stream is fully determined by (seed, stream id) and is independent of
how work is laid out across workers.
"""

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from samkit import backend
from samkit.errors import ConfigError, NumericInputError

__all__ = [
    "as_vector",
    "unit_direction",
    "Schedule",
    "schedule_eta",
    "SeededRng",
    "gaussian_vector",
]


def as_vector(values, dim=None):
    """Coerce to a finite float64 1-D array; raise NumericInputError otherwise."""
    x = np.ascontiguousarray(values, dtype=np.float64)
    if x.ndim != 1:
        raise NumericInputError(f"expected a 1-D vector, got shape {x.shape}")
    if dim is not None and x.shape[0] != dim:
        raise NumericInputError(f"expected dimension {dim}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise NumericInputError("vector contains non-finite entries")
    return x


def unit_direction(g):
    """g / ||g||_2 for the ascent direction; the zero vector when ||g|| = 0.

    The zero fallback makes perturbed methods degrade to their base step at
    stationary points instead of picking an arbitrary direction.
    """
    g = as_vector(g)
    return backend.active().normalize_or_zero(g)


@dataclass(frozen=True)
class Schedule:
    """Step-size schedule.

    kind:
        constant      eta_t = eta0
        cosine        eta_t = (eta0/2) * (1 + cos(pi * t / T))
        inverse_power eta_t = eta0 / (1 + t)^power
        horizon_tuned eta_t = min( sqrt(delta0) / (rho * sqrt(C * T)),
                                   max(1/(2L), 1) )
                      the fixed step tuned to the run horizon T for
                      fixed-radius perturbed runs; requires delta0, rho,
                      C (curvature error constant) and L.
    """

    kind: str = "constant"
    eta0: float = 0.1
    power: float = 0.6
    params: dict = field(default_factory=dict)

    KINDS = ("constant", "cosine", "inverse_power", "horizon_tuned")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if self.kind in ("constant", "cosine", "inverse_power") and not self.eta0 > 0:
            raise ConfigError("eta0 must be > 0")
        if self.kind == "inverse_power" and not self.power > 0:
            raise ConfigError("power must be > 0")
        if self.kind == "horizon_tuned":
            missing = {"delta0", "rho", "C", "L"} - set(self.params)
            if missing:
                raise ConfigError(f"horizon_tuned schedule missing {sorted(missing)}")
            for k in ("delta0", "rho", "C", "L"):
                if not self.params[k] > 0:
                    raise ConfigError(f"horizon_tuned parameter {k} must be > 0")

    def describe(self):
        if self.kind == "constant":
            return f"constant(eta0={self.eta0})"
        if self.kind == "cosine":
            return f"cosine(eta0={self.eta0})"
        if self.kind == "inverse_power":
            return f"inverse_power(eta0={self.eta0}, power={self.power})"
        p = self.params
        return (
            f"horizon_tuned(delta0={p['delta0']}, rho={p['rho']}, "
            f"C={p['C']}, L={p['L']})"
        )


def _eta_at(s, t, T):
    # No t < T precondition here; analysis bookkeeping evaluates t == T.
    if s.kind == "constant":
        return s.eta0
    if s.kind == "cosine":
        return 0.5 * s.eta0 * (1.0 + math.cos(math.pi * t / T))
    if s.kind == "inverse_power":
        return s.eta0 / (1.0 + t) ** s.power
    p = s.params
    cap = max(1.0 / (2.0 * p["L"]), 1.0)
    tuned = math.sqrt(p["delta0"]) / (p["rho"] * math.sqrt(p["C"] * T))
    return min(tuned, cap)


def schedule_eta(s: Schedule, t: int, T: int) -> float:
    """Step size at step t of a T-step run."""
    if T <= 0:
        raise ConfigError("horizon T must be >= 1")
    if not 0 <= t < T:
        raise ConfigError(f"step index {t} outside [0, {T})")
    eta = _eta_at(s, t, T)
    if not eta > 0:
        raise ConfigError(f"schedule produced non-positive step size {eta} at t={t}")
    return eta


def _stream_id(parent_stream, tags):
    h = hashlib.blake2b(digest_size=8)
    h.update(repr((parent_stream,) + tags).encode())
    return int.from_bytes(h.digest(), "little")


class SeededRng:
    """Counter-based random stream, reproducible from (seed, stream).

    ``split`` derives an independent child stream from hashable tags, so the
    same logical stream is obtained no matter which worker asks for it or in
    what order streams are created.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream = int(stream) & 0xFFFFFFFFFFFFFFFF
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def split(self, *tags) -> "SeededRng":
        return SeededRng(self.seed, _stream_id(self.stream, tags))

    def normal(self, dim: int) -> np.ndarray:
        return self._gen.standard_normal(int(dim))

    def uniform(self, dim: int) -> np.ndarray:
        return self._gen.random(int(dim))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(int(n))

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size=size)

    def choice(self, n, size, replace=False):
        return self._gen.choice(int(n), size=size, replace=replace)

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, stream={self.stream})"


def gaussian_vector(rng: SeededRng, dim: int) -> np.ndarray:
    """dim i.i.d. standard-normal entries, advancing the stream."""
    if dim < 1:
        raise ConfigError("dim must be >= 1")
    return rng.normal(dim)
