"""Update rules for the perturbation-based optimizer family.

Every rule is a pure step function over (state, oracle, batches, hypers):

    sgd       x' = x - eta * grad f(x, B)
    sam       ascend along grad f(x, B), descend along the perturbed gradient;
              two sequential gradient evaluations on the same batch
    randsam   ascend along a random unit direction instead; one evaluation
    optsam    ascend along the previous perturbed gradient; one evaluation
    optgd     extrapolated sequence y' = x - eta*grad f(y), then
              x' = x - eta*grad f(y'); two sequential evaluations
    sampa     ascend along grad f(y_t) cached from the previous step; the
              perturbed gradient and the next cache gradient are mutually
              independent, so one update needs only sequential depth 1.
              The x-update consumes (1-lam)*g_tilde + lam*g_next.

The base optimizer (plain SGD, SGD momentum, or AdamW-style) consumes the
final gradient. ``peek=True`` computes the would-be iterate without
advancing the optimizer state; the auxiliary sequence y uses it so that y
stays close to the next x under momentum or adaptive state.
"""

from dataclasses import dataclass

import numpy as np

from samkit import backend
from samkit.errors import ConfigError, StateError
from samkit.problems import Batch
from samkit.vecmath import SeededRng, as_vector, gaussian_vector, unit_direction

METHODS = ("sgd", "sam", "randsam", "optsam", "optgd", "sampa")


@dataclass(frozen=True)
class BaseSpec:
    """Base optimizer configuration consuming the final gradient."""

    kind: str = "sgd_momentum"  # or "adamw_like"
    momentum: float = 0.0
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgd_momentum", "adamw_like"):
            raise ConfigError(f"unknown base optimizer kind {self.kind!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        if self.weight_decay < 0.0:
            raise ConfigError("weight_decay must be >= 0")
        for nm, b in (("beta1", self.beta1), ("beta2", self.beta2)):
            if not 0.0 <= b < 1.0:
                raise ConfigError(f"{nm} must be in [0, 1)")
        if self.eps <= 0.0:
            raise ConfigError("eps must be > 0")

    @property
    def plain(self):
        """True when the base reduces to x' = x - eta*g."""
        return (
            self.kind == "sgd_momentum"
            and self.momentum == 0.0
            and self.weight_decay == 0.0
        )


PLAIN_SGD = BaseSpec()


@dataclass(frozen=True)
class OptimizerSpec:
    method: str
    rho: float = 0.0
    lam: float = 0.0
    base: BaseSpec = PLAIN_SGD

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.rho < 0.0:
            raise ConfigError("rho must be >= 0")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lambda must be in [0, 1]")


@dataclass(frozen=True)
class BaseState:
    """Auxiliary per-parameter state of the base optimizer."""

    velocity: np.ndarray = None   # sgd_momentum
    m1: np.ndarray = None         # adamw_like first moment
    m2: np.ndarray = None         # adamw_like second moment
    count: int = 0                # adamw_like update count


def init_base_state(base: BaseSpec, dim: int) -> BaseState:
    z = np.zeros(dim)
    if base.kind == "sgd_momentum":
        return BaseState(velocity=z)
    return BaseState(m1=z, m2=z.copy(), count=0)


def base_update(m: BaseState, x, g, eta, base: BaseSpec, peek=False):
    """Apply the base optimizer to gradient g at x with step size eta.

    Returns (x_new, m_new). With peek=True the state is read-only and
    returned unchanged; calling peek twice from the same (m, x, g) yields
    the identical iterate.
    """
    k = backend.active()
    if base.kind == "sgd_momentum":
        x_new, v_new = k.sgd_momentum_step(
            x, m.velocity, g, eta, base.momentum, base.weight_decay
        )
        return x_new, (m if peek else BaseState(velocity=v_new))
    x_new, m1_new, m2_new = k.adamw_step(
        x, m.m1, m.m2, g, eta,
        base.beta1, base.beta2, base.eps, base.weight_decay, m.count + 1,
    )
    if peek:
        return x_new, m
    return x_new, BaseState(m1=m1_new, m2=m2_new, count=m.count + 1)


def perturb_along(x, direction, rho):
    """Ascent point x + rho * direction/||direction|| (zero direction: x itself)."""
    return backend.active().axpy(rho, unit_direction(direction), x)


def combine_gradients(lam, g_tilde, g_next):
    """(1-lam)*g_tilde + lam*g_next in this fixed operand order."""
    return backend.active().combine(1.0 - lam, g_tilde, lam, g_next)


def grad_eval_count(method):
    """(total, sequential) gradient evaluations per update."""
    table = {
        "sgd": (1, 1),
        "sam": (2, 2),
        "randsam": (1, 1),
        "optsam": (1, 1),
        "optgd": (2, 2),
        "sampa": (2, 1),
    }
    if method not in table:
        raise ConfigError(f"unknown method {method!r}")
    return table[method]


# --- plain step functions (base optimizer = identity descent) ---------------

def sam_step(x, eta, rho, oracle, batch: Batch = None):
    """One sharpness-aware step; both gradients on the same batch."""
    if not eta > 0:
        raise ConfigError("eta must be > 0")
    x = as_vector(x)
    g = oracle.gradient(x, batch)
    x_tilde = perturb_along(x, g, rho)
    g_tilde = oracle.gradient(x_tilde, batch)
    return backend.active().axpy(-eta, g_tilde, x)


def randsam_step(x, eta, rho, oracle, batch: Batch = None, rng: SeededRng = None):
    """Like sam_step but with a random unit ascent direction."""
    if not eta > 0:
        raise ConfigError("eta must be > 0")
    x = as_vector(x)
    e = gaussian_vector(rng, x.shape[0])
    x_tilde = perturb_along(x, e, rho)
    g_tilde = oracle.gradient(x_tilde, batch)
    return backend.active().axpy(-eta, g_tilde, x)


@dataclass(frozen=True)
class OptsamState:
    x: np.ndarray
    g_prev_tilde: np.ndarray  # initialized as grad f(x0, B0)
    t: int = 0


def optsam_init(x0, oracle, batch: Batch = None) -> OptsamState:
    x0 = as_vector(x0)
    return OptsamState(x=x0, g_prev_tilde=oracle.gradient(x0, batch), t=0)


def optsam_step(state: OptsamState, eta, rho, oracle, batch: Batch = None) -> OptsamState:
    """Reuse the previous perturbed gradient for the ascent direction."""
    if not eta > 0:
        raise ConfigError("eta must be > 0")
    x_tilde = perturb_along(state.x, state.g_prev_tilde, rho)
    g_tilde = oracle.gradient(x_tilde, batch)
    x_new = backend.active().axpy(-eta, g_tilde, state.x)
    return OptsamState(x=x_new, g_prev_tilde=g_tilde, t=state.t + 1)


@dataclass(frozen=True)
class OptgdState:
    x: np.ndarray
    y: np.ndarray  # initialized to x0
    t: int = 0


def optgd_init(x0) -> OptgdState:
    x0 = as_vector(x0)
    return OptgdState(x=x0, y=x0, t=0)


def optgd_step(state: OptgdState, eta, oracle,
               batch: Batch = None, next_batch: Batch = None) -> OptgdState:
    """Extrapolate y, then descend along the gradient at the new y.

    The y-update uses ``batch`` and the x-update ``next_batch`` (the next
    batch of the stream); on deterministic objectives both are None.
    """
    if not eta > 0:
        raise ConfigError("eta must be > 0")
    k = backend.active()
    gy = oracle.gradient(state.y, batch)
    y_new = k.axpy(-eta, gy, state.x)
    gx = oracle.gradient(y_new, next_batch)
    x_new = k.axpy(-eta, gx, state.x)
    return OptgdState(x=x_new, y=y_new, t=state.t + 1)


@dataclass(frozen=True)
class SampaState:
    """State of the parallelizable scheme.

    ``g`` caches grad f(y_t, B_t): the gradient at the auxiliary point on
    the batch that step t will keep. At t=0, y = x and g = grad f(y0, B0).
    """

    x: np.ndarray
    y: np.ndarray
    g: np.ndarray
    m: BaseState
    t: int = 0
    g_batch_id: int = None  # batch the cache was computed on, for pairing audits


def sampa_init(x0, oracle, batch: Batch = None, base: BaseSpec = PLAIN_SGD) -> SampaState:
    x0 = as_vector(x0)
    g0 = oracle.gradient(x0, batch)
    return SampaState(
        x=x0, y=x0, g=g0, m=init_base_state(base, x0.shape[0]), t=0,
        g_batch_id=None if batch is None else batch.id,
    )


def sampa_step(state: SampaState, eta, rho, lam, oracle,
               batch: Batch = None, next_batch: Batch = None,
               base: BaseSpec = PLAIN_SGD, audit=False) -> SampaState:
    """One update of the parallelizable scheme.

    ``batch`` must be the batch the cached gradient was computed on (the
    kept batch); ``next_batch`` is freshly sampled. The two gradient
    evaluations are independent of each other; this serial reference
    evaluates g_tilde first, then g_next, and combines them in a fixed
    order so any execution layout reproduces identical floats.
    """
    if not eta > 0:
        raise ConfigError("eta must be > 0")
    if audit:
        expected = oracle.gradient(state.y, batch)
        if not np.array_equal(expected, state.g):
            raise StateError(
                f"cache contract violated at t={state.t}: "
                "state.g != grad f(y_t, B_t)"
            )
    x_tilde = perturb_along(state.x, state.g, rho)
    y_next, _ = base_update(state.m, state.x, state.g, eta, base, peek=True)
    g_tilde = oracle.gradient(x_tilde, batch)
    g_next = oracle.gradient(y_next, next_batch)
    G = combine_gradients(lam, g_tilde, g_next)
    x_new, m_new = base_update(state.m, state.x, G, eta, base)
    return SampaState(
        x=x_new, y=y_next, g=g_next, m=m_new, t=state.t + 1,
        g_batch_id=None if next_batch is None else next_batch.id,
    )
