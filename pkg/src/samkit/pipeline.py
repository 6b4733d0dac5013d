"""Run drivers: serial reference loop, two-worker barrier executor, timing.

The serial loop and the two-worker executor share the same primitive calls
in the same order, so a parallel run reproduces the serial iterate sequence
bit for bit. Gradient evaluations are logged in a dependency ledger; the
longest same-step chain is the sequential depth of one update (2 for the
classic two-pass step, 1 for the parallelizable scheme).
"""

import threading
from dataclasses import dataclass, field

import numpy as np

from samkit.errors import ConfigError, NumericInputError, PipelineError, StateError
from samkit.optimizers import (
    OptimizerSpec,
    base_update,
    combine_gradients,
    grad_eval_count,
    init_base_state,
    perturb_along,
)
from samkit.problems import sample_next_batch
from samkit.vecmath import Schedule, SeededRng, gaussian_vector, schedule_eta

TRACE_COLUMNS = (
    "t", "f", "grad_norm", "seq_grads_cum", "total_grads_cum", "sim_time_cum",
    "batch_id_t", "batch_id_t1", "cos_xy", "dist_xy",
)


@dataclass(frozen=True)
class TimingModel:
    """Simulated cost model: seconds per gradient, barrier exchange, update."""

    t_grad: float = 1.0
    t_comm: float = 0.0
    t_update: float = 0.0

    def __post_init__(self):
        for nm in ("t_grad", "t_comm", "t_update"):
            if getattr(self, nm) < 0:
                raise ConfigError(f"{nm} must be >= 0")


@dataclass(frozen=True)
class RunConfig:
    spec: OptimizerSpec
    schedule: Schedule
    T: int
    batch_size: int = None      # None: full batch
    seed: int = 42
    record_every: int = 1
    audit: bool = False
    x0: object = "unit_sphere"  # explicit vector or one of zeros/unit_sphere/gauss
    record_vectors: bool = None  # None: automatic (dim <= 64)
    barrier_timeout: float = 60.0

    def __post_init__(self):
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")


@dataclass
class TraceRow:
    t: int
    f: float
    grad_norm: float
    eta: float = None           # step size of the step taken from this iterate
    batch_id_t: int = None
    batch_id_t1: int = None
    total_grads: int = 0        # evaluations consumed to reach this iterate
    seq_grads: int = 0
    x: np.ndarray = None
    y: np.ndarray = None
    gx: np.ndarray = None       # full-batch gradient at x
    gy: np.ndarray = None       # full-batch gradient at y
    g_step: np.ndarray = None   # training gradient driving the perturbation
    g_tilde: np.ndarray = None  # gradient at the perturbed point


@dataclass
class IterateTrace:
    method: str
    dim: int
    T: int
    seed: int
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, row: TraceRow):
        if self.rows and row.t <= self.rows[-1].t:
            raise ConfigError("trace steps must be strictly increasing")
        self.rows.append(row)

    # column accessors -------------------------------------------------
    def ts(self):
        return np.array([r.t for r in self.rows], dtype=np.int64)

    def fs(self):
        return np.array([r.f for r in self.rows])

    def grad_norms(self):
        return np.array([r.grad_norm for r in self.rows])

    def etas(self):
        return np.array([r.eta for r in self.rows if r.eta is not None])

    def xs(self):
        return [r.x for r in self.rows]

    def ys(self):
        return [r.y for r in self.rows]

    @property
    def final(self) -> TraceRow:
        return self.rows[-1]

    def _finalize_counters(self, ledger):
        depths = ledger.step_depths()
        counts = ledger.step_counts()
        # prefix sums over steps -1..T so each row is a constant-time lookup
        init_c = counts.get(-1, 0)
        init_d = depths.get(-1, 0)
        cum_c = np.concatenate([[init_c], init_c + np.cumsum(
            [counts.get(t, 0) for t in range(self.T)])])
        cum_d = np.concatenate([[init_d], init_d + np.cumsum(
            [depths.get(t, 0) for t in range(self.T)])])
        for row in self.rows:
            row.total_grads = int(cum_c[row.t])
            row.seq_grads = int(cum_d[row.t])
            if row.seq_grads > row.total_grads:
                raise PipelineError("sequential count exceeded total count")
        self.meta["per_step_depth"] = [depths.get(t, 0) for t in range(self.T)]
        self.meta["per_step_evals"] = [counts.get(t, 0) for t in range(self.T)]

    def to_csv(self, path, timing: TimingModel = None, alignment=None):
        """Write the documented trace table.

        ``alignment`` is an optional {t: (cos, dist)} mapping supplied by the
        analysis layer; missing values stay empty.
        """
        import csv

        sim = None
        if timing is not None:
            sim = simulate_wall_clock(self, timing, self.method)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for row in self.rows:
                cum = ""
                if sim is not None:
                    cum = repr(float(np.sum(sim.per_step[: row.t])))
                cos_xy = dist_xy = ""
                if alignment and row.t in alignment:
                    c, d = alignment[row.t]
                    cos_xy = "" if c is None else repr(float(c))
                    dist_xy = repr(float(d))
                w.writerow([
                    row.t, repr(float(row.f)), repr(float(row.grad_norm)),
                    row.seq_grads, row.total_grads, cum,
                    "" if row.batch_id_t is None else row.batch_id_t,
                    "" if row.batch_id_t1 is None else row.batch_id_t1,
                    cos_xy, dist_xy,
                ])


class GradLedger:
    """Dependency log of gradient evaluations.

    Each entry is (id, step, lane, deps) where deps are ids of evaluations
    whose output fed the evaluated point. Initialization evaluations carry
    step -1. The sequential depth of a step is the longest chain among its
    own entries.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.entries = []

    def record(self, step, lane, deps=()):
        with self._lock:
            eid = len(self.entries)
            self.entries.append((eid, step, lane, tuple(deps)))
        return eid

    def step_counts(self):
        out = {}
        for _, step, _, _ in self.entries:
            out[step] = out.get(step, 0) + 1
        return out

    def step_depths(self):
        info = {eid: (step, deps) for eid, step, _, deps in self.entries}
        depth = {}
        for eid in sorted(info):
            step, deps = info[eid]
            same = [depth[d] for d in deps if d in info and info[d][0] == step]
            depth[eid] = 1 + (max(same) if same else 0)
        out = {}
        for eid, (step, _) in info.items():
            out[step] = max(out.get(step, 0), depth[eid])
        return out

    def lanes_by_step(self):
        out = {}
        for _, step, lane, _ in self.entries:
            out.setdefault(step, set()).add(lane)
        return out


class _Instrumented:
    """Counts and logs training gradient evaluations; measurement bypasses it.

    Numeric failures in or around the oracle are annotated with the step
    index here, so a failing run always reports where it died.
    """

    def __init__(self, oracle, ledger: GradLedger):
        self.raw = oracle
        self.ledger = ledger

    def gradient(self, x, batch, step, lane, deps=()):
        eid = self.ledger.record(step, lane, deps)
        try:
            g = self.raw.gradient(x, batch)
        except NumericInputError as exc:
            raise _with_step(exc, step) from exc
        if not np.all(np.isfinite(g)):
            raise NumericInputError(f"step {step}: oracle returned a non-finite gradient")
        return g, eid


def _resolve_x0(cfg: RunConfig, dim, rng: SeededRng):
    if isinstance(cfg.x0, str):
        if cfg.x0 == "zeros":
            return np.zeros(dim)
        if cfg.x0 == "gauss":
            return rng.split("x0").normal(dim)
        if cfg.x0 == "unit_sphere":
            v = rng.split("x0").normal(dim)
            n = np.linalg.norm(v)
            return v / n if n > 0 else np.ones(dim) / np.sqrt(dim)
        raise ConfigError(f"unknown x0 policy {cfg.x0!r}")
    x0 = np.ascontiguousarray(cfg.x0, dtype=np.float64)
    if x0.shape != (dim,):
        raise ConfigError(f"x0 has shape {x0.shape}, oracle dim is {dim}")
    return x0


def _should_record_vectors(cfg, dim):
    if cfg.record_vectors is None:
        return dim <= 64
    return bool(cfg.record_vectors)


def _measure(oracle, x, y, keep_vectors):
    f = oracle.value(x, None)
    gx = oracle.gradient(x, None)
    row = TraceRow(t=-1, f=f, grad_norm=float(np.linalg.norm(gx)))
    if keep_vectors:
        row.x = x.copy()
        row.gx = gx
        if y is not None:
            row.y = y.copy()
            row.gy = oracle.gradient(y, None)
    return row


def _check_finite(x, t):
    if not np.all(np.isfinite(x)):
        raise NumericInputError(f"non-finite iterate produced at step {t}")


def _with_step(exc, t):
    """Re-raiseable copy of a numeric failure carrying the step index."""
    if isinstance(exc, NumericInputError) and "step" not in str(exc):
        return NumericInputError(f"step {t}: {exc}")
    return exc


def run_serial(oracle, cfg: RunConfig) -> IterateTrace:
    """Execute the configured method for T steps in one logical sequence."""
    spec = cfg.spec
    T = cfg.T
    n = oracle.n_samples
    bs = cfg.batch_size if cfg.batch_size is not None else n
    if not 1 <= bs <= n:
        raise ConfigError(f"batch_size must be in [1, {n}]")
    rng = SeededRng(cfg.seed)
    batch_rng = rng.split("batches")
    perturb_rng = rng.split("randsam")
    x = _resolve_x0(cfg, oracle.dim, rng)
    keep_vec = _should_record_vectors(cfg, oracle.dim)
    ledger = GradLedger()
    inst = _Instrumented(oracle, ledger)
    lane = "S"

    def batch_for(counter):
        return sample_next_batch(oracle, batch_rng, bs, counter)

    trace = IterateTrace(method=spec.method, dim=oracle.dim, T=T, seed=cfg.seed)
    trace.meta.update({
        "rho": spec.rho, "lam": spec.lam, "base": spec.base,
        "schedule": cfg.schedule, "batch_size": bs, "x0_policy": cfg.x0,
        "parallel": False,
    })

    m = init_base_state(spec.base, oracle.dim)
    y = None
    cache = None          # perturbation gradient cache (sampa, optsam)
    cache_eid = None
    x_eids = ()           # evaluations whose output built the current x
    y_eids = ()
    if spec.method in ("sampa", "optsam"):
        b0 = batch_for(0)
        cache, cache_eid = inst.gradient(x, b0, -1, lane, ())
    if spec.method in ("sampa", "optgd"):
        y = x

    for t in range(T):
        eta = schedule_eta(cfg.schedule, t, T)
        b_t = batch_for(t)
        b_t1 = batch_for(t + 1) if spec.method in ("sampa", "optgd") else None

        pending = None
        if t % cfg.record_every == 0:
            pending = _measure(oracle, x, y, keep_vec)
            pending.t = t
            pending.eta = eta
            pending.batch_id_t = b_t.id
            pending.batch_id_t1 = None if b_t1 is None else b_t1.id

        if spec.method == "sgd":
            g, eid = inst.gradient(x, b_t, t, lane, x_eids)
            x, m = base_update(m, x, g, eta, spec.base)
            x_eids = (eid,)
            step_g, step_gt = g, None
        elif spec.method == "sam":
            g, eid1 = inst.gradient(x, b_t, t, lane, x_eids)
            x_tilde = perturb_along(x, g, spec.rho)
            g_tilde, eid2 = inst.gradient(x_tilde, b_t, t, lane, (eid1,) + x_eids)
            x, m = base_update(m, x, g_tilde, eta, spec.base)
            x_eids = (eid2,)
            step_g, step_gt = g, g_tilde
        elif spec.method == "randsam":
            e = gaussian_vector(perturb_rng, oracle.dim)
            x_tilde = perturb_along(x, e, spec.rho)
            g_tilde, eid = inst.gradient(x_tilde, b_t, t, lane, x_eids)
            x, m = base_update(m, x, g_tilde, eta, spec.base)
            x_eids = (eid,)
            step_g, step_gt = None, g_tilde
        elif spec.method == "optsam":
            x_tilde = perturb_along(x, cache, spec.rho)
            g_tilde, eid = inst.gradient(x_tilde, b_t, t, lane, (cache_eid,) + x_eids)
            x, m = base_update(m, x, g_tilde, eta, spec.base)
            step_g, step_gt = cache, g_tilde
            cache, cache_eid = g_tilde, eid
            x_eids = (eid,)
        elif spec.method == "optgd":
            gy, eid_y = inst.gradient(y, b_t, t, lane, y_eids + x_eids)
            y, _ = base_update(m, x, gy, eta, spec.base, peek=True)
            gx, eid_x = inst.gradient(y, b_t1, t, lane, (eid_y,) + x_eids)
            x, m = base_update(m, x, gx, eta, spec.base)
            x_eids = (eid_x,)
            y_eids = (eid_y,)
            step_g, step_gt = gy, gx
        elif spec.method == "sampa":
            if cfg.audit:
                expected = oracle.gradient(y, b_t)
                if not np.array_equal(expected, cache):
                    raise StateError(f"cache contract violated at step {t}")
            x_tilde = perturb_along(x, cache, spec.rho)
            y_next, _ = base_update(m, x, cache, eta, spec.base, peek=True)
            g_tilde, eid1 = inst.gradient(x_tilde, b_t, t, lane, (cache_eid,) + x_eids)
            g_next, eid2 = inst.gradient(y_next, b_t1, t, lane, (cache_eid,) + x_eids)
            G = combine_gradients(spec.lam, g_tilde, g_next)
            step_g, step_gt = cache, g_tilde
            x, m = base_update(m, x, G, eta, spec.base)
            y, cache, cache_eid = y_next, g_next, eid2
            x_eids = (eid1, eid2)
        else:  # pragma: no cover - OptimizerSpec already validates
            raise ConfigError(f"unknown method {spec.method!r}")

        _check_finite(x, t)
        if pending is not None:
            if keep_vec:
                pending.g_step = step_g
                pending.g_tilde = step_gt
            trace.append(pending)

    last = _measure(oracle, x, y, keep_vec)
    last.t = T
    trace.append(last)
    trace.meta["barrier_waits"] = 0
    trace._finalize_counters(ledger)
    trace.meta["ledger"] = ledger
    return trace


def run_parallel_two_workers(oracle, cfg: RunConfig) -> IterateTrace:
    """Two-lane barrier-synchronized execution of the parallelizable scheme.

    Lane A owns the perturbed gradient, lane B the auxiliary-point gradient;
    one barrier per step exchanges the two. Both lanes then replay the same
    combine and model-update calls on identical inputs, so their states stay
    equal and the iterates match ``run_serial`` exactly.
    """
    spec = cfg.spec
    if spec.method != "sampa":
        raise ConfigError("only the sampa method admits the two-worker layout")
    T = cfg.T
    n = oracle.n_samples
    bs = cfg.batch_size if cfg.batch_size is not None else n
    if not 1 <= bs <= n:
        raise ConfigError(f"batch_size must be in [1, {n}]")
    rng = SeededRng(cfg.seed)
    batch_rng = rng.split("batches")
    x0 = _resolve_x0(cfg, oracle.dim, rng)
    keep_vec = _should_record_vectors(cfg, oracle.dim)
    ledger = GradLedger()
    inst = _Instrumented(oracle, ledger)

    # The coordinator draws the whole batch stream before dispatch; the
    # stream is a pure function of (seed, counter) so worker layout cannot
    # change it.
    batches = [sample_next_batch(oracle, batch_rng, bs, c) for c in range(T + 1)]

    g0, eid0 = inst.gradient(x0, batches[0], -1, "init", ())

    trace = IterateTrace(method=spec.method, dim=oracle.dim, T=T, seed=cfg.seed)
    trace.meta.update({
        "rho": spec.rho, "lam": spec.lam, "base": spec.base,
        "schedule": cfg.schedule, "batch_size": bs, "x0_policy": cfg.x0,
        "parallel": True,
    })

    barrier = threading.Barrier(2)
    slots = {}
    errors = {}
    waits = {"A": 0, "B": 0}
    finals = {}

    def worker(lane):
        other = "B" if lane == "A" else "A"
        x, y, cache, cache_eid = x0, x0, g0, eid0
        m = init_base_state(spec.base, oracle.dim)
        x_eids = ()
        t = -1
        try:
            for t in range(T):
                eta = schedule_eta(cfg.schedule, t, T)
                b_t, b_t1 = batches[t], batches[t + 1]

                pending = None
                if lane == "A" and t % cfg.record_every == 0:
                    pending = _measure(oracle, x, y, keep_vec)
                    pending.t = t
                    pending.eta = eta
                    pending.batch_id_t = b_t.id
                    pending.batch_id_t1 = b_t1.id

                if cfg.audit and lane == "A":
                    expected = oracle.gradient(y, b_t)
                    if not np.array_equal(expected, cache):
                        raise StateError(f"cache contract violated at step {t}")

                if lane == "A":
                    x_tilde = perturb_along(x, cache, spec.rho)
                    mine, my_eid = inst.gradient(
                        x_tilde, b_t, t, lane, (cache_eid,) + x_eids)
                else:
                    y_next, _ = base_update(m, x, cache, eta, spec.base, peek=True)
                    mine, my_eid = inst.gradient(
                        y_next, b_t1, t, lane, (cache_eid,) + x_eids)
                slots[(t, lane)] = (mine, my_eid)
                if cfg.audit:
                    slots[(t, lane, "x")] = x
                barrier.wait(timeout=cfg.barrier_timeout)
                waits[lane] += 1
                theirs, their_eid = slots[(t, other)]
                if cfg.audit and not np.array_equal(slots[(t, other, "x")], x):
                    raise StateError(f"worker states diverged at step {t}")

                if lane == "A":
                    g_tilde, eid1 = mine, my_eid
                    g_next, eid2 = theirs, their_eid
                    y_next, _ = base_update(m, x, cache, eta, spec.base, peek=True)
                else:
                    g_tilde, eid1 = theirs, their_eid
                    g_next, eid2 = mine, my_eid
                G = combine_gradients(spec.lam, g_tilde, g_next)
                step_cache = cache
                x, m = base_update(m, x, G, eta, spec.base)
                _check_finite(x, t)
                y, cache, cache_eid = y_next, g_next, eid2
                x_eids = (eid1, eid2)

                if pending is not None:
                    if keep_vec:
                        pending.g_step = step_cache
                        pending.g_tilde = g_tilde
                    trace.append(pending)
            if lane == "A":
                last = _measure(oracle, x, y, keep_vec)
                last.t = T
                trace.append(last)
            finals[lane] = x
        except Exception as exc:  # noqa: BLE001 - reported to the coordinator
            errors[lane] = _with_step(exc, t)
            barrier.abort()

    threads = [threading.Thread(target=worker, args=(ln,), name=f"worker-{ln}")
               for ln in ("A", "B")]
    for th in threads:
        th.start()
    for th in threads:
        th.join()

    if errors:
        # prefer the root cause over the peer's broken-barrier fallout
        ordered = sorted(
            errors.items(),
            key=lambda kv: isinstance(kv[1], threading.BrokenBarrierError))
        lane, exc = ordered[0]
        if isinstance(exc, (StateError, ConfigError, NumericInputError)):
            raise exc
        raise PipelineError(f"worker {lane} failed: {exc!r}") from exc
    if waits["A"] != T or waits["B"] != T:
        raise PipelineError(
            f"expected exactly {T} barrier exchanges, got {waits}")
    if not np.array_equal(finals["A"], finals["B"]):
        raise PipelineError("worker states diverged at the final iterate")

    trace.meta["barrier_waits"] = waits["A"]
    trace._finalize_counters(ledger)
    trace.meta["ledger"] = ledger
    return trace


@dataclass(frozen=True)
class SimResult:
    per_step: np.ndarray
    total: float
    speedup_vs_sam: float
    degenerate: bool


def simulate_wall_clock(trace: IterateTrace, model: TimingModel, method=None) -> SimResult:
    """Simulated per-step and total time, plus the speedup over the two-pass step.

    Per step: methods with sequential depth d cost d*t_grad + t_update; the
    two-worker scheme costs t_grad + t_comm + t_update (its two evaluations
    overlap, one barrier exchange per step).
    """
    method = method or trace.method
    _, seq = grad_eval_count(method)
    per = seq * model.t_grad + model.t_update
    if method == "sampa":
        per += model.t_comm
    per_step = np.full(trace.T, per)
    sam_time = 2.0 * model.t_grad + model.t_update
    sampa_time = model.t_grad + model.t_comm + model.t_update
    if model.t_grad == 0.0:
        return SimResult(per_step, float(per_step.sum()), 1.0, True)
    return SimResult(per_step, float(per_step.sum()), sam_time / sampa_time, False)
