"""Experiment orchestration: presets, suites, CSV artifacts, summaries.

``run_experiment`` executes every (method, seed) pair of a config, writes one
trace CSV per pair plus per-method plot data, and assembles the comparison
summary by re-reading the trace files (so the summary never contains state
the artifacts do not). The descent and bound suites generate families of
random positive-definite quadratics and verify the per-step inequality and
its horizon-level consequences case by case.
"""

import csv
import math
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from samkit.analysis import (
    convergence_bound,
    delta0_quadratic,
    descent_check,
    descent_error_constant,
    grad_alignment,
)
from samkit.config import ExperimentConfig, config_hash, dump_config
from samkit.errors import ConfigError
from samkit.optimizers import OptimizerSpec, grad_eval_count
from samkit.pipeline import (
    RunConfig,
    TimingModel,
    run_parallel_two_workers,
    run_serial,
    simulate_wall_clock,
)
from samkit.problems import (
    LabelNoiseSpec,
    logistic_regression,
    random_psd_quadratic,
    tiny_mlp,
    toy_quadratic,
)
from samkit.vecmath import Schedule, SeededRng

PRESETS = ("fig1", "lemma1", "theorem1", "alignment", "timing", "lambda-sweep")


def build_oracle(cfg: ExperimentConfig):
    p = cfg.problem_params
    if cfg.problem == "toy_quadratic":
        return toy_quadratic(p["dim"])
    if cfg.problem == "random_psd":
        oracle, x_star = random_psd_quadratic(p["dim"], p["L"], p.get("seed", 0))
        oracle.x_star = x_star
        return oracle
    if cfg.problem == "logistic_regression":
        noise = None
        if p.get("flip_fraction"):
            noise = LabelNoiseSpec(p["flip_fraction"], p.get("noise_seed", 0))
        return logistic_regression(p["n"], p["dim"], p.get("seed", 0), noise)
    if cfg.problem == "tiny_mlp":
        return tiny_mlp(p["n"], p["dim_in"], p["hidden"], p.get("seed", 0))
    raise ConfigError(f"unknown problem {cfg.problem!r}")


def _run_one(cfg: ExperimentConfig, spec: OptimizerSpec, seed: int):
    oracle = build_oracle(cfg)
    rc = RunConfig(
        spec=spec, schedule=cfg.schedule, T=cfg.T, batch_size=cfg.batch_size,
        seed=seed, record_every=cfg.record_every, audit=cfg.audit, x0=cfg.x0,
    )
    if cfg.mode == "parallel":
        return oracle, run_parallel_two_workers(oracle, rc)
    return oracle, run_serial(oracle, rc)


def read_trace_csv(path):
    """Trace CSV -> dict of numpy columns (empty strings become NaN)."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        cols = {h: [] for h in header}
        for row in r:
            for h, v in zip(header, row):
                cols[h].append(float(v) if v != "" else math.nan)
    return {h: np.asarray(v) for h, v in cols.items()}


@dataclass
class MethodSummary:
    label: str
    method: str
    rho: float
    lam: float
    seeds: tuple
    final_f_mean: float
    final_f_std: float
    final_gnorm_mean: float
    seq_grads: float
    total_grads: float
    sim_time_total: float
    speedup_vs_sam: float
    failures: int


@dataclass
class ComparisonSummary:
    rows: list
    out_dir: str
    cfg_hash: str

    def by_label(self):
        return {r.label: r for r in self.rows}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label", "method", "rho", "lambda", "seeds",
                        "final_f_mean", "final_f_std", "final_gnorm_mean",
                        "seq_grads_cum", "total_grads_cum", "sim_time_total",
                        "speedup_vs_sam", "failures"])
            for r in self.rows:
                w.writerow([r.label, r.method, repr(r.rho), repr(r.lam),
                            " ".join(str(s) for s in r.seeds),
                            repr(r.final_f_mean), repr(r.final_f_std),
                            repr(r.final_gnorm_mean), repr(r.seq_grads),
                            repr(r.total_grads), repr(r.sim_time_total),
                            repr(r.speedup_vs_sam), r.failures])


def _sim_totals(cfg: ExperimentConfig, method: str):
    t = cfg.timing
    _, seq = grad_eval_count(method)
    per = seq * t.t_grad + t.t_update + (t.t_comm if method == "sampa" else 0.0)
    sam_per = 2.0 * t.t_grad + t.t_update
    total = cfg.T * per
    if per == 0.0:
        return total, 1.0
    return total, sam_per / per


def run_experiment(cfg: ExperimentConfig, out_dir, jobs=1) -> ComparisonSummary:
    """Execute every (method, seed) pair; write traces, plot data, summary,
    and a MANIFEST of all artifacts tagged with the config hash."""
    os.makedirs(out_dir, exist_ok=True)
    chash = config_hash(cfg)
    artifacts = []

    cfg_path = os.path.join(out_dir, "config.txt")
    with open(cfg_path, "w") as fh:
        fh.write(dump_config(cfg))
    artifacts.append("config.txt")

    pairs = [(label, spec, seed) for label, spec in cfg.methods for seed in cfg.seeds]

    def job(item):
        label, spec, seed = item
        try:
            oracle, trace = _run_one(cfg, spec, seed)
            alignment = None
            if spec.method in ("sampa", "optgd") and trace.rows[0].x is not None:
                alignment = grad_alignment(trace, oracle).as_mapping()
            fname = f"trace_{label}_{seed}.csv"
            trace.to_csv(os.path.join(out_dir, fname), timing=cfg.timing,
                         alignment=alignment)
            return label, seed, fname, None
        except Exception as exc:  # noqa: BLE001 - partial failure is recorded
            return label, seed, None, exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(job, pairs))
    else:
        results = [job(it) for it in pairs]

    failures = [(lbl, seed, exc) for lbl, seed, _, exc in results if exc is not None]
    if failures:
        with open(os.path.join(out_dir, "failures.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label", "seed", "error"])
            for lbl, seed, exc in failures:
                w.writerow([lbl, seed, repr(exc)])
        artifacts.append("failures.csv")

    rows = []
    for label, spec in cfg.methods:
        ok = [(seed, fname) for lbl, seed, fname, exc in results
              if lbl == label and exc is None]
        finals, gnorms = [], []
        seq = total = 0.0
        curves = {}
        for seed, fname in ok:
            cols = read_trace_csv(os.path.join(out_dir, fname))
            artifacts.append(fname)
            finals.append(float(cols["f"][-1]))
            gnorms.append(float(cols["grad_norm"][-1]))
            seq = float(cols["seq_grads_cum"][-1])
            total = float(cols["total_grads_cum"][-1])
            curves[seed] = cols
        if curves:
            plot_name = f"plot_{label}.csv"
            _write_plot(os.path.join(out_dir, plot_name), curves)
            artifacts.append(plot_name)
        sim_total, speedup = _sim_totals(cfg, spec.method)
        rows.append(MethodSummary(
            label=label, method=spec.method, rho=spec.rho, lam=spec.lam,
            seeds=tuple(s for s, _ in ok),
            final_f_mean=statistics.fmean(finals) if finals else math.nan,
            final_f_std=statistics.pstdev(finals) if len(finals) > 1 else 0.0,
            final_gnorm_mean=statistics.fmean(gnorms) if gnorms else math.nan,
            seq_grads=seq, total_grads=total, sim_time_total=sim_total,
            speedup_vs_sam=speedup,
            failures=sum(1 for lbl, _, exc in failures if lbl == label),
        ))

    summary = ComparisonSummary(rows=rows, out_dir=out_dir, cfg_hash=chash)
    summary.to_csv(os.path.join(out_dir, "summary.csv"))
    artifacts.append("summary.csv")

    with open(os.path.join(out_dir, "MANIFEST"), "w") as fh:
        fh.write("# artifact, config_hash\n")
        for name in sorted(artifacts):
            fh.write(f"{name}, {chash}\n")
    return summary


def _write_plot(path, curves):
    """Per-method plot data: step vs objective / gradient norm / simulated time."""
    seeds = sorted(curves)
    ts = curves[seeds[0]]["t"]
    fs = np.stack([curves[s]["f"] for s in seeds])
    gs = np.stack([curves[s]["grad_norm"] for s in seeds])
    sims = np.stack([curves[s]["sim_time_cum"] for s in seeds])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "sim_time_cum_mean", "f_mean", "f_min", "f_max",
                    "grad_norm_mean"])
        for i, t in enumerate(ts):
            w.writerow([int(t), repr(float(sims[:, i].mean())),
                        repr(float(fs[:, i].mean())), repr(float(fs[:, i].min())),
                        repr(float(fs[:, i].max())), repr(float(gs[:, i].mean()))])


def lambda_sweep(cfg: ExperimentConfig, lambdas, out_dir, jobs=1):
    """Run the parallelizable scheme once per interpolation value.

    Emits lambda_sweep.csv plus the usual per-run artifacts in
    out_dir/lam_<value>/ subdirectories. Returns {lambda: ComparisonSummary}.
    """
    lambdas = [float(v) for v in lambdas]
    for v in lambdas:
        if not 0.0 <= v <= 1.0:
            raise ConfigError(f"lambda {v} outside [0, 1]")
    base_entry = next(
        ((lbl, sp) for lbl, sp in cfg.methods if sp.method == "sampa"), None)
    if base_entry is None:
        raise ConfigError("lambda sweep needs a sampa method entry")
    _, base_spec = base_entry
    os.makedirs(out_dir, exist_ok=True)
    out = {}
    table = []
    for v in lambdas:
        spec = replace(base_spec, lam=v)
        sub = replace(cfg, methods=((f"sampa_lam{v:g}", spec),))
        summary = run_experiment(sub, os.path.join(out_dir, f"lam_{v:g}"), jobs=jobs)
        out[v] = summary
        row = summary.rows[0]
        table.append((v, row.final_f_mean, row.final_f_std, row.final_gnorm_mean))
    with open(os.path.join(out_dir, "lambda_sweep.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "final_f_mean", "final_f_std", "final_gnorm_mean"])
        for v, fm, fs_, gm in table:
            w.writerow([repr(v), repr(fm), repr(fs_), repr(gm)])
    return out


# --- presets ----------------------------------------------------------------

def preset_fig1() -> ExperimentConfig:
    """Toy-quadratic method comparison: perturbed methods that keep or lose
    convergence, five seeded starts on the unit sphere."""
    rho = 0.1
    methods = (
        ("sam", OptimizerSpec("sam", rho=rho)),
        ("sampa0", OptimizerSpec("sampa", rho=rho, lam=0.0)),
        ("randsam", OptimizerSpec("randsam", rho=rho)),
        ("optsam", OptimizerSpec("optsam", rho=rho)),
    )
    return ExperimentConfig(
        problem="toy_quadratic", problem_params={"dim": 2}, methods=methods,
        schedule=Schedule(kind="constant", eta0=0.05), T=2000,
        seeds=(0, 1, 2, 3, 4), record_every=10, x0="unit_sphere",
    )


def preset_alignment() -> ExperimentConfig:
    """Stochastic logistic run tracking how far the auxiliary gradient strays."""
    return ExperimentConfig(
        problem="logistic_regression",
        problem_params={"n": 500, "dim": 20, "seed": 7},
        methods=(("sampa", OptimizerSpec("sampa", rho=0.1, lam=0.2)),),
        schedule=Schedule(kind="cosine", eta0=0.5), T=2000, batch_size=32,
        seeds=(0,), record_every=1, x0="zeros",
    )


def preset_lambda_sweep():
    cfg = ExperimentConfig(
        problem="logistic_regression",
        problem_params={"n": 200, "dim": 10, "seed": 3},
        methods=(("sampa", OptimizerSpec("sampa", rho=0.1, lam=0.2)),),
        schedule=Schedule(kind="cosine", eta0=0.5), T=300, batch_size=25,
        seeds=(0, 1), record_every=10, x0="zeros",
    )
    lambdas = [round(0.1 * k, 1) for k in range(11)]
    return cfg, lambdas


# --- descent suite ----------------------------------------------------------

@dataclass
class SuiteCase:
    idx: int
    dim: int
    L: float
    rho: float
    T: int
    seed: int
    oracle: object
    x0: np.ndarray
    schedule: Schedule
    delta0: float = None


def descent_suite_cases(n_cases=100, T=200, seed0=0):
    """Random positive-definite quadratics inside the descent-inequality regime.

    Steps: eta_t = 0.4 * min(1, c/L) / (1+t)^0.6 with c = 1/2; start at unit
    distance from the minimizer.
    """
    rhos = (0.01, 0.05, 0.1)
    for i in range(n_cases):
        rng = SeededRng(seed0 + i, 0x5EED)
        dim = int(rng.integers(2, 21))
        L = 0.5 + 4.5 * float(rng.uniform(1)[0])
        rho = rhos[i % len(rhos)]
        oracle, x_star = random_psd_quadratic(dim, L, seed0 + 10_000 + i)
        z = rng.normal(dim)
        z /= np.linalg.norm(z)
        x0 = x_star + z
        eta0 = 0.4 * min(1.0, 0.5 / L)
        yield SuiteCase(
            idx=i, dim=dim, L=L, rho=rho, T=T, seed=seed0 + i, oracle=oracle,
            x0=x0, schedule=Schedule(kind="inverse_power", eta0=eta0, power=0.6),
        )


def run_descent_case(case: SuiteCase):
    rc = RunConfig(
        spec=OptimizerSpec("sampa", rho=case.rho, lam=0.0),
        schedule=case.schedule, T=case.T, seed=case.seed, x0=case.x0,
        record_every=1, record_vectors=True,
    )
    trace = run_serial(case.oracle, rc)
    return descent_check(trace, case.rho, case.L, c=0.5)


def run_descent_suite(out_dir=None, n_cases=100, T=200, seed0=0):
    """Run every case; returns (all_passed, reports). Optionally writes
    descent_summary.csv and the first case's per-step report."""
    reports = []
    cases = list(descent_suite_cases(n_cases=n_cases, T=T, seed0=seed0))
    for case in cases:
        reports.append((case, run_descent_case(case)))
    ok = all(rep.applicable and rep.passed for _, rep in reports)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "descent_summary.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["case", "dim", "L", "rho", "max_residual", "tol", "passed"])
            for case, rep in reports:
                w.writerow([case.idx, case.dim, repr(case.L), repr(case.rho),
                            repr(rep.max_residual), repr(rep.tol), rep.passed])
        reports[0][1].to_csv(os.path.join(out_dir, "descent_case0.csv"))
    return ok, reports


# --- convergence-bound suite -------------------------------------------------

def bound_suite_cases(n_seeds=20, Ts=(10, 100, 1000), seed0=5000):
    """Cases where the horizon-tuned step lands strictly inside the admissible
    range: the start point is scaled so sqrt(delta0/(C rho^2 T)) = alpha/(2L)
    with alpha in (0.3, 0.9)."""
    rhos = (0.01, 0.05, 0.1)
    for T in Ts:
        for i in range(n_seeds):
            rng = SeededRng(seed0 + i + 13 * T, 0xB0)
            dim = int(rng.integers(2, 21))
            L = 0.5 + 4.5 * float(rng.uniform(1)[0])
            rho = rhos[i % len(rhos)]
            C = descent_error_constant(L, 0.5)
            alpha = 0.3 + 0.6 * float(rng.uniform(1)[0])
            eta_target = alpha / (2.0 * L)
            delta0_target = C * rho**2 * T * eta_target**2
            oracle, x_star = random_psd_quadratic(dim, L, seed0 + 777 + i + T)
            z = rng.normal(dim)
            quad = 0.5 * float(z @ (oracle.A @ z))
            x0 = x_star + z * math.sqrt(delta0_target / quad)
            delta0 = delta0_quadratic(oracle, x0)
            sched = Schedule(kind="horizon_tuned",
                             params={"delta0": delta0, "rho": rho, "C": C, "L": L})
            yield SuiteCase(
                idx=i, dim=dim, L=L, rho=rho, T=T, seed=seed0 + i, oracle=oracle,
                x0=x0, schedule=sched, delta0=delta0,
            )


def run_bound_case(case: SuiteCase):
    rc = RunConfig(
        spec=OptimizerSpec("sampa", rho=case.rho, lam=0.0),
        schedule=case.schedule, T=case.T, seed=case.seed, x0=case.x0,
        record_every=1, record_vectors=True,
    )
    trace = run_serial(case.oracle, rc)
    return convergence_bound(trace, case.rho, case.L, case.delta0, c=0.5)


def run_bound_suite(out_dir=None, n_seeds=20, Ts=(10, 100, 1000), seed0=5000):
    reports = []
    for case in bound_suite_cases(n_seeds=n_seeds, Ts=Ts, seed0=seed0):
        reports.append((case, run_bound_case(case)))
    ok = all(rep.applicable and rep.passed for _, rep in reports)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "bound_summary.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["T", "case", "dim", "L", "rho", "delta0",
                        "lhs_weighted", "rhs_weighted", "lhs_min", "rhs_min",
                        "passed"])
            for case, rep in reports:
                w.writerow([case.T, case.idx, case.dim, repr(case.L),
                            repr(case.rho), repr(case.delta0),
                            repr(rep.lhs_weighted), repr(rep.rhs_weighted),
                            repr(rep.lhs_min), repr(rep.rhs_min), rep.passed])
        reports[0][1].to_csv(os.path.join(out_dir, "bound_case0.csv"))
    return ok, reports


# --- timing preset ------------------------------------------------------------

def run_timing_preset(out_dir):
    """Instrumented sequential depths plus the speedup-vs-overhead table."""
    os.makedirs(out_dir, exist_ok=True)
    oracle = toy_quadratic(4)
    depths = {}
    for method in ("sgd", "sam", "randsam", "optsam", "optgd", "sampa"):
        rc = RunConfig(
            spec=OptimizerSpec(method, rho=0.05, lam=0.2 if method == "sampa" else 0.0),
            schedule=Schedule(kind="constant", eta0=0.05), T=50, seed=1,
        )
        trace = run_serial(oracle, rc)
        per_step = trace.meta["per_step_depth"]
        depths[method] = (max(per_step), grad_eval_count(method))
    with open(os.path.join(out_dir, "depths.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "measured_seq_depth", "expected_total", "expected_seq"])
        for method, (depth, (tot, seq)) in depths.items():
            w.writerow([method, depth, tot, seq])
    ratios = (0.0, 0.05, 0.075, 0.1, 0.15, 0.25, 0.5, 1.0)
    rc = RunConfig(spec=OptimizerSpec("sampa", rho=0.05),
                   schedule=Schedule(kind="constant", eta0=0.05), T=50, seed=1)
    trace = run_serial(oracle, rc)
    with open(os.path.join(out_dir, "speedup.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_comm_over_t_grad", "speedup_vs_sam"])
        for r in ratios:
            sim = simulate_wall_clock(trace, TimingModel(t_grad=1.0, t_comm=r))
            w.writerow([repr(r), repr(sim.speedup_vs_sam)])
    return depths
