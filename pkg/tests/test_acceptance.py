"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (add ``-s`` to see the
per-criterion lines inline).
"""

import statistics

import numpy as np

from samkit.analysis import grad_alignment
from samkit.experiments import (
    build_oracle,
    preset_alignment,
    preset_fig1,
    run_bound_suite,
    run_descent_suite,
)
from samkit.optimizers import (
    BaseSpec,
    OptimizerSpec,
    combine_gradients,
    grad_eval_count,
)
from samkit.pipeline import (
    RunConfig,
    TimingModel,
    run_parallel_two_workers,
    run_serial,
    simulate_wall_clock,
)
from samkit.problems import (
    finite_difference_gradient,
    logistic_regression,
    psd_quadratic,
    random_psd_quadratic,
    tiny_mlp,
    toy_quadratic,
)
from samkit.vecmath import Schedule, SeededRng


def _report(num, desc, ok):
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'} - {desc}")
    assert ok, f"criterion {num} failed: {desc}"


def test_criterion_1_toy_comparison_ordering():
    """Perturbed-method comparison on the toy quadratic: the gradient-guided
    and parallelized schemes converge, the random and stale-gradient ones
    stall an order of magnitude higher."""
    cfg = preset_fig1()
    means = {}
    for label, spec in cfg.methods:
        finals = []
        for seed in cfg.seeds:
            oracle = build_oracle(cfg)
            rc = RunConfig(spec=spec, schedule=cfg.schedule, T=cfg.T,
                           seed=seed, record_every=cfg.T, x0=cfg.x0)
            finals.append(run_serial(oracle, rc).final.f)
        means[label] = statistics.fmean(finals)
    sam = means["sam"]
    ok = (sam <= 1e-3 and means["sampa0"] <= 1e-3
          and means["randsam"] >= 10.0 * sam
          and means["optsam"] >= 10.0 * sam)
    _report(1, f"final means {means}", ok)


def test_criterion_2_descent_inequality_suite():
    """100 random positive-definite quadratics: every per-step residual of
    the potential-descent inequality stays below 1e-10 * max(1, |V_0|)."""
    ok, reports = run_descent_suite(n_cases=100, T=200, seed0=0)
    worst = max(rep.max_residual for _, rep in reports)
    applicable = all(rep.applicable for _, rep in reports)
    _report(2, f"100 cases, worst residual {worst:.3e}", ok and applicable)


def test_criterion_3_convergence_bound_suite():
    """Horizon-tuned fixed step on the same family: the weighted-average
    inequality and the (8/3)-combined min bound hold for T in {10,100,1000}."""
    ok, reports = run_bound_suite(n_seeds=20, Ts=(10, 100, 1000), seed0=5000)
    sums_ok = all(abs(rep.weights_sum - 1.0) <= 1e-12 for _, rep in reports)
    _report(3, f"{len(reports)} runs, weights normalized: {sums_ok}", ok and sums_ok)


def _equivalence_configs():
    rng = SeededRng(2024, 0xACC)
    makers = [
        lambda k: toy_quadratic(2 + (k % 6)),
        lambda k: random_psd_quadratic(5 + 2 * (k % 20), 0.5 + 0.2 * k, seed=k)[0],
        lambda k: logistic_regression(40 + k, 3 + (k % 8), seed=k),
        lambda k: tiny_mlp(20 + k, 3, 4, seed=k),  # dim = 21
    ]
    schedules = [Schedule("constant", eta0=0.05),
                 Schedule("cosine", eta0=0.1),
                 Schedule("inverse_power", eta0=0.1, power=0.7)]
    bases = [BaseSpec(),
             BaseSpec(momentum=0.9, weight_decay=5e-4),
             BaseSpec(kind="adamw_like", weight_decay=0.01)]
    lams = (0.0, 0.2, 0.5, 1.0)
    rhos = (0.0, 0.01, 0.1)
    for k in range(20):
        oracle = makers[k % 4](k)
        T = int(50 + 450 * float(rng.uniform(1)[0]))
        batch = None
        if oracle.n_samples > 1 and k % 2 == 0:
            batch = max(1, oracle.n_samples // 4)
        spec = OptimizerSpec("sampa", rho=rhos[k % 3], lam=lams[k % 4],
                             base=bases[k % 3])
        yield oracle, RunConfig(
            spec=spec, schedule=schedules[k % 3], T=T, batch_size=batch,
            seed=1000 + k, record_every=max(1, T // 10),
            x0="gauss" if k % 2 else "unit_sphere",
        )


def test_criterion_4_parallel_serial_bitwise_equality():
    """20 random configs across every oracle type: the two-worker run
    reproduces the serial iterates bit for bit."""
    checked = 0
    for oracle, cfg in _equivalence_configs():
        ts = run_serial(oracle, cfg)
        tp = run_parallel_two_workers(oracle, cfg)
        assert len(ts.rows) == len(tp.rows)
        for a, b in zip(ts.rows, tp.rows):
            assert a.t == b.t and np.array_equal(a.x, b.x) and a.f == b.f
        checked += 1
    _report(4, f"{checked} configs bitwise equal (d <= 50, T <= 500)", checked == 20)


def test_criterion_5_temporal_cost_accounting():
    """Instrumented sequential depth is 2 for the two-pass method and 1 for
    the parallelized one; the simulated speedup formula hits 2.0 with no
    overhead and 2/1.15 at 15% communication overhead."""
    o = logistic_regression(32, 4, seed=1)
    depths = {}
    for method in ("sam", "sampa"):
        spec = OptimizerSpec(method, rho=0.05, lam=0.2 if method == "sampa" else 0.0)
        tr = run_serial(o, RunConfig(spec=spec, schedule=Schedule("constant", eta0=0.1),
                                     T=20, batch_size=8, seed=2))
        depths[method] = set(tr.meta["per_step_depth"])
        assert depths[method] == {grad_eval_count(method)[1]}
    tr = run_serial(o, RunConfig(spec=OptimizerSpec("sampa", rho=0.05),
                                 schedule=Schedule("constant", eta0=0.1), T=5,
                                 batch_size=8, seed=2))
    s0 = simulate_wall_clock(tr, TimingModel(t_grad=1.0, t_comm=0.0, t_update=0.0))
    s15 = simulate_wall_clock(tr, TimingModel(t_grad=1.0, t_comm=0.15, t_update=0.0))
    ok = (depths["sam"] == {2} and depths["sampa"] == {1}
          and s0.speedup_vs_sam == 2.0
          and abs(s15.speedup_vs_sam - 2.0 / 1.15) <= 1e-12)
    _report(5, f"depths {depths}, speedups {s0.speedup_vs_sam}, "
               f"{s15.speedup_vs_sam:.12f}", ok)


def test_criterion_6_algebraic_identities():
    """(a) first parallelized iterate equals the first two-pass iterate;
    (b) with radius 0 and interpolation 0 the scheme is exactly descent;
    (c) at interpolation 1 the update direction is the next auxiliary
    gradient."""
    sch = Schedule("constant", eta0=0.1)
    oracles = [toy_quadratic(4),
               psd_quadratic(np.diag([0.5, 1.0, 2.0]), np.array([0.1, 0.0, -0.2])),
               logistic_regression(50, 5, seed=3)]

    first_ok = True
    for o in oracles:
        a = run_serial(o, RunConfig(spec=OptimizerSpec("sam", rho=0.1),
                                    schedule=sch, T=1, seed=5))
        b = run_serial(o, RunConfig(spec=OptimizerSpec("sampa", rho=0.1, lam=0.0),
                                    schedule=sch, T=1, seed=5))
        first_ok &= np.array_equal(a.final.x, b.final.x)

    reduction_ok = True
    for o in oracles[1:]:
        gd = run_serial(o, RunConfig(spec=OptimizerSpec("sgd"), schedule=sch,
                                     T=100, seed=7))
        pa = run_serial(o, RunConfig(spec=OptimizerSpec("sampa", rho=0.0, lam=0.0),
                                     schedule=sch, T=100, seed=7))
        reduction_ok &= all(np.array_equal(r.x, s.x) for r, s in zip(gd.rows, pa.rows))

    o, _ = random_psd_quadratic(6, 2.0, seed=11)
    lam1 = run_serial(o, RunConfig(spec=OptimizerSpec("sampa", rho=0.05, lam=1.0),
                                   schedule=sch, T=50, seed=9))
    ogd = run_serial(o, RunConfig(spec=OptimizerSpec("optgd"), schedule=sch,
                                  T=50, seed=9))
    endpoint_ok = all(np.array_equal(r.x, s.x) for r, s in zip(lam1.rows, ogd.rows))
    rng = np.random.default_rng(0)
    for _ in range(25):
        g_tilde = rng.standard_normal(8)
        g_next = rng.standard_normal(8)
        endpoint_ok &= np.array_equal(combine_gradients(1.0, g_tilde, g_next), g_next)

    ok = first_ok and reduction_ok and endpoint_ok
    _report(6, f"first-step {first_ok}, descent reduction {reduction_ok}, "
               f"endpoint {endpoint_ok}", ok)


def test_criterion_7_oracle_correctness():
    """Central differences at 10 random points per oracle (rel err <= 1e-5);
    smoothness and convexity over 1000 random pairs with 1e-10 slack."""
    oracles = [toy_quadratic(5),
               psd_quadratic(np.diag([0.5, 2.0, 3.0]), np.ones(3)),
               random_psd_quadratic(8, 2.5, seed=4)[0],
               logistic_regression(40, 6, seed=2),
               tiny_mlp(30, 4, 3, seed=6)]
    fd_ok = True
    rng = np.random.default_rng(42)
    for o in oracles:
        for _ in range(10):
            x = 0.5 * rng.standard_normal(o.dim)
            fd = finite_difference_gradient(o, x, h=1e-6)
            g = o.gradient(x)
            fd_ok &= np.linalg.norm(fd - g) / (np.linalg.norm(g) + 1e-12) <= 1e-5

    spot_ok = True
    for o in oracles[:4]:  # convex oracles with a known constant
        L = o.lipschitz_L
        for _ in range(1000):
            x = rng.standard_normal(o.dim)
            y = rng.standard_normal(o.dim)
            lhs = np.linalg.norm(o.gradient(x) - o.gradient(y))
            rhs = L * np.linalg.norm(x - y)
            spot_ok &= lhs <= rhs + 1e-10 * max(1.0, rhs)
            fy = o.value(y)
            lin = o.value(x) + float(o.gradient(x) @ (y - x))
            spot_ok &= fy >= lin - 1e-10 * max(1.0, abs(fy))

    _report(7, f"finite differences {fd_ok}, smoothness/convexity {spot_ok}",
            fd_ok and spot_ok)


def test_criterion_8_gradient_alignment_diagnostic():
    """Stochastic logistic run: the auxiliary gradient tracks the main one
    (median tail cosine >= 0.9) and their distance shrinks over the run."""
    cfg = preset_alignment()
    oracle = build_oracle(cfg)
    label, spec = cfg.methods[0]
    rc = RunConfig(spec=spec, schedule=cfg.schedule, T=cfg.T,
                   batch_size=cfg.batch_size, seed=cfg.seeds[0],
                   record_every=1, x0=cfg.x0)
    trace = run_serial(oracle, rc)
    series = grad_alignment(trace, oracle)
    med = series.median_cos_tail(0.1)
    d_early = series.dist_at(cfg.T // 10)
    d_final = series.dist_at(cfg.T)
    ok = med >= 0.9 and d_final <= d_early
    _report(8, f"median tail cosine {med:.4f}, distance {d_early:.3e} -> "
               f"{d_final:.3e}", ok)
