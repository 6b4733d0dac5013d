"""Command-line front end.

    samkit --preset fig1 --out results/
    samkit --config experiment.cfg --out results/ --seeds 0,1,2 --jobs 4

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

import argparse
import sys
from dataclasses import replace

from samkit import backend
from samkit.config import parse_config
from samkit.errors import ConfigError, SamkitError
from samkit.experiments import (
    PRESETS,
    lambda_sweep,
    preset_alignment,
    preset_fig1,
    preset_lambda_sweep,
    run_bound_suite,
    run_descent_suite,
    run_experiment,
    run_timing_preset,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _build_parser():
    p = argparse.ArgumentParser(
        prog="samkit",
        description="Benchmarks and verification runs for the perturbed "
                    "optimizer family (kernel backend: %s)." % backend.name(),
    )
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", metavar="PATH",
                     help="experiment config file (key=value sections)")
    src.add_argument("--preset", choices=PRESETS,
                     help="named experiment: fig1 (toy method comparison), "
                          "lemma1 (per-step descent suite), theorem1 "
                          "(horizon bound suite), alignment (gradient "
                          "alignment diagnostics), timing (depth and speedup "
                          "tables), lambda-sweep (interpolation grid)")
    p.add_argument("--out", metavar="DIR", default="samkit-out",
                   help="output directory (default: %(default)s)")
    p.add_argument("--seeds", metavar="LIST",
                   help="comma-separated seed override, e.g. 0,1,2")
    p.add_argument("--mode", choices=("serial", "parallel"),
                   help="execution mode override")
    p.add_argument("--jobs", type=int, default=1, metavar="N",
                   help="(method, seed) pairs to run concurrently")
    return p


def _parse_seeds(text):
    try:
        seeds = tuple(int(s) for s in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"--seeds must be integers, got {text!r}") from None
    if not seeds:
        raise ConfigError("--seeds list is empty")
    return seeds


def _apply_overrides(cfg, args):
    if args.seeds:
        cfg = replace(cfg, seeds=_parse_seeds(args.seeds))
    if args.mode:
        cfg = replace(cfg, mode=args.mode)
    return cfg


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.config:
            try:
                with open(args.config) as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config file: {exc}") from exc
            cfg = _apply_overrides(parse_config(text), args)
            summary = run_experiment(cfg, args.out, jobs=args.jobs)
            _print_summary(summary)
            if any(r.failures for r in summary.rows):
                return EXIT_RUNTIME
            return EXIT_OK

        if args.preset in ("fig1", "alignment"):
            cfg = preset_fig1() if args.preset == "fig1" else preset_alignment()
            cfg = _apply_overrides(cfg, args)
            summary = run_experiment(cfg, args.out, jobs=args.jobs)
            _print_summary(summary)
            return EXIT_RUNTIME if any(r.failures for r in summary.rows) else EXIT_OK

        if args.preset == "lambda-sweep":
            cfg, lambdas = preset_lambda_sweep()
            cfg = _apply_overrides(cfg, args)
            results = lambda_sweep(cfg, lambdas, args.out, jobs=args.jobs)
            for v in sorted(results):
                row = results[v].rows[0]
                print(f"lambda={v:<4g} final_f={row.final_f_mean:.6g} "
                      f"(+/- {row.final_f_std:.2g})")
            return EXIT_OK

        if args.preset == "lemma1":
            ok, reports = run_descent_suite(args.out)
            worst = max(rep.max_residual for _, rep in reports)
            print(f"descent suite: {len(reports)} cases, "
                  f"worst residual {worst:.3e}, {'PASS' if ok else 'FAIL'}")
            return EXIT_OK if ok else EXIT_RUNTIME

        if args.preset == "theorem1":
            ok, reports = run_bound_suite(args.out)
            print(f"bound suite: {len(reports)} cases, {'PASS' if ok else 'FAIL'}")
            return EXIT_OK if ok else EXIT_RUNTIME

        if args.preset == "timing":
            depths = run_timing_preset(args.out)
            for method, (depth, (tot, seq)) in depths.items():
                print(f"{method:<8s} measured depth {depth}, "
                      f"expected (total, seq) = ({tot}, {seq})")
            return EXIT_OK

        raise ConfigError(f"unhandled preset {args.preset!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SamkitError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _print_summary(summary):
    print(f"artifacts in {summary.out_dir} (config {summary.cfg_hash})")
    for r in summary.rows:
        print(f"{r.label:<12s} final_f={r.final_f_mean:.6g} "
              f"(+/- {r.final_f_std:.2g}) grad={r.final_gnorm_mean:.3g} "
              f"seq_grads={r.seq_grads:.0f} speedup_vs_sam={r.speedup_vs_sam:.3f}"
              + (f" failures={r.failures}" if r.failures else ""))


if __name__ == "__main__":
    sys.exit(main())
