"""Command-line harness: run experiments, compare algorithms, list models.

Exit codes: 0 success, 2 configuration error, 3 non-convergence (artifacts
are still written in that case).
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, load_config
from .estimator import true_error_metrics
from .fom import IngestionError, simulate
from .greedy import (
    adaptive_pod_greedy_deim,
    fully_adaptive,
    pod_greedy_adaptive,
    standard_pod_greedy,
)
from .io import atomic_write_text, write_error_csv, write_trace_csv
from .rom import galerkin_project, simulate_rom

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOCONV = 3


@dataclass
class RunReport:
    config_hash: str
    trace: object
    eps: np.ndarray
    eps_max: float
    converged: bool
    offline_seconds: float
    phase_seconds: dict

    def summary(self):
        lines = [
            f"config_hash = {self.config_hash}",
            f"iterations = {len(self.trace)}",
            f"converged = {self.converged}",
            f"eps_max = {self.eps_max:.6e}",
            f"offline_seconds = {self.offline_seconds:.3f}",
        ]
        for name, secs in self.phase_seconds.items():
            lines.append(f"phase_{name}_seconds = {secs:.3f}")
        return "\n".join(lines)


def _run_algorithm(cfg, fom, coarse, fine, gconf, per_iteration=None):
    if cfg.algorithm == "standard":
        basis, trace = standard_pod_greedy(fom, coarse, gconf, per_iteration)
        return basis, None, trace
    if cfg.algorithm == "adaptive-sampling":
        basis, trace = pod_greedy_adaptive(fom, coarse, fine, gconf, per_iteration)
        return basis, None, trace
    if cfg.algorithm == "adaptive-deim":
        return adaptive_pod_greedy_deim(fom, coarse, gconf, per_iteration)
    return fully_adaptive(fom, coarse, fine, gconf, per_iteration)


def _execute(cfg, per_iteration=None):
    fom = cfg.build_model()
    coarse, fine, test = cfg.build_sets(fom)
    gconf = cfg.greedy_config()
    basis, deim, trace = _run_algorithm(cfg, fom, coarse, fine, gconf, per_iteration)
    rom = galerkin_project(fom, basis, deim if deim is not None and deim.ell else None)
    eps, eps_max = true_error_metrics(fom, rom, test)
    return fom, rom, test, trace, eps, eps_max


def _write_artifacts(cfg, trace, test, eps, eps_max, converged, outdir):
    meta = {"config_hash": cfg.config_hash(), **cfg.seeds_meta(),
            "algorithm": cfg.algorithm, "model": cfg.model}
    d = len(np.atleast_1d(test[0]))
    write_trace_csv(trace, os.path.join(outdir, "trace.csv"), d, meta)
    write_error_csv(test, eps, os.path.join(outdir, "error.csv"), meta)
    report_lines = [f"# {k}={v}" for k, v in meta.items()]
    report_lines += [f"converged={converged}", f"eps_max={eps_max:.17g}",
                     f"iterations={len(trace)}",
                     f"offline_seconds={trace.total_seconds:.3f}"]
    atomic_write_text(os.path.join(outdir, "report.txt"),
                      "\n".join(report_lines) + "\n")


def cmd_run(args):
    try:
        cfg = _load_with_overrides(args)
    except (ConfigError, IngestionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = args.out or cfg.output_dir
    fom, rom, test, trace, eps, eps_max = _execute(cfg)
    converged = trace.converged and eps_max <= cfg.tol
    _write_artifacts(cfg, trace, test, eps, eps_max, converged, outdir)
    report = RunReport(
        config_hash=cfg.config_hash(), trace=trace, eps=eps, eps_max=eps_max,
        converged=converged, offline_seconds=trace.total_seconds,
        phase_seconds=trace.phase_seconds,
    )
    print(report.summary())
    return EXIT_OK if converged else EXIT_NOCONV


def cmd_compare(args):
    try:
        cfg_a = _load_with_overrides(args, path=args.config_fixed)
        cfg_b = _load_with_overrides(args, path=args.config_adaptive)
    except (ConfigError, IngestionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg_a.model != cfg_b.model or cfg_a.test != cfg_b.test \
            or cfg_a.seed_test != cfg_b.seed_test:
        print("error: compare needs identical models and test sets", file=sys.stderr)
        return EXIT_CONFIG

    outdir = args.out or cfg_b.output_dir
    results = []
    for cfg in (cfg_a, cfg_b):
        fom = cfg.build_model()
        coarse, fine, test = cfg.build_sets(fom)
        # cache the test-set FOM outputs once; the per-iteration eps_max
        # callback then only simulates the ROM
        y_true = [simulate(fom, mu).outputs for mu in test]
        curve_dmax, curve_eps = [], []
        callback_seconds = [0.0]

        def per_iteration(it, rom, dmax, _y=y_true, _test=test,
                          _cd=curve_dmax, _ce=curve_eps, _cb=callback_seconds):
            t0 = time.perf_counter()
            errs = []
            for mu, y in zip(_test, _y):
                yr = simulate_rom(rom, mu).outputs
                errs.append(np.linalg.norm(y[:, 1:] - yr[:, 1:], axis=0).mean())
            _cd.append(dmax)
            _ce.append(max(errs))
            _cb[0] += time.perf_counter() - t0

        basis, deim, trace = _run_algorithm(cfg, fom, coarse, fine,
                                            cfg.greedy_config(), per_iteration)
        runtime = trace.total_seconds - callback_seconds[0]
        results.append({
            "cfg": cfg, "trace": trace, "dmax": curve_dmax, "eps": curve_eps,
            "runtime": runtime, "eps_final": curve_eps[-1],
        })

    rows = max(len(res["dmax"]) for res in results)
    lines = ["iteration,delta_max_fixed,eps_max_fixed,delta_max_adaptive,eps_max_adaptive"]
    for i in range(rows):
        cells = [str(i + 1)]
        for res in results:
            if i < len(res["dmax"]):
                cells += [f"{res['dmax'][i]:.17g}", f"{res['eps'][i]:.17g}"]
            else:
                cells += ["", ""]
        lines.append(",".join(cells))
    atomic_write_text(os.path.join(outdir, "compare.csv"), "\n".join(lines) + "\n")

    table = ["algorithm,runtime_seconds,eps_max,converged"]
    for res in results:
        table.append(f"{res['cfg'].algorithm},{res['runtime']:.3f},"
                     f"{res['eps_final']:.6e},{res['trace'].converged}")
    atomic_write_text(os.path.join(outdir, "runtime_table.csv"), "\n".join(table) + "\n")
    print("\n".join(table))
    return EXIT_OK


MODEL_INFO = [
    ("burgers", "1-D viscous Burgers, q in [0.001, 1], default n=500, K=100"),
    ("convdiff", "1-D convection-diffusion, (q1,q2) in [0.001,1]x[0.5,5], "
                 "default n=800, K=100"),
    ("thermal", "microthruster heat transfer, h in [1,1e8]^3, n=4257 from "
                "Matrix Market files, default K=100, T=100"),
]


def cmd_models(args):
    for name, desc in MODEL_INFO:
        print(f"{name}: {desc}")
    return EXIT_OK


def _load_with_overrides(args, path=None):
    cfg = load_config(path if path is not None else args.config)
    if getattr(args, "max_iters", None) is not None:
        cfg.max_iterations = args.max_iters
    for name in ("seed_coarse", "seed_fine", "seed_test"):
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, name, val)
    threads = getattr(args, "threads", None)
    if threads is None:
        env = os.environ.get("RB_ADAPT_THREADS")
        threads = int(env) if env else None
    if threads is not None:
        cfg.threads = threads
    return cfg


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rbadapt",
        description="Reduced basis models with adaptive training-set sampling",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--threads", type=int,
                       help="estimator sweep threads, 0 = auto "
                            "(env RB_ADAPT_THREADS)")
        p.add_argument("--max-iters", type=int, dest="max_iters")
        p.add_argument("--seed-coarse", type=int, dest="seed_coarse")
        p.add_argument("--seed-fine", type=int, dest="seed_fine")
        p.add_argument("--seed-test", type=int, dest="seed_test")

    p_run = sub.add_parser("run", help="run one configured experiment")
    p_run.add_argument("config")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="fixed-vs-adaptive comparison")
    p_cmp.add_argument("config_fixed")
    p_cmp.add_argument("config_adaptive")
    common(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    p_models = sub.add_parser("models", help="list available model builders")
    p_models.set_defaults(func=cmd_models)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
