"""Command-line orchestration: certify, run, verify, decay.

Thread count is fixed before any compute module is imported (the numba
thread pool is sized at import), from --threads or the BOLTZLAB_THREADS
environment variable.  All kernels reduce per output slot with sequential
inner sums, so emitted files are bit-identical across thread counts; the
flag only changes wall time.

Exit codes: 0 success/pass; 1 configuration or input error; 2 failed
certificate, failed verification or non-convergent refinement, or a decay
fit that misses the pass condition; 3 solver abort during a run (a state
dump path is printed).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time


def build_parser():
    parser = argparse.ArgumentParser(
        prog="boltzlab",
        description="Deterministic kinetic-equation solver and verification suite",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="path to the JSON run config")
        p.add_argument("--out", default=".", help="output directory (default: current)")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: BOLTZLAB_THREADS or all)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("certify", help="evaluate the small-data certificate of the initial field")
    common(p)

    p = sub.add_parser("run", help="run the windowed solver and emit diagnostics")
    common(p)

    p = sub.add_parser("verify", help="run verifier batteries for the kernel bounds and estimates")
    common(p)
    p.add_argument(
        "--suite",
        choices=("kernel-bounds", "nonlinear", "all"),
        default="all",
        help="which verifier battery to run",
    )

    p = sub.add_parser("decay", help="fit a decay law to a diagnostics series")
    p.add_argument("series", help="path to a diagnostics CSV")
    p.add_argument("--model", choices=("exp", "alg"), default="exp")
    p.add_argument("--window", default=None, help="fit window T0:T1 (default: drop 5-sample transient)")
    p.add_argument("--column", default="winf", help="series column to fit (default winf)")
    p.add_argument("--residual-cap", type=float, default=0.2, help="max RMS log-residual for exit 0")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--threads", type=int, default=None, help="worker threads")

    return parser


def _pin_threads(args):
    n = args.threads
    if n is None:
        env = os.environ.get("BOLTZLAB_THREADS")
        if env:
            try:
                n = int(env)
            except ValueError:
                print(f"error: BOLTZLAB_THREADS={env!r} is not an integer", file=sys.stderr)
                return 1
    if n is not None:
        if n < 1:
            print("error: thread count must be >= 1", file=sys.stderr)
            return 1
        # must precede the first numba import; harmless otherwise
        os.environ["NUMBA_NUM_THREADS"] = str(n)
        if "numba" in sys.modules:
            import numba

            numba.set_num_threads(n)
    return 0


def _load_config(args):
    from .config import RunConfig

    cfg = RunConfig.from_json(args.config)
    if args.seed is not None:
        cfg.resolved["seed"] = int(args.seed)
    return cfg


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def cmd_certify(args):
    from .analysis import certify

    cfg = _load_config(args)
    F0 = cfg.build_initial()
    c = cfg.resolved["certify"]
    cert = certify(F0, beta=cfg.step.beta, epsilon0=c["epsilon0"], m_bar=c["m_bar"], c4_tilde=cfg.step.c4_tilde)
    doc = {"provenance": cfg.provenance(), "certificate": cert.to_dict()}
    out = os.path.join(args.out, "certificate.json")
    _write_json(out, doc)
    print(f"entropy + l1x_linfv = {cert.entropy + cert.l1x_linfv:.6g} (threshold {cert.epsilon0:g})")
    print(f"sup |w_b f0| = {cert.winf_beta:.6g} (cap {cert.m_bar:g}); lifespan t1 = {cert.t1:.6g}")
    print(f"verdict: {'pass' if cert.verdict else 'fail'} -> {out}")
    return 0 if cert.verdict else 2


def cmd_run(args):
    from . import report
    from .evolve import SolverAbort, run
    from .fieldio import save_field, write_cell_moments_csv

    cfg = _load_config(args)
    F0 = cfg.build_initial()
    prov = cfg.provenance()
    base = os.path.join(args.out, "series")

    every = cfg.step.checkpoint_every

    def on_window(i, t, tau, trace, wall, field_state):
        ratios = trace.ratios
        last = ratios[-1] if len(ratios) else float("nan")
        print(
            f"window {i:4d}  t={t:.4f}  tau={tau:.4g}  iters={len(trace.d)}  "
            f"ratio={last:.3g}  wall={wall:.2f}s"
        )
        if every > 0 and i % every == 0:
            save_field(os.path.join(args.out, f"checkpoint_{i:05d}.npz"), field_state, provenance=prov)

    try:
        series = run(F0, cfg.step, cfg.params, on_window=on_window)
    except SolverAbort as exc:
        dump = os.path.join(args.out, "abort_state.npz")
        save_field(dump, exc.field, provenance=prov)
        print(f"solver abort at t={exc.t:.6g}: {exc}", file=sys.stderr)
        print(f"state dump: {dump}", file=sys.stderr)
        return 3
    series.to_csv(base + ".csv", provenance=prov)
    series.to_json(base + ".json", provenance=prov)
    save_field(os.path.join(args.out, "final_state.npz"), series.final_field, provenance=prov)
    write_cell_moments_csv(os.path.join(args.out, "final_moments.csv"), series.final_field, provenance=prov)
    figs = report.render_run_figures(series.columns, series.rows, args.out, "series", provenance=prov)
    print(f"wrote {base}.csv, {base}.json, final_state.npz, final_moments.csv")
    for f in figs:
        print(f"wrote {f}")
    return 0


def _verify_kernel_bounds(cfg):
    from .linearized import (
        k1_integral_two_routes,
        verify_bound_2_18,
        verify_bound_2_31,
        verify_bound_2_40,
    )

    params = cfg.params
    checks = []
    rep31 = verify_bound_2_31(params)
    target = 3.0 + params.gamma
    checks.append(
        {
            "name": "screened-part sup scaling (2.31)",
            "report": rep31,
            "pass": bool(
                abs(rep31["slope"] - target) <= 0.4
                and (rep31["refinement_delta"] is None or rep31["refinement_delta"] <= 0.05)
            ),
            "refinement_failed": bool(
                rep31["refinement_delta"] is not None and rep31["refinement_delta"] > 0.05
            ),
        }
    )
    rep18 = verify_bound_2_18(params)
    import math

    finite18 = all(math.isfinite(s["value_refined"]) for s in rep18["samples"])
    checks.append(
        {
            "name": "weighted kernel integral (2.18)",
            "report": rep18,
            "pass": bool(finite18 and rep18["quadrature_converged"]),
            "refinement_failed": not rep18["quadrature_converged"],
        }
    )
    rep40 = verify_bound_2_40(params)
    slope_ok = abs(rep40["slope"] - (params.gamma - 1.0)) <= 0.4
    dominated = all(
        s["total"] <= rep40["fitted_constant"] * s["envelope_m_dependent"] * (1 + 1e-12)
        for s in rep40["samples"]
    ) and all(
        s["total"] <= rep40["fitted_constant_m_free"] * s["envelope_m_free"] * (1 + 1e-12)
        for s in rep40["m_free_samples"]
    )
    checks.append(
        {
            "name": "complement kernel integral (2.40)",
            "report": rep40,
            "pass": bool(slope_ok and dominated and rep40["quadrature_converged"]),
            "refinement_failed": not rep40["quadrature_converged"],
        }
    )
    routes = k1_integral_two_routes(0.0, params)
    checks.append(
        {
            "name": "closed-form kernel two-route cross-check",
            "report": routes,
            "pass": bool(routes["rel_diff"] <= 1e-6),
            "refinement_failed": False,
        }
    )
    return checks


def _verify_nonlinear(cfg):
    import numpy as np

    from .analysis import check_lemma_2_5, check_lemma_4_2, p_conditions
    from .phase import (
        DistributionField,
        PerturbationField,
        conserved_snapshot,
        equilibrium_field,
        maxwellian,
    )

    vg, sg = cfg.vgrid, cfg.sgrid
    checks = []
    F2 = equilibrium_field(vg, sg)
    F2 = DistributionField(vg, sg, 2.0 * F2.values)
    rec = check_lemma_2_5(F2, conserved_snapshot(F2))
    checks.append(
        {"name": "entropy-to-L2 inequality at 2 mu", "report": rec, "pass": bool(rec["pass"]), "refinement_failed": False}
    )
    rng = np.random.default_rng(cfg.resolved["seed"])
    mu = maxwellian(vg)
    f = 0.2 * rng.standard_normal((sg.n_cells, vg.n_nodes)) * np.sqrt(mu)[None, :]
    pert = PerturbationField(vg, sg, f)
    rec42 = check_lemma_4_2(pert, cfg.step.beta, cfg.params)
    zero = check_lemma_4_2(
        PerturbationField(vg, sg, np.zeros_like(f)), cfg.step.beta, cfg.params
    )
    ok42 = bool(np.isfinite(rec42["max_ratio"]) and zero["max_ratio"] == 0.0)
    checks.append(
        {
            "name": "weighted nonlinear estimate ratio",
            "report": {"random_field": rec42, "zero_field": zero},
            "pass": ok42,
            "refinement_failed": False,
        }
    )
    gammas = np.linspace(-3.0, 1.0, 102)[1:]
    scan_ok = all(
        all(v for k, v in p_conditions(float(g)).items() if k != "p") for g in gammas
    )
    checks.append(
        {
            "name": "interpolation exponent admissibility scan",
            "report": {"n_points": len(gammas), "all_pass": bool(scan_ok)},
            "pass": bool(scan_ok),
            "refinement_failed": False,
        }
    )
    return checks


def cmd_verify(args):
    cfg = _load_config(args)
    checks = []
    if args.suite in ("kernel-bounds", "all"):
        checks.extend(_verify_kernel_bounds(cfg))
    if args.suite in ("nonlinear", "all"):
        checks.extend(_verify_nonlinear(cfg))
    doc = {"provenance": cfg.provenance(), "suite": args.suite, "checks": checks}
    out = os.path.join(args.out, f"verify_{args.suite}.json")
    _write_json(out, doc)
    for c in checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}")
    print(f"wrote {out}")
    if any(c["refinement_failed"] for c in checks):
        return 2
    return 0 if all(c["pass"] for c in checks) else 2


def cmd_decay(args):
    from . import report
    from .analysis import fit_decay
    from .fieldio import read_series_csv, series_column

    try:
        columns, rows, prov = read_series_csv(args.series)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    window = None
    if args.window:
        try:
            lo, hi = (float(x) for x in args.window.split(":"))
        except ValueError:
            print(f"error: --window must be T0:T1, got {args.window!r}", file=sys.stderr)
            return 1
        window = (lo, hi)
    try:
        t = series_column(columns, rows, "t")
        y = series_column(columns, rows, args.column)
        fit = fit_decay(list(zip(t, y)), model=args.model, window=window)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    doc = {
        "provenance": prov,
        "column": args.column,
        "fit": fit.to_dict(),
        "residual_cap": args.residual_cap,
    }
    out = os.path.join(args.out, "decay_fit.json")
    _write_json(out, doc)
    fig = report.render_decay_figure(t, y, fit, args.out, "series", provenance=prov)
    print(
        f"{fit.model} fit of {args.column}: rate={fit.rate:.6g} amplitude={fit.amplitude:.6g} "
        f"residual={fit.residual:.3g} window={fit.window}"
    )
    print(f"wrote {out}")
    print(f"wrote {fig}")
    return 0 if (fit.rate > 0.0 and fit.residual <= args.residual_cap) else 2


def main(argv=None):
    args = build_parser().parse_args(argv)
    rc = _pin_threads(args)
    if rc:
        return rc
    os.makedirs(args.out, exist_ok=True)
    from .config import ConfigError

    handlers = {
        "certify": cmd_certify,
        "run": cmd_run,
        "verify": cmd_verify,
        "decay": cmd_decay,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
