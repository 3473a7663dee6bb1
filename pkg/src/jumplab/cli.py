"""Command-line interface.

Subcommands: theory, solve, eigen, mc, sweep, probe, validate.  Problems
come from --preset or --config; outputs land in --out as CSV tables plus a
summary JSON.  The exit code is 0 iff every asserted check passed.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments, fdm, mc
from .config import build_problem, load_config
from .errors import JumplabError
from .presets import PRESET_NAMES, preset


def _parse_deltas(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _load_spec(args):
    spec, _ = _load_spec_and_doc(args)
    return spec


def _load_spec_and_doc(args):
    """Problem plus the raw config document (for experiment/solver/mc sections)."""
    if args.preset and args.config:
        raise JumplabError("pass either --preset or --config, not both")
    if args.preset:
        return preset(args.preset), {}
    if args.config:
        doc = load_config(args.config)
        return build_problem(doc), doc
    raise JumplabError("a problem is required: --preset NAME or --config FILE")


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_json(payload, path):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _grid(spec, args, delta, factor=0.03):
    if args.grid_n:
        return fdm.build_grid(spec.domain, args.grid_n, n_angular=args.grid_angular)
    n = fdm.suggest_resolution(spec.domain, delta, spec.coeffs, factor=factor)
    return fdm.build_grid(spec.domain, n, n_angular=args.grid_angular)


def cmd_theory(args):
    spec = _load_spec(args)
    report = experiments.theory_report(spec)
    out = _outdir(args)
    _dump_json(report, out / "theory.json")
    if args.format == "csv":
        with open(out / "theory_density.csv", "w") as fh:
            d = spec.domain.dim
            fh.write(",".join([f"x{i}" for i in range(d)] + ["weight", "value"]) + "\n")
            for node, w, v in zip(report["density"]["nodes"],
                                  report["density"]["weights"],
                                  report["density"]["values"]):
                fh.write(",".join(repr(float(c)) for c in node) + f",{w!r},{v!r}\n")
    print(f"k={report['k']} exponent={report['exponent']} "
          f"phi0={report['phi0']:.8f} C_eig={report['C_eig']:.8f}")
    return 0


def _solver_options(doc):
    section = doc.get("solver", {})
    if not section:
        return None
    return fdm.SolverOptions(method=section.get("method", "direct"),
                             rtol=section.get("rtol", 1e-12))


def cmd_solve(args):
    spec, doc = _load_spec_and_doc(args)
    spec.validate()
    delta = _parse_deltas(args.delta)[0]
    grid = _grid(spec, args, delta)
    options = _solver_options(doc)
    if args.quantity == "u":
        sol = fdm.solve_no_jump_prob(delta, spec.coeffs, grid, options=options)
    else:
        sol = fdm.solve_exit_functional(delta, spec.coeffs, grid, options=options)
    out = _outdir(args)
    sol.to_csv(out / f"{args.quantity}_grid.csv")
    x0 = spec.start_point()
    summary = {"delta": delta, "quantity": args.quantity, "n_nodes": grid.n_nodes,
               "value_at_x0": sol.at(x0), "x0": np.asarray(x0).tolist()}
    _dump_json(summary, out / "solve.json")
    print(f"{args.quantity}(x0) = {summary['value_at_x0']:.10f} "
          f"(delta={delta:g}, {grid.n_nodes} nodes)")
    return 0


def cmd_eigen(args):
    spec, doc = _load_spec_and_doc(args)
    spec.validate()
    delta = _parse_deltas(args.delta)[0]
    grid = _grid(spec, args, delta)
    res = fdm.principal_eigenvalue(delta, spec.coeffs, grid,
                                   options=_solver_options(doc))
    out = _outdir(args)
    _dump_json({"delta": delta, "lambda0": res.lambda0, "iterations": res.iterations,
                "residual": res.residual, "n_nodes": grid.n_nodes},
               out / "eigen.json")
    if args.format == "csv":
        res.eigenfunction.to_csv(out / "eigenfunction.csv")
    print(f"lambda0 = {res.lambda0:.10e} ({res.iterations} iterations, "
          f"residual {res.residual:.2e})")
    return 0


def cmd_mc(args):
    spec, doc = _load_spec_and_doc(args)
    spec.validate()
    section = doc.get("mc", {})
    delta = _parse_deltas(args.delta)[0]
    dt = args.dt if args.dt is not None else section.get("dt", 1e-3)
    paths = args.paths if args.paths is not None else section.get("paths", 10000)
    exit_mode = args.exit_mode if args.exit_mode is not None \
        else section.get("exit_mode", "first-crossing")
    horizon = args.horizon if args.horizon is not None else section.get("horizon")
    cfg = mc.SimConfig(delta=delta, dt=dt, n_paths=paths, seed=args.seed,
                       exit_mode=exit_mode, horizon=horizon,
                       chunk_size=section.get("chunk_size", 32768))
    bins = args.bins if args.bins else (2 if spec.domain.dim == 1 else 36)
    est = mc.estimate_exit_law(spec.start_point(), spec.coeffs, spec.domain, cfg,
                               bins=bins, workers=args.workers)
    out = _outdir(args)
    payload = {
        "delta": delta, "dt": dt, "n_paths": paths, "seed": args.seed,
        "exit_mode": exit_mode,
        "histogram": {"edges": est.bin_edges.tolist(), "probs": est.bin_probs.tolist()},
        "mean_f": est.mean_f, "stderr_f": est.stderr_f, "mean_jumps": est.mean_jumps,
        "survival": {"t": est.survival_times.tolist(), "p": est.survival_probs.tolist()},
        "n_censored": est.n_censored,
    }
    _dump_json(payload, out / "mc.json")
    if args.save_paths:
        ens = mc.simulate_ensemble(spec.coeffs, spec.domain, cfg,
                                   x0=spec.start_point(), workers=args.workers)
        ens.to_csv(out / "paths.csv")
    print(f"mean f = {est.mean_f:.6f} +/- {est.stderr_f:.2e} "
          f"(jumps/path {est.mean_jumps:.2f}, censored {est.n_censored})")
    return 0


def cmd_sweep(args):
    spec, doc = _load_spec_and_doc(args)
    section = doc.get("experiment", {})
    if args.delta:
        deltas = _parse_deltas(args.delta)
    elif "deltas" in section:
        deltas = [float(d) for d in section["deltas"]]
    else:
        deltas = list(experiments.DEFAULT_DELTAS)
    kind = args.experiment if args.experiment is not None else section.get("kind")
    if kind is None:
        raise JumplabError("an experiment is required: --experiment or the config's "
                           "experiment.kind")
    if kind == "exit-law":
        result = experiments.run_exit_law_experiment(spec, deltas, workers=args.workers)
    elif kind == "eigenvalue":
        result = experiments.run_eigenvalue_scaling_experiment(spec, deltas,
                                                               workers=args.workers)
    elif kind == "flux":
        result = experiments.run_boundary_flux_experiment(spec, deltas,
                                                          workers=args.workers)
    elif kind == "decay":
        result = experiments.run_interior_decay_experiment(spec, deltas,
                                                           workers=args.workers)
    else:
        raise JumplabError(f"unknown experiment {kind!r}")
    out = _outdir(args)
    experiments.write_rows_csv(result.rows, out / f"{result.name}.csv")
    experiments.write_summary_json(result, out / f"{result.name}.json")
    for c in result.checks:
        print(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
    return 0 if result.passed else 1


def cmd_probe(args):
    ms = [int(t) for t in args.m.split(",")]
    deltas = _parse_deltas(args.delta) if args.delta else list(experiments.DEFAULT_DELTAS)
    results, summary = experiments.run_probe_suite(
        lambda m: preset(f"probe-Vm{m}"), ms=ms, deltas=deltas, workers=args.workers)
    out = _outdir(args)
    for m, res in results.items():
        experiments.write_rows_csv(res.rows, out / f"probe_m{m}.csv")
    _dump_json({str(m): {"alpha": results[m].meta["alpha"],
                         "alpha_ci": results[m].meta["alpha_ci"]} for m in results}
               | {"summary": {k: (v if not isinstance(v, dict)
                                  else {str(kk): vv for kk, vv in v.items()})
                              for k, v in summary.items()}},
               out / "probe.json")
    for m in ms:
        a = results[m].meta["alpha"]
        lo, hi = results[m].meta["alpha_ci"]
        print(f"m={m}: alpha = {a:.4f}  CI ({lo:.4f}, {hi:.4f})")
    if "ordering_alpha1_lt_alpha3" in summary:
        print(f"alpha(1) < alpha(3): {summary['ordering_alpha1_lt_alpha3']}")
    return 0


def cmd_validate(args):
    spec = _load_spec(args)
    try:
        report, vreport = spec.validate()
    except JumplabError as exc:
        print(f"FAIL: {exc}")
        return 1
    print(f"PASS: k={vreport.k} (order-k boundary quantity max {vreport.order_k_max:.4g}, "
          f"tol {vreport.tol:.2e})")
    if report["reduced_accuracy"]:
        print("note: black-box fields present; derivatives are finite-difference "
              "approximations (reduced accuracy)")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="jumplab",
                                description="Exit laws and decay-rate scaling of "
                                            "small-diffusion processes with random jumps")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--preset", choices=PRESET_NAMES, help="named problem preset")
        sp.add_argument("--config", help="JSON problem configuration")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--format", choices=("csv", "json"), default="json")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--grid-n", type=int, dest="grid_n",
                        help="nodes per axis (default: resolve the boundary layer)")
        sp.add_argument("--grid-angular", type=int, dest="grid_angular", default=64)

    sp = sub.add_parser("theory", help="closed-form limit quantities")
    common(sp)
    sp.set_defaults(fn=cmd_theory)

    sp = sub.add_parser("solve", help="nonlocal Dirichlet / no-jump solves")
    common(sp)
    sp.add_argument("--delta", required=True)
    sp.add_argument("--quantity", choices=("phi", "u"), default="phi")
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("eigen", help="principal decay rate")
    common(sp)
    sp.add_argument("--delta", required=True)
    sp.set_defaults(fn=cmd_eigen)

    sp = sub.add_parser("mc", help="Monte Carlo exit-law estimate")
    common(sp)
    sp.add_argument("--delta", required=True)
    sp.add_argument("--paths", type=int, default=None)
    sp.add_argument("--dt", type=float, default=None)
    sp.add_argument("--exit-mode", choices=("first-crossing", "bridge-1d"),
                    default=None, dest="exit_mode")
    sp.add_argument("--horizon", type=float, default=None)
    sp.add_argument("--bins", type=int, default=None)
    sp.add_argument("--save-paths", action="store_true", dest="save_paths")
    sp.set_defaults(fn=cmd_mc)

    sp = sub.add_parser("sweep", help="delta sweeps with fits and checks")
    common(sp)
    sp.add_argument("--experiment", default=None,
                    choices=("exit-law", "eigenvalue", "flux", "decay"))
    sp.add_argument("--delta", help="comma-separated list")
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("probe", help="vanishing-intensity decay-order probe")
    common(sp)
    sp.add_argument("--m", default="1,2,3", help="comma-separated vanishing orders")
    sp.add_argument("--delta", help="comma-separated list")
    sp.set_defaults(fn=cmd_probe)

    sp = sub.add_parser("validate", help="coefficient and vanishing-order checks")
    common(sp)
    sp.set_defaults(fn=cmd_validate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except JumplabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
