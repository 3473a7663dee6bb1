"""Experiment runners: delta sweeps, cross-method comparisons, reports.

Every experiment validates its problem first, runs the solvers over a delta
list (sweep points are independent jobs on a small thread pool, merged in
order), and returns a SweepResult: tabular rows, an optional power-law fit,
and named pass/fail checks.  CSV and JSON writers format floats with repr,
so reruns with a fixed configuration are byte-identical.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import fdm, mc, theory
from .errors import ValidationError
from .fitting import PowerLawFit, fit_power_law, fit_slope
from .presets import ProblemSpec
from .geometry import Domain

#: harness default sweep
DEFAULT_DELTAS = (1e-2, 10**-2.5, 1e-3, 10**-3.5, 1e-4)

#: exponent windows and prefactor tolerances per vanishing order, from the
#: acceptance targets (k = 0, 1, 2); higher orders fall back to the last row.
EXPONENT_WINDOW = {0: 0.02, 1: 0.03, 2: 0.05}
PREFACTOR_RTOL = {0: 0.02, 1: 0.03, 2: 0.05}


@dataclass(frozen=True)
class SweepRow:
    delta: float
    method: str     # fdm | mc | theory
    quantity: str   # phi | lambda0 | flux | u-center
    value: float
    stderr: float = 0.0


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    target: float
    tol: float
    detail: str = ""


@dataclass
class SweepResult:
    name: str
    rows: list
    checks: list
    fit: PowerLawFit | None = None
    meta: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def check(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def theory_quadratures(domain: Domain, boundary_resolution=400,
                       interior_resolution=None):
    if interior_resolution is None:
        interior_resolution = 10**5 if domain.dim == 1 else 1000
    return (domain.boundary_quadrature(boundary_resolution),
            domain.interior_quadrature(interior_resolution))


def theory_report(spec: ProblemSpec):
    """Limit quantities for a problem, as a JSON-ready dict."""
    quad, iquad = theory_quadratures(spec.domain)
    res = theory.evaluate(spec.coeffs, quad, iquad)
    return {
        "preset": spec.name,
        "k": res.k,
        "exponent": res.exponent,
        "phi0": res.phi0,
        "C_eig": res.prefactor,
        "density": {
            "nodes": [list(map(float, p)) for p in quad.nodes],
            "weights": [float(w) for w in quad.weights],
            "values": [float(v) for v in res.density.values],
            "normalization": res.density.normalization,
        },
    }


def _grid_for(spec: ProblemSpec, delta, factor, cap=400001, n_angular=64):
    n = fdm.suggest_resolution(spec.domain, delta, spec.coeffs, factor=factor, cap=cap)
    return fdm.build_grid(spec.domain, n, n_angular=n_angular)


def _sweep(fn, deltas, workers):
    if workers <= 1 or len(deltas) == 1:
        return [fn(d) for d in deltas]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, deltas))


def _rel(a, b):
    return abs(a - b) / abs(b)


# ---------------------------------------------------------------------------
# exit-law limit experiment


def run_exit_law_experiment(spec: ProblemSpec, deltas=DEFAULT_DELTAS, x0=None,
                            x0_alt=None, f=None, grid_factor=0.03,
                            x_independence_rtol=0.02, mc_config=None,
                            workers=1) -> SweepResult:
    """Convergence of the exit functional to its small-diffusion limit.

    Solves the nonlocal Dirichlet problem at each delta, runs a Monte Carlo
    cross-check at the largest delta, and appends the limit value.  Checks:
    the gap to the limit shrinks along the sweep, two start points agree at
    the smallest delta, and the MC mean is within 3 standard errors.
    """
    spec.validate()
    deltas = sorted(deltas, reverse=True)
    x0 = np.asarray(x0 if x0 is not None else spec.start_point(), dtype=float)
    if x0_alt is None:
        x0_alt = spec.domain.center / 2.0 + x0 / 2.0 if spec.domain.dim == 1 \
            else (spec.domain.center + x0) / 2.0
    x0_alt = np.asarray(x0_alt, dtype=float)
    f = spec.coeffs.boundary_data if f is None else f

    quad, iquad = theory_quadratures(spec.domain)
    density = theory.limit_exit_density(spec.coeffs, quad)
    phi0 = theory.limit_exit_functional(spec.coeffs, quad, f=f, density=density)

    def solve_point(d):
        grid = _grid_for(spec, d, grid_factor)
        sol = fdm.solve_exit_functional(d, spec.coeffs, grid, f=f)
        return sol.at(x0), sol.at(x0_alt)

    vals = _sweep(solve_point, deltas, workers)
    rows = [SweepRow(d, "fdm", "phi", v[0]) for d, v in zip(deltas, vals)]

    cfg = mc_config or mc.SimConfig(delta=deltas[0], dt=1e-3, n_paths=20000,
                                    seed=7, exit_mode="bridge-1d" if spec.domain.dim == 1
                                    else "first-crossing",
                                    horizon=_horizon_from_theory(spec, deltas[0]))
    est = mc.estimate_exit_law(x0, spec.coeffs, spec.domain, cfg, f=f, workers=workers)
    rows.append(SweepRow(deltas[0], "mc", "phi", est.mean_f, est.stderr_f))
    rows.append(SweepRow(deltas[-1], "theory", "phi", phi0))

    gaps = [abs(v[0] - phi0) for v in vals]
    monotone = all(gaps[i + 1] <= gaps[i] for i in range(len(gaps) - 1))
    xdiff = _rel(vals[-1][1], vals[-1][0])
    mc_gap = abs(est.mean_f - vals[0][0])
    checks = [
        Check("gap_decreasing", monotone, gaps[-1], 0.0, 0.0,
              detail=f"|phi_fdm - phi0| along sweep: {[f'{g:.3e}' for g in gaps]}"),
        Check("x_independence", xdiff <= x_independence_rtol, xdiff, 0.0,
              x_independence_rtol,
              detail=f"phi({x0_alt})={vals[-1][1]:.6f} vs phi({x0})={vals[-1][0]:.6f} "
                     f"at delta={deltas[-1]:g}"),
        Check("mc_within_3se", mc_gap <= 3 * est.stderr_f + 1e-30, mc_gap, 0.0,
              3 * est.stderr_f,
              detail=f"mc={est.mean_f:.6f} (se {est.stderr_f:.2e}) vs fdm={vals[0][0]:.6f}"),
    ]
    return SweepResult("exit-law", rows, checks,
                       meta={"phi0": phi0, "x0": x0.tolist(), "x0_alt": x0_alt.tolist(),
                             "preset": spec.name})


def _horizon_from_theory(spec: ProblemSpec, delta):
    """Censoring horizon: 50 / (theory decay rate), the harness default."""
    try:
        quad, iquad = theory_quadratures(spec.domain, boundary_resolution=128,
                                         interior_resolution=2000 if spec.domain.dim == 1 else 200)
        pref = theory.decay_rate_prefactor(spec.coeffs, quad, iquad)
        k = spec.coeffs.vanishing_order
        return 50.0 / (pref * delta ** ((k + 1) / 2.0))
    except ValidationError:
        return None  # falls back to the step-count cap


# ---------------------------------------------------------------------------
# eigenvalue scaling experiment


def run_eigenvalue_scaling_experiment(spec: ProblemSpec, deltas=DEFAULT_DELTAS,
                                      grid_factor=0.03, prefactor_delta=None,
                                      exponent_window=None, prefactor_rtol=None,
                                      workers=1) -> SweepResult:
    """Decay-rate scaling lambda0 ~ C * delta^{(k+1)/2} against the limit formulas.

    Fits the exponent on log-log axes with a bootstrap CI and compares the
    prefactor lambda0 * delta^{-(k+1)/2} at ``prefactor_delta`` (default: the
    smallest sweep delta) with the closed-form prefactor.
    """
    spec.validate()
    deltas = sorted(deltas, reverse=True)
    k = spec.coeffs.vanishing_order
    expo_target = (k + 1) / 2.0
    window = EXPONENT_WINDOW.get(k, 0.05) if exponent_window is None else exponent_window
    rtol = PREFACTOR_RTOL.get(k, 0.05) if prefactor_rtol is None else prefactor_rtol
    prefactor_delta = deltas[-1] if prefactor_delta is None else prefactor_delta
    if prefactor_delta not in deltas:
        raise ValidationError("prefactor_delta must be one of the sweep deltas")

    quad, iquad = theory_quadratures(spec.domain)
    pref_theory = theory.decay_rate_prefactor(spec.coeffs, quad, iquad)

    def lam(d):
        grid = _grid_for(spec, d, grid_factor)
        return fdm.principal_eigenvalue(d, spec.coeffs, grid).lambda0

    lams = _sweep(lam, deltas, workers)
    rows = [SweepRow(d, "fdm", "lambda0", v) for d, v in zip(deltas, lams)]
    fit = fit_power_law(deltas, lams)

    i = deltas.index(prefactor_delta)
    pref_meas = lams[i] * prefactor_delta ** (-expo_target)
    ci_lo, ci_hi = fit.exponent_ci
    checks = [
        Check("exponent_window", abs(fit.exponent - expo_target) <= window,
              fit.exponent, expo_target, window,
              detail=f"fitted exponent {fit.exponent:.4f}, window +/-{window}"),
        Check("exponent_ci_contains_theory", ci_lo <= expo_target <= ci_hi,
              fit.exponent, expo_target, 0.0,
              detail=f"bootstrap CI ({ci_lo:.4f}, {ci_hi:.4f})"),
        Check("prefactor", _rel(pref_meas, pref_theory) <= rtol,
              pref_meas, pref_theory, rtol,
              detail=f"lambda0*delta^-{expo_target} = {pref_meas:.4f} vs theory "
                     f"{pref_theory:.4f} at delta={prefactor_delta:g}"),
    ]
    return SweepResult("eigenvalue-scaling", rows, checks, fit=fit,
                       meta={"k": k, "prefactor_theory": pref_theory,
                             "prefactor_measured": pref_meas,
                             "prefactor_delta": prefactor_delta, "preset": spec.name})


# ---------------------------------------------------------------------------
# boundary flux experiment


def run_boundary_flux_experiment(spec: ProblemSpec, deltas=(1e-3, 1e-4, 1e-5),
                                 grid_factor=0.04, n_angular=64,
                                 value_rtol=0.03, uniformity_tol=1e-6,
                                 workers=1) -> SweepResult:
    """Scaled boundary flux of the no-jump problem against -sqrt(2 V (n.an)).

    Rows carry sqrt(delta) * (n . a grad u) at the first boundary node; the
    checks compare all nodes at the smallest delta and, on smooth closed
    components, the node-to-node uniformity for symmetric data.
    """
    spec.validate()
    deltas = sorted(deltas, reverse=True)

    def fluxes(d):
        grid = _grid_for(spec, d, grid_factor, n_angular=n_angular)
        u = fdm.solve_no_jump_prob(d, spec.coeffs, grid)
        bf = fdm.boundary_flux(u, spec.coeffs)
        return bf

    results = _sweep(fluxes, deltas, workers)
    rows = [SweepRow(d, "fdm", "flux", math.sqrt(d) * bf.values[0])
            for d, bf in zip(deltas, results)]

    bf = results[-1]
    d_min = deltas[-1]
    scaled = math.sqrt(d_min) * bf.values
    amat = spec.coeffs.diffusion(bf.nodes)
    nan = np.einsum("ni,nij,nj->n", bf.normals, amat, bf.normals)
    vvals = spec.coeffs.intensity.eval(bf.nodes, (0,) * spec.domain.dim)
    target = -np.sqrt(2.0 * vvals * nan)
    rel_dev = np.abs(scaled - target) / np.abs(target)
    checks = [Check("flux_value", float(np.max(rel_dev)) <= value_rtol,
                    float(scaled[0]), float(target[0]), value_rtol,
                    detail=f"max relative deviation over the boundary: {np.max(rel_dev):.3e} "
                           f"at delta={d_min:g}")]
    if spec.domain.kind in ("disk", "annulus"):
        # outer component: last n_angular values by grid convention
        outer = scaled[-n_angular:]
        spread = float((outer.max() - outer.min()) / abs(outer.mean()))
        checks.append(Check("flux_uniformity", spread <= uniformity_tol,
                            spread, 0.0, uniformity_tol,
                            detail=f"relative node spread over the outer ring: {spread:.3e}"))
    return SweepResult("boundary-flux", rows, checks,
                       meta={"preset": spec.name, "delta_min": d_min,
                             "max_rel_dev": float(np.max(rel_dev))})


# ---------------------------------------------------------------------------
# interior decay experiment


def run_interior_decay_experiment(spec: ProblemSpec, deltas=(1e-2, 1e-3, 1e-4),
                                  grid_factor=0.05, expected_slope=None,
                                  slope_rtol=0.05, workers=1) -> SweepResult:
    """Decay of the no-jump probability at the domain center.

    Fits log u(center) against delta^{-1/2}; the slope is negative, and for
    1D constant coefficients it equals -dist(center) * sqrt(2 V / a).
    """
    spec.validate()
    deltas = sorted(deltas, reverse=True)
    center = spec.domain.center

    def ucenter(d):
        grid = _grid_for(spec, d, grid_factor)
        u = fdm.solve_no_jump_prob(d, spec.coeffs, grid)
        return u.at(center)

    vals = _sweep(ucenter, deltas, workers)
    rows = [SweepRow(d, "fdm", "u-center", v) for d, v in zip(deltas, vals)]
    slope, _, r2 = fit_slope([d ** -0.5 for d in deltas], np.log(vals))
    checks = [Check("decay_slope_negative", slope < 0.0, slope, 0.0, 0.0,
                    detail=f"log u(center) vs delta^-1/2 slope {slope:.5f}, R^2={r2:.6f}")]
    if expected_slope is not None:
        checks.append(Check("decay_slope_value", _rel(slope, expected_slope) <= slope_rtol,
                            slope, expected_slope, slope_rtol,
                            detail=f"slope {slope:.5f} vs {expected_slope:.5f}"))
    return SweepResult("interior-decay", rows, checks,
                       meta={"slope": slope, "r_squared": r2, "preset": spec.name})


# ---------------------------------------------------------------------------
# vanishing-intensity probe (exploratory; no value assertions)


def run_vanishing_intensity_probe(spec: ProblemSpec, deltas=DEFAULT_DELTAS,
                                  grid_factor=0.05, workers=1) -> SweepResult:
    """Decay-rate order when the intensity vanishes on the boundary.

    Emits the fitted order with its CI; deliberately asserts nothing about
    the value (the scaling law here is an open problem; the data is the
    product).
    """
    deltas = sorted(deltas, reverse=True)

    def lam(d):
        grid = _grid_for(spec, d, grid_factor)
        return fdm.principal_eigenvalue(d, spec.coeffs, grid).lambda0

    lams = _sweep(lam, deltas, workers)
    rows = [SweepRow(d, "fdm", "lambda0", v) for d, v in zip(deltas, lams)]
    fit = fit_power_law(deltas, lams)
    return SweepResult("vanishing-intensity-probe", rows, [], fit=fit,
                       meta={"preset": spec.name, "alpha": fit.exponent,
                             "alpha_ci": list(fit.exponent_ci)})


def run_probe_suite(make_spec, ms=(1, 2, 3), deltas=DEFAULT_DELTAS,
                    grid_factor=0.05, workers=1):
    """Probe several vanishing orders of the intensity; record the ordering.

    ``make_spec`` maps the order m to a ProblemSpec.  Returns (per-m results,
    summary dict with alpha estimates, CIs, and whether alpha(1) < alpha(3)).
    """
    results = {}
    for m in ms:
        results[m] = run_vanishing_intensity_probe(make_spec(m), deltas=deltas,
                                                   grid_factor=grid_factor,
                                                   workers=workers)
    summary = {
        "alphas": {m: results[m].meta["alpha"] for m in ms},
        "alpha_cis": {m: results[m].meta["alpha_ci"] for m in ms},
    }
    if 1 in results and 3 in results:
        summary["ordering_alpha1_lt_alpha3"] = bool(
            results[1].meta["alpha"] < results[3].meta["alpha"])
    return results, summary


# ---------------------------------------------------------------------------
# cross-method comparisons


@dataclass(frozen=True)
class CompareReport:
    mc_value: float
    mc_stderr: float
    fdm_value: float
    abs_diff: float
    diff_over_se: float
    passed: bool
    detail: str = ""


def compare_mc_fdm(spec: ProblemSpec, delta, x0=None, f=None,
                   mc_config=None, grid_factor=0.02, workers=1) -> CompareReport:
    """Monte Carlo exit mean against the nonlocal Dirichlet solve at one point."""
    spec.validate()
    x0 = np.asarray(x0 if x0 is not None else spec.start_point(), dtype=float)
    f = spec.coeffs.boundary_data if f is None else f
    cfg = mc_config or mc.SimConfig(delta=delta, dt=1e-4, n_paths=10**5, seed=11,
                                    exit_mode="bridge-1d" if spec.domain.dim == 1
                                    else "first-crossing",
                                    horizon=_horizon_from_theory(spec, delta))
    est = mc.estimate_exit_law(x0, spec.coeffs, spec.domain, cfg, f=f, workers=workers)
    grid = _grid_for(spec, delta, grid_factor)
    sol = fdm.solve_exit_functional(delta, spec.coeffs, grid, f=f)
    phi = sol.at(x0)
    diff = abs(est.mean_f - phi)
    ratio = diff / est.stderr_f if est.stderr_f > 0 else math.inf if diff > 0 else 0.0
    return CompareReport(est.mean_f, est.stderr_f, phi, diff, ratio,
                         passed=ratio <= 3.0,
                         detail=f"mc={est.mean_f:.6f}+/-{est.stderr_f:.2e} "
                                f"fdm={phi:.6f} at delta={delta:g}")


def discrete_no_jump_mass(spec: ProblemSpec, delta, grid_factor=0.03):
    """The mu-weighted mass of the no-jump exit probability, on the grid."""
    grid = _grid_for(spec, delta, grid_factor)
    u = fdm.solve_no_jump_prob(delta, spec.coeffs, grid)
    w = fdm.mu_quadrature_weights(spec.coeffs, grid)
    return float(w @ u.values)


def no_jump_mass_limit(spec: ProblemSpec):
    """Limit of delta^{-(k+1)/2} * (mu-mass of the no-jump probability).

    Equals the unnormalized limit-density integral divided by sqrt(2) for
    even k and by 2 for odd k.
    """
    quad, _ = theory_quadratures(spec.domain)
    density = theory.limit_exit_density(spec.coeffs, quad)
    k = spec.coeffs.vanishing_order
    divisor = math.sqrt(2.0) if k % 2 == 0 else 2.0
    return density.normalization / divisor


def compare_no_jump_probability(spec: ProblemSpec, delta, mc_config=None,
                                grid_factor=0.03, workers=1) -> CompareReport:
    """MC estimate of P(exit before the first jump) vs the discrete mu-mass.

    Paths start from the redistribution density and stop at their first jump.
    """
    spec.validate()
    cfg = mc_config or mc.SimConfig(delta=delta, dt=1e-4, n_paths=20000, seed=13,
                                    exit_mode="bridge-1d" if spec.domain.dim == 1
                                    else "first-crossing", horizon=None)
    p, se = mc.exit_before_jump_probability(spec.coeffs, spec.domain, cfg,
                                            workers=workers)
    mass = discrete_no_jump_mass(spec, delta, grid_factor=grid_factor)
    diff = abs(p - mass)
    ratio = diff / se if se > 0 else math.inf if diff > 0 else 0.0
    return CompareReport(p, se, mass, diff, ratio, passed=ratio <= 3.0,
                         detail=f"mc={p:.6f}+/-{se:.2e} fdm mass={mass:.6f} "
                                f"at delta={delta:g}")


# ---------------------------------------------------------------------------
# writers


def write_rows_csv(rows, path):
    with open(path, "w") as fh:
        fh.write("delta,method,quantity,value,stderr\n")
        for r in rows:
            fh.write(f"{r.delta!r},{r.method},{r.quantity},{r.value!r},{r.stderr!r}\n")


def _fit_dict(fit: PowerLawFit | None):
    if fit is None:
        return None
    return {
        "exponent": fit.exponent,
        "exponent_ci": list(fit.exponent_ci),
        "prefactor": fit.prefactor,
        "r_squared": fit.r_squared,
        "deltas": [float(d) for d in fit.deltas],
        "excluded": list(fit.excluded),
        "segment_exponents": [float(s) for s in fit.segment_exponents],
        "n_boot": fit.n_boot,
        "ci_level": fit.ci_level,
    }


def summary_dict(result: SweepResult):
    return {
        "name": result.name,
        "pass": result.passed,
        "fit": _fit_dict(result.fit),
        "checks": [
            {"name": c.name, "passed": c.passed, "value": c.value,
             "target": c.target, "tol": c.tol, "detail": c.detail}
            for c in result.checks
        ],
        "meta": result.meta,
    }


def write_summary_json(result_or_dict, path):
    payload = summary_dict(result_or_dict) if isinstance(result_or_dict, SweepResult) \
        else result_or_dict
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
