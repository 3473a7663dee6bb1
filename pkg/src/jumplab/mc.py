"""Monte Carlo simulation of the jump-redistributed diffusion.

A path moves by Euler steps of the small-diffusion process (drift
delta*(b + div(a)/2), covariance delta*a), accrues an exponential clock at
rate V along the way, teleports to a fresh draw from the redistribution
density when the clock rings, and stops on leaving the domain.

Paths are simulated in lockstep chunks.  Each chunk owns a counter-based
random stream derived from (master seed, chunk index), so results are
bit-identical for a fixed configuration no matter the execution order or
worker count.  Chunk layout (chunk_size) is part of the configuration:
changing it reshuffles the randomness exactly like changing the seed.
``run_path`` reproduces the chunk_size=1 layout one path at a time.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import SamplingError, SolverError, ValidationError
from .fields import CoefficientSet, nondivergence_drift
from .geometry import Domain

# Bridge crossings with exponent beyond this are treated as impossible
# (probability below e^-40); keeps the exp() work on the boundary layer only.
BRIDGE_EXPONENT_CUTOFF = 40.0

STATUS_EXIT = 0
STATUS_CENSORED = 1
STATUS_JUMPED = 2  # only in stop-at-first-jump mode


@dataclass(frozen=True)
class SimConfig:
    delta: float
    dt: float
    n_paths: int
    seed: int = 0
    exit_mode: str = "first-crossing"   # or "bridge-1d"
    horizon: float | None = None        # time units; None -> 10**6 steps
    chunk_size: int = 32768

    def __post_init__(self):
        if not (self.delta > 0 and self.dt > 0 and self.n_paths >= 1):
            raise ValidationError("need delta > 0, dt > 0, n_paths >= 1")
        if self.exit_mode not in ("first-crossing", "bridge-1d"):
            raise ValidationError(f"unknown exit mode {self.exit_mode!r}")
        if self.chunk_size < 1:
            raise ValidationError("chunk_size must be >= 1")
        if self.horizon is not None and not self.horizon / self.dt < 2**62:
            raise ValidationError("horizon/dt overflows the step counter")

    @property
    def horizon_steps(self):
        if self.horizon is None:
            return 10**6
        return max(1, int(math.ceil(self.horizon / self.dt)))


@dataclass(frozen=True)
class ExitSample:
    exit_point: np.ndarray
    exit_time: float
    jump_count: int
    path_index: int
    censored: bool = False


@dataclass(frozen=True)
class PathEnsemble:
    """Raw per-path outcomes, in path order."""

    exit_points: np.ndarray  # (N, d); rows of censored paths are the last position
    exit_times: np.ndarray   # (N,) time of retirement
    jump_counts: np.ndarray  # (N,)
    status: np.ndarray       # (N,) STATUS_*

    @property
    def n_paths(self):
        return len(self.exit_times)

    def exited(self):
        return self.status == STATUS_EXIT

    def survival_times(self):
        """Exit times with non-exited paths pushed past any horizon."""
        t = self.exit_times.copy()
        t[self.status == STATUS_CENSORED] = np.inf
        return t

    def to_csv(self, path):
        d = self.exit_points.shape[1]
        cols = ["path"] + [f"exit_x{i}" for i in range(d)] + ["exit_time", "jumps", "status"]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for p in range(self.n_paths):
                row = [str(p)] + [repr(float(c)) for c in self.exit_points[p]]
                row += [repr(float(self.exit_times[p])), str(int(self.jump_counts[p])),
                        str(int(self.status[p]))]
                fh.write(",".join(row) + "\n")


def _chunk_rng(seed, chunk_index):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(0, int(chunk_index)))
    return np.random.Generator(np.random.Philox(ss))


class MuSampler:
    """Rejection sampler for the redistribution density.

    Proposes uniformly on the bounding box against a precomputed bound
    M = 1.05 * max(mu) over a dense sample; raises SamplingError when the
    acceptance rate collapses below 1e-4.
    """

    def __init__(self, coeffs: CoefficientSet, domain: Domain, sample_resolution=2048):
        self.domain = domain
        self.mu = coeffs.redistribution
        self.dim = domain.dim
        res = sample_resolution if domain.dim == 1 else 256
        sample = np.concatenate([domain.interior_quadrature(res).nodes,
                                 domain.boundary_quadrature(256).nodes])
        peak = float(np.max(self.mu.eval(sample, (0,) * self.dim)))
        if not peak > 0:
            raise SamplingError("redistribution density has no positive values on the sample")
        self.bound = 1.05 * peak
        self.lo, self.hi = domain.bounding_box

    def draw(self, rng, size):
        out = np.empty((size, self.dim))
        filled = 0
        proposed = 0
        accepted = 0
        while filled < size:
            m = max(64, 2 * (size - filled))
            pts = self.lo + rng.random((m, self.dim)) * (self.hi - self.lo)
            u = rng.random(m)
            dens = np.where(self.domain.contains(pts),
                            self.mu.eval(pts, (0,) * self.dim), -1.0)
            good = u * self.bound < dens
            take = min(int(good.sum()), size - filled)
            if take:
                out[filled:filled + take] = pts[good][:take]
                filled += take
            proposed += m
            accepted += int(good.sum())
            if proposed >= max(20000, 4 * size) and accepted < 1e-4 * proposed:
                raise SamplingError(
                    f"rejection acceptance rate {accepted / proposed:.2e} below 1e-4; "
                    "density too peaked for box rejection sampling")
        return out


def sample_jump_target(coeffs: CoefficientSet, domain: Domain, rng, size=1):
    """Draw points distributed with the redistribution density."""
    return MuSampler(coeffs, domain).draw(rng, size)


class _Kinetics:
    """Per-run precomputation for the Euler step (constant-field fast paths)."""

    def __init__(self, coeffs: CoefficientSet, dim: int):
        self.dim = dim
        self.intensity = coeffs.intensity
        self.v_const = coeffs.intensity.constant_value()
        drift = nondivergence_drift(coeffs)
        self.b_comps = drift.components
        cvals = [c.constant_value() for c in self.b_comps]
        if all(v is not None for v in cvals):
            self.b_const = np.asarray(cvals, dtype=float)
        else:
            self.b_const = None
        self.drift_zero = self.b_const is not None and not np.any(self.b_const)
        entries = [coeffs.diffusion.entry(i, j).constant_value()
                   for i in range(self.dim) for j in range(self.dim)]
        if all(e is not None for e in entries):
            amat = np.asarray(entries, dtype=float).reshape(self.dim, self.dim)
            self.root_const = np.linalg.cholesky(amat)
        else:
            self.root_const = None
        self.diffusion = coeffs.diffusion
        self.a00 = coeffs.diffusion.entry(0, 0)
        self.a00_const = self.a00.constant_value()

    def intensity_at(self, x):
        if self.v_const is not None:
            return self.v_const
        return self.intensity.eval(x, (0,) * self.dim)

    def drift_at(self, x):
        if self.b_const is not None:
            return self.b_const
        return np.stack([c.eval(x, (0,) * self.dim) for c in self.b_comps], axis=1)

    def noise(self, x, xi):
        """sigma(x) @ xi, batched."""
        if self.root_const is not None:
            if self.dim == 1:
                return xi * self.root_const[0, 0]
            return xi @ self.root_const.T
        if self.dim == 1:
            a = self.a00.eval(x, (0,))
            return xi * np.sqrt(a)[:, None]
        roots = np.linalg.cholesky(self.diffusion(x))
        return np.einsum("nij,nj->ni", roots, xi)


def step_euler(x, coeffs: CoefficientSet, delta, dt, rng):
    """One Euler step: x + delta*B(x)*dt + sqrt(delta*dt) * sigma(x) * xi.

    Accepts a single point or an (n, d) batch; shape is preserved.
    """
    d = coeffs.dim
    pts = np.asarray(x, dtype=float)
    pts2 = pts.reshape(-1, d)
    kin = _Kinetics(coeffs, d)
    xi = rng.standard_normal(pts2.shape)
    out = pts2 + delta * kin.drift_at(pts2) * dt + math.sqrt(delta * dt) * kin.noise(pts2, xi)
    return out.reshape(pts.shape)


def _simulate_chunk(chunk_index, n_lanes, x0, coeffs, domain, cfg,
                    sampler, kin, stop_on_jump):
    rng = _chunk_rng(cfg.seed, chunk_index)
    d = domain.dim
    if x0 is None:
        x = sampler.draw(rng, n_lanes)
    else:
        x = np.tile(np.asarray(x0, dtype=float).reshape(1, d), (n_lanes, 1))
    thresh = rng.exponential(1.0, n_lanes)
    clock = np.zeros(n_lanes)
    jumps = np.zeros(n_lanes, dtype=np.int64)
    lane = np.arange(n_lanes)

    out_points = np.empty((n_lanes, d))
    out_times = np.empty(n_lanes)
    out_jumps = np.zeros(n_lanes, dtype=np.int64)
    out_status = np.full(n_lanes, STATUS_CENSORED, dtype=np.int8)

    bridge = cfg.exit_mode == "bridge-1d"
    if bridge and d != 1:
        raise ValidationError("bridge-corrected exit detection is 1D only")
    sdt = math.sqrt(cfg.delta * cfg.dt)
    horizon = cfg.horizon_steps
    is_interval = domain.kind == "interval"
    if is_interval:
        lo_dom, hi_dom = domain.params
    xl = xr = near_tol = a_max = None
    if bridge:
        xl, xr = domain.params
        # lanes further than this from both endpoints cannot fire the bridge
        if kin.a00_const is not None:
            a_max = kin.a00_const
        else:
            probe = np.linspace(xl, xr, 256).reshape(-1, 1)
            a_max = float(np.max(kin.a00.eval(probe, (0,))))
        near_tol = math.sqrt(0.5 * BRIDGE_EXPONENT_CUTOFF * cfg.delta * a_max * cfg.dt)

    def retire(mask, points, time, status):
        ids = lane[mask]
        out_points[ids] = points
        out_times[ids] = time
        out_jumps[ids] = jumps[mask]
        out_status[ids] = status

    step = 0
    while len(x) and step < horizon:
        step += 1
        clock += kin.intensity_at(x) * cfg.dt
        jump = clock >= thresh
        any_jump = bool(jump.any())

        xi = rng.standard_normal((len(x), d))
        xn = x + sdt * kin.noise(x, xi)
        if not kin.drift_zero:
            xn += cfg.delta * kin.drift_at(x) * cfg.dt

        if is_interval:
            xn0 = xn[:, 0]
            outside = (xn0 <= lo_dom) | (xn0 >= hi_dom)
        else:
            outside = ~domain.contains(xn)
        if any_jump:
            outside &= ~jump
            if stop_on_jump:
                retire(jump, x[jump], step * cfg.dt, STATUS_JUMPED)

        crossed = None
        cross_point = None
        if bridge:
            x0col = x[:, 0]
            near = ((x0col - xl < near_tol) | (xr - x0col < near_tol)
                    | (xn0 - xl < near_tol) | (xr - xn0 < near_tol)) & ~outside
            if any_jump:
                near &= ~jump
            if near.any():
                nidx = np.flatnonzero(near)
                xo = x0col[nidx]
                xm = xn0[nidx]
                a_here = kin.a00_const if kin.a00_const is not None \
                    else kin.a00.eval(x[nidx], (0,))
                s2 = cfg.delta * a_here * cfg.dt
                expo_l = 2.0 * (xo - xl) * (xm - xl) / s2
                expo_r = 2.0 * (xr - xo) * (xr - xm) / s2
                hit = np.zeros(len(nidx), dtype=bool)
                hit_left = np.zeros(len(nidx), dtype=bool)
                need_l = expo_l < BRIDGE_EXPONENT_CUTOFF
                if need_l.any():
                    u = rng.random(int(need_l.sum()))
                    fired = u < np.exp(-expo_l[need_l])
                    hit[need_l] |= fired
                    hit_left[need_l] |= fired
                need_r = (expo_r < BRIDGE_EXPONENT_CUTOFF) & ~hit
                if need_r.any():
                    u = rng.random(int(need_r.sum()))
                    hit[need_r] |= u < np.exp(-expo_r[need_r])
                if hit.any():
                    crossed = np.zeros(len(x), dtype=bool)
                    crossed[nidx[hit]] = True
                    cross_point = np.where(hit_left[hit], xl, xr).reshape(-1, 1)

        any_out = bool(outside.any())
        if any_out:
            retire(outside, domain.project_to_boundary(xn[outside]),
                   step * cfg.dt, STATUS_EXIT)
        if crossed is not None:
            retire(crossed, cross_point, step * cfg.dt, STATUS_EXIT)

        if any_jump and not stop_on_jump:
            n_j = int(jump.sum())
            xn[jump] = sampler.draw(rng, n_j)
            clock[jump] = 0.0
            thresh[jump] = rng.exponential(1.0, n_j)
            jumps[jump] += 1

        x = xn
        drop = outside
        if crossed is not None:
            drop = drop | crossed
        if stop_on_jump and any_jump:
            drop = drop | jump
        if any_out or crossed is not None or (stop_on_jump and any_jump):
            keep = ~drop
            x = x[keep]
            clock = clock[keep]
            thresh = thresh[keep]
            jumps = jumps[keep]
            lane = lane[keep]

    if len(x):  # censored at the horizon
        retire(np.ones(len(x), dtype=bool), x, horizon * cfg.dt, STATUS_CENSORED)
    return out_points, out_times, out_jumps, out_status


def _chunk_task(args):
    (chunk_index, n_lanes, x0, coeffs, domain, cfg, sampler, kin, stop_on_jump) = args
    return chunk_index, _simulate_chunk(chunk_index, n_lanes, x0, coeffs, domain,
                                        cfg, sampler, kin, stop_on_jump)


def simulate_ensemble(coeffs: CoefficientSet, domain: Domain, cfg: SimConfig,
                      x0=None, stop_on_jump=False, workers=1) -> PathEnsemble:
    """Simulate all paths; ``x0=None`` starts each path from the redistribution density.

    ``workers`` only distributes chunks over processes; results are identical
    for any worker count and execution order.
    """
    sampler = MuSampler(coeffs, domain)
    kin = _Kinetics(coeffs, domain.dim)
    n = cfg.n_paths
    cs = cfg.chunk_size
    n_chunks = (n + cs - 1) // cs
    points = np.empty((n, domain.dim))
    times = np.empty(n)
    jumps = np.empty(n, dtype=np.int64)
    status = np.empty(n, dtype=np.int8)

    tasks = [(c, min(n, (c + 1) * cs) - c * cs, x0, coeffs, domain, cfg,
              sampler, kin, stop_on_jump) for c in range(n_chunks)]
    if workers <= 1 or n_chunks == 1:
        results = [_chunk_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, n_chunks)) as pool:
            results = list(pool.map(_chunk_task, tasks))
    for c, (p, t, j, s) in results:
        lo = c * cs
        hi = min(n, lo + cs)
        points[lo:hi] = p
        times[lo:hi] = t
        jumps[lo:hi] = j
        status[lo:hi] = s
    return PathEnsemble(points, times, jumps, status)


def run_path(x0, coeffs: CoefficientSet, domain: Domain, cfg: SimConfig,
             path_index=0) -> ExitSample:
    """One path, on the stream the ensemble would use with chunk_size=1."""
    one = replace(cfg, n_paths=1, chunk_size=1)
    sampler = MuSampler(coeffs, domain)
    kin = _Kinetics(coeffs, domain.dim)
    p, t, j, s = _simulate_chunk(path_index, 1, x0, coeffs, domain,
                                 one, sampler, kin, False)
    return ExitSample(exit_point=p[0], exit_time=float(t[0]), jump_count=int(j[0]),
                      path_index=int(path_index), censored=bool(s[0] == STATUS_CENSORED))


@dataclass(frozen=True)
class ExitLawEstimate:
    bin_edges: np.ndarray
    bin_probs: np.ndarray        # over non-censored exits, sums to 1
    mean_f: float
    stderr_f: float
    mean_jumps: float
    survival_times: np.ndarray
    survival_probs: np.ndarray
    n_paths: int
    n_censored: int


def _default_bin_edges(domain: Domain, bins):
    if not np.isscalar(bins):
        return np.asarray(bins, dtype=float)
    if domain.kind == "interval":
        a, b = domain.params
        return np.linspace(a, b, int(bins) + 1)
    if domain.kind in ("disk", "annulus"):
        return np.linspace(0.0, 2 * math.pi, int(bins) + 1)
    return np.linspace(0.0, domain.surface_measure, int(bins) + 1)


def estimate_exit_law(x0, coeffs: CoefficientSet, domain: Domain, cfg: SimConfig,
                      bins=2, f=None, workers=1,
                      survival_grid=None) -> ExitLawEstimate:
    """Aggregate exit statistics over independent paths.

    Censored paths are excluded from the exit histogram and f-average but
    enter the survival curve.
    """
    ens = simulate_ensemble(coeffs, domain, cfg, x0=x0, workers=workers)
    exited = ens.exited()
    n_exit = int(exited.sum())
    if n_exit == 0:
        raise SolverError("all paths were censored at the horizon")
    pts = ens.exit_points[exited]
    coords, _ = domain.boundary_coordinate(pts)
    edges = _default_bin_edges(domain, bins)
    counts, _ = np.histogram(coords, bins=edges)
    probs = counts / n_exit

    f = coeffs.boundary_data if f is None else f
    fvals = f.eval(pts, (0,) * domain.dim)
    mean_f = float(np.mean(fvals))
    stderr_f = float(np.std(fvals, ddof=1) / math.sqrt(n_exit)) if n_exit > 1 else 0.0

    tau = ens.survival_times()
    if survival_grid is None:
        t_end = cfg.horizon if cfg.horizon is not None else float(np.max(ens.exit_times))
        survival_grid = np.linspace(0.0, t_end, 65)[1:]
    surv = np.array([np.mean(tau > t) for t in survival_grid])
    return ExitLawEstimate(
        bin_edges=edges, bin_probs=probs, mean_f=mean_f, stderr_f=stderr_f,
        mean_jumps=float(np.mean(ens.jump_counts[exited])),
        survival_times=np.asarray(survival_grid), survival_probs=surv,
        n_paths=cfg.n_paths, n_censored=int((ens.status == STATUS_CENSORED).sum()))


@dataclass(frozen=True)
class SurvivalRateEstimate:
    rate: float
    r_squared: float
    n_window: int
    window: tuple
    times: np.ndarray
    probs: np.ndarray


def fit_survival_rate(times, probs, window=(0.01, 0.2)) -> SurvivalRateEstimate:
    """Least-squares slope of log P(tau > t) over the window where P is in range."""
    times = np.asarray(times, dtype=float)
    probs = np.asarray(probs, dtype=float)
    mask = (probs >= window[0]) & (probs <= window[1])
    if int(mask.sum()) < 4:
        raise ValidationError(
            f"only {int(mask.sum())} survival points inside P in [{window[0]}, {window[1]}]; need >= 4")
    t = times[mask]
    y = np.log(probs[mask])
    slope, intercept = np.polyfit(t, y, 1)
    fit = slope * t + intercept
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return SurvivalRateEstimate(rate=float(-slope), r_squared=r2,
                                n_window=int(mask.sum()), window=tuple(window),
                                times=t, probs=probs[mask])


def estimate_survival_rate(coeffs: CoefficientSet, domain: Domain, cfg: SimConfig,
                           t_grid=None, x0=None, workers=1,
                           window=(0.01, 0.2)) -> SurvivalRateEstimate:
    """Exponential decay rate of P(tau > t), from simulated paths."""
    if x0 is None:
        x0 = domain.center
    ens = simulate_ensemble(coeffs, domain, cfg, x0=x0, workers=workers)
    tau = ens.survival_times()
    if t_grid is None:
        finite = ens.exit_times[ens.exited()]
        if len(finite) < 10:
            raise SolverError("too few exits to estimate a survival rate")
        t_grid = np.linspace(0.0, float(np.quantile(finite, 0.999)), 200)[1:]
    probs = np.array([np.mean(tau > t) for t in t_grid])
    return fit_survival_rate(t_grid, probs, window=window)


def exit_before_jump_probability(coeffs: CoefficientSet, domain: Domain,
                                 cfg: SimConfig, workers=1):
    """P(exit happens before the first jump), starting from the redistribution density.

    Returns (estimate, stderr).
    """
    ens = simulate_ensemble(coeffs, domain, cfg, x0=None, stop_on_jump=True,
                            workers=workers)
    p = float(np.mean(ens.status == STATUS_EXIT))
    se = math.sqrt(max(p * (1 - p), 1e-300) / ens.n_paths)
    return p, se
