"""Structural checks on computed solutions, reported as pass/fail records.

Each check measures a quantity whose theoretical value is known (the
decreasing property of K, the martingale gap of -K, value regularity, a
priori norm estimates, stability under data perturbation) and packages it
as measured <= bound + tolerance. Estimates whose constants are not
explicit are verified through finiteness and stability of the empirical
constant under grid refinement instead of against a closed-form value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .bsde import SolutionTriple, SurfaceTriple, extract_triple, solve_markovian
from .core import (
    DomainError,
    Generator,
    Grids,
    Payoff,
    VolatilityBand,
)
from .expectation import (
    AdaptiveCurvatureControl,
    simulate_paths,
    random_controls,
)
from .pde import ValueSurface, solve_gheat

__all__ = [
    "VerifyReport",
    "check_decreasing",
    "check_martingale_K",
    "check_lipschitz",
    "check_estimate_Y",
    "check_estimate_ZK",
    "check_stability",
]

DEFAULT_KAPPA_STEPS = 4


@dataclass(frozen=True, slots=True)
class VerifyReport:
    """One check outcome: passes iff measured <= bound + tolerance."""

    name: str
    measured: float
    bound: float
    tolerance: float
    grid: dict = field(default_factory=dict, compare=False)

    @property
    def passed(self) -> bool:
        return bool(self.measured <= self.bound + self.tolerance)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "pass": self.passed,
            "measured": float(self.measured),
            "bound": float(self.bound),
            "tolerance": float(self.tolerance),
            "grid": dict(self.grid),
        }

    def summary(self) -> str:
        word = "PASS" if self.passed else "FAIL"
        return (
            f"{word} {self.name}: measured={self.measured!r} "
            f"bound={self.bound!r} tolerance={self.tolerance!r}"
        )


def _grid_meta(grids: Grids, **extra) -> dict:
    meta = {"T": grids.T, "nt": grids.nt, "nx": grids.nx,
            "x_lo": grids.x_lo, "x_hi": grids.x_hi}
    meta.update(extra)
    return meta


def check_decreasing(triples, name: str = "decreasing_K") -> VerifyReport:
    """Largest K increment over all paths of all triples; bound 0, tol 0.

    Increments are built to be <= 0 exactly and sequential cumulative sums
    preserve monotonicity under rounding, so this is a zero-tolerance,
    bitwise check.
    """
    if isinstance(triples, SolutionTriple):
        triples = [triples]
    triples = list(triples)
    if not triples:
        raise DomainError("check_decreasing needs at least one triple")
    worst = -math.inf
    n_paths = 0
    for tr in triples:
        worst = max(worst, float(np.max(np.diff(tr.k, axis=1))))
        n_paths += tr.bundle.n_paths
    g = triples[0].bundle.grids
    return VerifyReport(
        name=name,
        measured=worst,
        bound=0.0,
        tolerance=0.0,
        grid=_grid_meta(g, n_paths=n_paths, n_triples=len(triples)),
    )


def _adapted_curvature(surfaces: SurfaceTriple, gen: Generator) -> ValueSurface:
    """Curvature surface driving the bang-bang control: uxx, plus 2*g along
    the surface when a second driver is present."""
    if not gen.has_g:
        return surfaces.uxx
    g = surfaces.u.grids
    vals = np.array(surfaces.uxx.values, dtype=np.float64, copy=True)
    t = g.t
    for k in range(g.nt + 1):
        vals[k] += 2.0 * np.asarray(
            gen.g(float(t[k]), surfaces.u.values[k], surfaces.ux.values[k]),
            dtype=np.float64,
        )
    return ValueSurface(grids=g, values=vals)


def _kt_stats(surfaces, control, gen, band, grids, n_paths, seed, chunk, cut):
    count, total, total_sq = 0, 0.0, 0.0
    for lo in range(0, n_paths, chunk):
        n = min(chunk, n_paths - lo)
        bundle = simulate_paths(control, n, seed, grids, band, path_offset=lo)
        tr = extract_triple(surfaces, bundle, gen, band)
        kt = tr.k[:, cut]
        count += n
        total += float(kt.sum())
        total_sq += float((kt * kt).sum())
    mean = total / count
    if count > 1:
        var = max(0.0, (total_sq - count * mean * mean) / (count - 1))
        se = math.sqrt(var / count)
    else:
        se = 0.0
    return mean, se


def check_martingale_K(
    payoff: Payoff,
    gen: Generator,
    band: VolatilityBand,
    grids: Grids,
    *,
    n_controls: int = 8,
    n_paths: int = 2048,
    seed: int = 2025,
    chunk: int = 2048,
    kappa_steps: int = DEFAULT_KAPPA_STEPS,
    name: str = "martingale_K",
) -> VerifyReport:
    """Martingale property of -K: every control keeps E[K_T] <= 0 (within
    three standard errors) and the curvature-adapted control attains zero
    (within max of three standard errors and one grid increment dx + dt).

    The terminal cut excludes the last kappa_steps increments, where the
    second derivative of a kinked payoff degenerates.
    """
    surfaces = solve_markovian(payoff, gen, band, grids)
    cut = max(1, grids.nt - max(0, kappa_steps))
    controls = random_controls(band, grids.nt, n_controls, seed)
    excess = -math.inf
    means = []
    for c in controls:
        mean, se = _kt_stats(surfaces, c, gen, band, grids, n_paths, seed, chunk, cut)
        means.append(mean)
        excess = max(excess, mean - 3.0 * se)
    bb = AdaptiveCurvatureControl(_adapted_curvature(surfaces, gen), band)
    mean_bb, se_bb = _kt_stats(surfaces, bb, gen, band, grids, n_paths, seed, chunk, cut)
    gtol = grids.dx + grids.dt
    excess_bb = abs(mean_bb) - max(3.0 * se_bb, gtol)
    measured = max(excess, excess_bb)
    return VerifyReport(
        name=name,
        measured=measured,
        bound=0.0,
        tolerance=0.0,
        grid=_grid_meta(
            grids,
            n_controls=n_controls,
            n_paths=n_paths,
            kappa_steps=kappa_steps,
            mean_adapted=mean_bb,
            worst_control_mean=max(means),
        ),
    )


def check_lipschitz(
    surface: ValueSurface,
    L_phi: float,
    L_h: float,
    sup_h: float,
    band: VolatilityBand,
    *,
    tol: float = 0.05,
    n_random_pairs: int = 512,
    seed: int = 7,
    name: str = "lipschitz_value",
) -> VerifyReport:
    """Space-time regularity of the value surface.

    Bound: |u(t,x) - u(s,y)| <= L1*(|x-y| + |t-s|^(1/2)) with
    L1 = max(Lhat, Lhat*sigma_hi + Ltilde*sqrt(T)), Lhat = L_phi*exp(L_h*T)
    and Ltilde = sup_h the driver magnitude bound. Measured is the largest
    difference quotient over adjacent-node sweeps plus seeded random pairs.
    """
    g = surface.grids
    u = surface.values
    lhat = L_phi * math.exp(L_h * g.T)
    l1 = max(lhat, lhat * band.sigma_hi + sup_h * math.sqrt(g.T))
    sqrt_dt = math.sqrt(g.dt)

    worst = 0.0
    rows = np.unique(np.linspace(0, g.nt, 9).astype(np.int64))
    for k in rows:
        worst = max(worst, float(np.max(np.abs(np.diff(u[k])))) / g.dx)
    cols = np.unique(np.linspace(0, g.nx - 1, 9).astype(np.int64))
    for j in cols:
        worst = max(worst, float(np.max(np.abs(np.diff(u[:, j])))) / sqrt_dt)

    if n_random_pairs > 0:
        uu = rng.uniforms(
            seed,
            rng.STREAM_CHECKS,
            np.arange(n_random_pairs, dtype=np.int64)[:, None],
            np.arange(4, dtype=np.int64)[None, :],
        )
        k1 = (uu[:, 0] * (g.nt + 1)).astype(np.int64)
        k2 = (uu[:, 1] * (g.nt + 1)).astype(np.int64)
        j1 = (uu[:, 2] * g.nx).astype(np.int64)
        j2 = (uu[:, 3] * g.nx).astype(np.int64)
        diff = np.abs(u[k1, j1] - u[k2, j2])
        dist = np.abs(j1 - j2) * g.dx + np.sqrt(np.abs(k1 - k2) * g.dt)
        keep = dist > 0.0
        if keep.any():
            worst = max(worst, float(np.max(diff[keep] / dist[keep])))

    return VerifyReport(
        name=name,
        measured=worst,
        bound=l1,
        tolerance=tol * l1,
        grid=_grid_meta(g, L_phi=L_phi, L_h=L_h, sup_h=sup_h),
    )


def _abs_power_payoff(payoff: Payoff, alpha: float) -> Payoff:
    return Payoff(
        "abs-power",
        lambda x: np.abs(payoff.fn(x)) ** alpha,
        math.inf,
        None,
        (payoff.kind, alpha),
    )


def _norm_surface(
    payoff: Payoff,
    gen: Generator,
    band: VolatilityBand,
    grids: Grids,
    alpha: float,
    eps: float,
) -> ValueSurface:
    """Majorant surface: expectation of |phi|^alpha plus the integrated
    alpha-power of the driver's size at the origin (inflated by eps times
    the Lipschitz constant for perturbed data)."""
    lip = gen.lipschitz_const

    def source(t: float, x: np.ndarray):
        return (gen.f0_bound(t) + lip * eps) ** alpha

    return solve_gheat(
        _abs_power_payoff(payoff, alpha),
        Generator.zero(),
        band,
        grids,
        source=source,
    )


def _rho(u_vals: np.ndarray, r_vals: np.ndarray, alpha: float) -> float:
    lhs = np.abs(u_vals) ** alpha
    rhs = np.maximum(r_vals, 1e-300)
    return float(np.max(lhs / rhs))


def check_estimate_Y(
    payoff: Payoff,
    gen: Generator,
    band: VolatilityBand,
    grids: Grids,
    alpha: float,
    *,
    eps: float = 0.0,
    name: str = "estimate_Y",
) -> VerifyReport:
    """A priori bound on |Y|^alpha by the data norm, alpha > 1.

    The constant is not explicit, so the check requires the empirical ratio
    rho = max |u|^alpha / R to be finite and not grow under one grid
    refinement (5 percent slack): measured = rho_fine, bound = rho_coarse.
    """
    if not alpha > 1.0:
        raise DomainError("estimate requires alpha > 1")
    u_c = solve_gheat(payoff, gen, band, grids)
    r_c = _norm_surface(payoff, gen, band, grids, alpha, eps)
    rho_c = _rho(u_c.values, r_c.values, alpha)
    fine = grids.refined(1)
    u_f = solve_gheat(payoff, gen, band, fine)
    r_f = _norm_surface(payoff, gen, band, fine, alpha, eps)
    rho_f = _rho(u_f.values, r_f.values, alpha)
    if not (math.isfinite(rho_c) and math.isfinite(rho_f)):
        return VerifyReport(
            name=name, measured=math.inf, bound=0.0, tolerance=0.0,
            grid=_grid_meta(grids, alpha=alpha, eps=eps),
        )
    return VerifyReport(
        name=name,
        measured=rho_f,
        bound=rho_c,
        tolerance=0.05 * rho_c,
        grid=_grid_meta(grids, alpha=alpha, eps=eps, rho_coarse=rho_c, rho_fine=rho_f),
    )


def _zk_constants(
    payoff: Payoff,
    gen: Generator,
    band: VolatilityBand,
    grids: Grids,
    alpha: float,
    eps: float,
    n_controls: int,
    n_paths: int,
    seed: int,
    chunk: int,
    kappa_steps: int,
):
    surfaces = solve_markovian(payoff, gen, band, grids)
    r0 = _norm_surface(payoff, gen, band, grids, alpha, eps).value_at(0.0, 0.0)
    r0 = max(r0, 1e-300)
    cut = max(1, grids.nt - max(0, kappa_steps))
    dt = grids.dt
    controls = list(random_controls(band, grids.nt, n_controls, seed))
    controls.append(AdaptiveCurvatureControl(_adapted_curvature(surfaces, gen), band))
    best_z = 0.0
    best_k = 0.0
    for c in controls:
        tot_z = 0.0
        tot_k = 0.0
        count = 0
        for lo in range(0, n_paths, chunk):
            n = min(chunk, n_paths - lo)
            bundle = simulate_paths(c, n, seed, grids, band, path_offset=lo)
            tr = extract_triple(surfaces, bundle, gen, band)
            hm = bundle.h_matrix()
            dqv = (hm[:, :cut] * hm[:, :cut]) * dt
            zint = np.sum(tr.z[:, :cut] * tr.z[:, :cut] * dqv, axis=1)
            tot_z += float(np.sum(zint ** (alpha / 2.0)))
            tot_k += float(np.sum(np.abs(tr.k[:, cut]) ** alpha))
            count += n
        best_z = max(best_z, tot_z / count)
        best_k = max(best_k, tot_k / count)
    return best_z / r0, best_k / r0


def _stable_dev(fine: float, coarse: float) -> float:
    tiny = 1e-12
    if abs(coarse) <= tiny and abs(fine) <= tiny:
        return 0.0
    if abs(coarse) <= tiny:
        return math.inf
    return abs(fine / coarse - 1.0)


def check_estimate_ZK(
    payoff: Payoff,
    gen: Generator,
    band: VolatilityBand,
    grids: Grids,
    alpha: float,
    *,
    eps: float = 0.0,
    n_controls: int = 4,
    n_paths: int = 1024,
    seed: int = 2025,
    chunk: int = 2048,
    kappa_steps: int = DEFAULT_KAPPA_STEPS,
    name: str = "estimate_ZK",
) -> VerifyReport:
    """A priori bounds on the integrated Z and on K by the data norm.

    Empirical constants C_Z = sup_controls E[(int Z^2 d<B>)^(alpha/2)]/R0
    and C_K = sup_controls E[|K|^alpha]/R0 must be finite and stable under
    one refinement: measured is the larger relative drift, tolerance 10
    percent. Integrals stop kappa_steps short of the terminal time, where
    derivative regularity degenerates for kinked payoffs.
    """
    if not alpha > 1.0:
        raise DomainError("estimate requires alpha > 1")
    cz_c, ck_c = _zk_constants(
        payoff, gen, band, grids, alpha, eps, n_controls, n_paths, seed, chunk,
        kappa_steps,
    )
    fine = grids.refined(1)
    cz_f, ck_f = _zk_constants(
        payoff, gen, band, fine, alpha, eps, n_controls, n_paths, seed, chunk,
        4 * kappa_steps,
    )
    vals = (cz_c, ck_c, cz_f, ck_f)
    if not all(math.isfinite(v) for v in vals):
        return VerifyReport(
            name=name, measured=math.inf, bound=0.0, tolerance=0.0,
            grid=_grid_meta(grids, alpha=alpha),
        )
    measured = max(_stable_dev(cz_f, cz_c), _stable_dev(ck_f, ck_c))
    return VerifyReport(
        name=name,
        measured=measured,
        bound=0.0,
        tolerance=0.10,
        grid=_grid_meta(
            grids,
            alpha=alpha,
            eps=eps,
            n_controls=n_controls,
            n_paths=n_paths,
            kappa_steps=kappa_steps,
            C_Z_coarse=cz_c,
            C_Z_fine=cz_f,
            C_K_coarse=ck_c,
            C_K_fine=ck_f,
        ),
    )


def _blend_payoff(pa: Payoff, pb: Payoff, c: float) -> Payoff:
    return Payoff(
        "blend",
        lambda x: pa.fn(x) + c * (np.asarray(pb.fn(x)) - np.asarray(pa.fn(x))),
        max(pa.lipschitz_const, pb.lipschitz_const),
        None,
        (pa.kind, pb.kind, c),
    )


def _blend_generator(ga: Generator, gb: Generator, c: float) -> Generator:
    def f(t, y, z):
        fa = np.asarray(ga.f(t, y, z), dtype=np.float64)
        fb = np.asarray(gb.f(t, y, z), dtype=np.float64)
        return fa + c * (fb - fa)

    g = None
    if ga.has_g or gb.has_g:
        def g(t, y, z):  # type: ignore[misc]
            shape = np.broadcast(y, z).shape
            va = (
                np.asarray(ga.g(t, y, z), dtype=np.float64)
                if ga.has_g
                else np.zeros(shape)
            )
            vb = (
                np.asarray(gb.g(t, y, z), dtype=np.float64)
                if gb.has_g
                else np.zeros(shape)
            )
            return va + c * (vb - va)

    return Generator(
        f=f, g=g, lipschitz_const=max(ga.lipschitz_const, gb.lipschitz_const)
    )


def check_stability(
    payoff_a: Payoff,
    gen_a: Generator,
    payoff_b: Payoff,
    gen_b: Generator,
    band: VolatilityBand,
    grids: Grids,
    alpha: float = 2.0,
    *,
    scales: tuple = (1.0, 0.5, 0.25),
    name: str = "stability_Y",
) -> VerifyReport:
    """Continuity of the solution in the data: the gap to problem B scaled
    by c decays at least linearly as c halves.

    For each c the gap D_c = max |u_A - u_{B_c}| over all nodes is computed
    with B_c the c-blend of the data; measured is the worst halving ratio
    D_{c/2}/D_c against bound 0.5 with tolerance 0.1 (at most linear within
    20 percent). Identical problems pass vacuously.
    """
    if not alpha > 1.0:
        raise DomainError("estimate requires alpha > 1")
    if (
        len(scales) < 2
        or any(s <= 0.0 for s in scales)
        or any(abs(b - 0.5 * a) > 1e-12 * a for a, b in zip(scales, scales[1:]))
    ):
        raise DomainError("scales must be positive and successively halved")
    u_a = solve_gheat(payoff_a, gen_a, band, grids).values
    scale_ref = max(1.0, float(np.max(np.abs(u_a))))
    gaps = []
    for c in scales:
        u_bc = solve_gheat(
            _blend_payoff(payoff_a, payoff_b, c),
            _blend_generator(gen_a, gen_b, c),
            band,
            grids,
        ).values
        gaps.append(float(np.max(np.abs(u_a - u_bc))))
    if not all(math.isfinite(d) for d in gaps):
        return VerifyReport(
            name=name, measured=math.inf, bound=0.5, tolerance=0.1,
            grid=_grid_meta(grids, alpha=alpha),
        )
    tiny = 1e-14 * scale_ref
    ratios = []
    for d_big, d_small in zip(gaps, gaps[1:]):
        if d_big <= tiny:
            ratios.append(0.0)
        else:
            ratios.append(d_small / d_big)
    measured = max(ratios)
    meta = _grid_meta(grids, alpha=alpha, scales=list(scales), gaps=gaps)
    return VerifyReport(
        name=name, measured=measured, bound=0.5, tolerance=0.1, grid=meta
    )
