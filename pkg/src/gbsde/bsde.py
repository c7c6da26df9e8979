"""Solution triples (Y, Z, K) along simulated paths, and epoch composition.

For a terminal payoff phi(B_T) and drivers (f, g), the value surface u of
the folded parabolic problem gives the solution of the backward equation

    Y_t = xi + int f ds + int g d<B> - int Z dB - (K_T - K_t)

through Y = u(t, B_t), Z = du/dx(t, B_t), and K accumulated from the gap
between realized and worst-case quadratic variation:

    dK = 0.5*a*(d<B> - gamma_hat(a)*dt),  a = d2u/dx2 + 2*g.

Each increment is exactly <= 0 in floating point whenever the control stays
in the band, so the decreasing property holds bitwise, not just up to
tolerance. The residual of the integrated equation measures scheme error.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels as K
from .core import (
    DomainError,
    Generator,
    Grids,
    NumericalError,
    Payoff,
    VolatilityBand,
    worker_count,
)
from .expectation import PathBundle
from .pde import (
    ValueSurface,
    advance_terminal,
    first_derivative,
    second_derivative,
    solve_gheat,
)

__all__ = [
    "SurfaceTriple",
    "SolutionTriple",
    "solve_markovian",
    "extract_triple",
    "residual_profile",
    "bsde_residual",
    "TwoEpochProblem",
    "TwoEpochSolution",
    "solve_two_epoch",
]


@dataclass(frozen=True, slots=True)
class SurfaceTriple:
    """Value surface with its first and second spatial derivatives."""

    u: ValueSurface
    ux: ValueSurface
    uxx: ValueSurface


def solve_markovian(
    payoff: Payoff,
    gen: Generator,
    band: VolatilityBand,
    grids: Grids,
) -> SurfaceTriple:
    """Solve the folded problem and differentiate the surface."""
    u = solve_gheat(payoff, gen, band, grids)
    return SurfaceTriple(u=u, ux=first_derivative(u), uxx=second_derivative(u))


@dataclass(frozen=True, slots=True)
class SolutionTriple:
    """Per-path processes Y, Z, K on the time grid, shape (n_paths, nt+1).

    K starts at zero and is nonincreasing path by path; increments are
    constructed to be <= 0 exactly, so increment_tol is 0. clamp_count is
    the number of path nodes outside the spatial grid (interpolation clamps
    them to the boundary).
    """

    y: np.ndarray = field(compare=False)
    z: np.ndarray = field(compare=False)
    k: np.ndarray = field(compare=False)
    bundle: PathBundle = field(compare=False)
    clamp_count: int = 0
    increment_tol: float = 0.0

    def __post_init__(self) -> None:
        for arr in (self.y, self.z, self.k):
            arr.flags.writeable = False


def extract_triple(
    surfaces: SurfaceTriple,
    bundle: PathBundle,
    gen: Generator,
    band: VolatilityBand,
) -> SolutionTriple:
    """Read the triple along simulated paths.

    Y and Z interpolate the value and derivative surfaces at (t_k, B_k); K
    cumulates 0.5*a*((h*h) - gamma_hat(a))*dt with a the interpolated second
    derivative plus 2*g along the path, evaluated at the left endpoint of
    each step. Deterministic.
    """
    grids = surfaces.u.grids
    if grids != bundle.grids:
        raise DomainError("surface and bundle grids do not match")
    n, nt = bundle.n_paths, grids.nt
    dt, dx, x_lo = grids.dt, grids.dx, grids.x_lo
    uv, uxv, uxxv = surfaces.u.values, surfaces.ux.values, surfaces.uxx.values
    tnodes = grids.t

    y = np.empty((n, nt + 1), dtype=np.float64)
    z = np.empty((n, nt + 1), dtype=np.float64)
    amat = np.empty((n, nt), dtype=np.float64)
    for k in range(nt + 1):
        pos = np.ascontiguousarray(bundle.b[:, k])
        y[:, k] = K.interp_rows(uv[k], x_lo, dx, pos)
        z[:, k] = K.interp_rows(uxv[k], x_lo, dx, pos)
        if k < nt:
            a = K.interp_rows(uxxv[k], x_lo, dx, pos)
            if gen.has_g:
                a = a + 2.0 * np.asarray(
                    gen.g(float(tnodes[k]), y[:, k], z[:, k]), dtype=np.float64
                )
            amat[:, k] = a

    h = bundle.h_matrix()
    inc = K.k_increments(np.ascontiguousarray(amat), h, dt, band.hi2, band.lo2)
    kmat = np.zeros((n, nt + 1), dtype=np.float64)
    np.cumsum(inc, axis=1, out=kmat[:, 1:])
    if not (np.isfinite(y).all() and np.isfinite(z).all() and np.isfinite(kmat).all()):
        raise NumericalError("non-finite value in extracted triple")
    clamp = int(((bundle.b < x_lo) | (bundle.b > grids.x_hi)).sum())
    return SolutionTriple(
        y=y, z=z, k=kmat, bundle=bundle, clamp_count=clamp, increment_tol=0.0
    )


def _terminal_values(xi, bundle: PathBundle) -> np.ndarray:
    bt = bundle.b[:, -1]
    if isinstance(xi, Payoff):
        vals = xi(bt)
    elif callable(xi):
        vals = xi(bt)
    else:
        vals = xi
    vals = np.asarray(vals, dtype=np.float64)
    if vals.ndim == 0:
        vals = np.broadcast_to(vals, (bundle.n_paths,))
    if vals.shape != (bundle.n_paths,):
        raise DomainError("terminal values must have one entry per path")
    return vals


def _suffix_sums(mat: np.ndarray) -> np.ndarray:
    """S[:, k] = sum over j >= k of mat[:, j], padded with S[:, nt] = 0."""
    n = mat.shape[0]
    s = np.flip(np.cumsum(np.flip(mat, axis=1), axis=1), axis=1)
    return np.concatenate([s, np.zeros((n, 1))], axis=1)


def residual_profile(
    triple: SolutionTriple,
    gen: Generator,
    xi,
) -> np.ndarray:
    """Signed residual of the integrated backward equation at every node.

    res[:, k] = Y_k - (xi + sum_{j>=k} f_j dt + sum_{j>=k} g_j d<B>_j
                - sum_{j>=k} Z_j dB_j - (K_T - K_k)),
    with drivers and Z at left endpoints. Small residuals certify that the
    extracted processes solve the discrete equation.
    """
    bundle = triple.bundle
    grids = bundle.grids
    n, nt = bundle.n_paths, grids.nt
    dt = grids.dt
    tnodes = grids.t
    y, z, kk = triple.y, triple.z, triple.k

    fmat = np.empty((n, nt), dtype=np.float64)
    gmat = np.empty((n, nt), dtype=np.float64) if gen.has_g else None
    for k in range(nt):
        t = float(tnodes[k])
        fmat[:, k] = np.broadcast_to(
            np.asarray(gen.f(t, y[:, k], z[:, k]), dtype=np.float64), (n,)
        )
        if gmat is not None:
            gmat[:, k] = np.broadcast_to(
                np.asarray(gen.g(t, y[:, k], z[:, k]), dtype=np.float64), (n,)
            )

    db = np.diff(bundle.b, axis=1)
    hm = bundle.h_matrix()
    dqv = (hm * hm) * dt

    target = _suffix_sums(fmat * dt)
    if gmat is not None:
        target += _suffix_sums(gmat * dqv)
    target -= _suffix_sums(z[:, :nt] * db)
    target += kk - kk[:, -1:]
    target += _terminal_values(xi, bundle)[:, None]
    return y - target


def bsde_residual(triple: SolutionTriple, gen: Generator, xi) -> np.ndarray:
    """Per-path maximum absolute residual over all time nodes."""
    return np.max(np.abs(residual_profile(triple, gen, xi)), axis=1)


@dataclass(frozen=True, slots=True)
class TwoEpochProblem:
    """Terminal payoff psi(B_t1, B_T - B_t1): position at the intermediate
    time and the increment over the second epoch.

    psi is vectorized over broadcastable arrays of its two arguments; the
    declared Lipschitz constant is joint in both.
    """

    t1: float
    psi: Callable = field(compare=False)
    gen: Generator = field(compare=False)
    band: VolatilityBand = field(compare=True)
    grids: Grids = field(compare=True)
    lipschitz_const: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 < self.t1 < self.grids.T):
            raise DomainError("intermediate time must satisfy 0 < t1 < T")


def _epoch_grids(grids: Grids, band: VolatilityBand, span: float) -> Grids:
    """Time grid for one epoch: same spatial nodes, minimal stable steps."""
    dx = grids.dx
    nt = max(1, math.ceil(2.0 * band.hi2 * span / (dx * dx) - 1e-9))
    return Grids(T=span, nt=nt, x_lo=grids.x_lo, x_hi=grids.x_hi, nx=grids.nx)


@dataclass(frozen=True, slots=True)
class TwoEpochSolution:
    """Composed solution: epoch-one family reduced to a tabulated payoff.

    y_t1[i] is the epoch-one value at (t1, x_i) for first-epoch position
    x_i (the family member with terminal row psi(x_i, .), read on the
    diagonal); epoch0 is the surface on [0, t1] with that table as terminal
    data, and y0 its origin value.
    """

    problem: TwoEpochProblem
    epoch0: ValueSurface
    y_t1: np.ndarray = field(compare=False)
    y0: float = 0.0
    epoch1_grids: Grids | None = None

    def __post_init__(self) -> None:
        self.y_t1.flags.writeable = False

    def family_member(self, i: int) -> ValueSurface:
        """Full epoch-one surface for first-epoch node i (solved on demand)."""
        p = self.problem
        g = p.grids
        if not (0 <= i < g.nx):
            raise DomainError(f"family index {i} outside [0, {g.nx - 1}]")
        xi = float(g.x[i])
        payoff = Payoff(
            "two-epoch-member",
            lambda yv: p.psi(xi, yv),
            p.lipschitz_const,
            None,
            (xi,),
        )
        return solve_gheat(
            payoff, p.gen, p.band, self.epoch1_grids, t_offset=p.t1
        )


def solve_two_epoch(problem: TwoEpochProblem) -> TwoEpochSolution:
    """Dynamic-programming composition over the intermediate time.

    Epoch one solves the family of problems with terminal data
    psi(x_i, x-grid) as a row batch on [t1, T] (drivers see absolute time);
    the diagonal of the final level tabulates the intermediate value exactly
    at the spatial nodes, which epoch zero consumes as terminal data on
    [0, t1]. Deterministic; family surfaces are recomputed on demand.
    """
    p = problem
    g = p.grids
    band = p.band
    x = g.x
    e1 = _epoch_grids(g, band, g.T - p.t1)
    e0 = _epoch_grids(g, band, p.t1)

    terminal = np.broadcast_to(
        np.asarray(p.psi(x[:, None], x[None, :]), dtype=np.float64), (g.nx, g.nx)
    )
    terminal = np.ascontiguousarray(terminal)
    if not np.isfinite(terminal).all():
        raise NumericalError("non-finite two-epoch terminal data")

    workers = worker_count(limit=g.nx)
    if workers <= 1:
        final = advance_terminal(terminal, p.gen, band, e1, t_offset=p.t1)
    else:
        final = np.empty_like(terminal)
        bounds = np.linspace(0, g.nx, workers + 1).astype(int)
        def run(lo: int, hi: int) -> None:
            if hi > lo:
                final[lo:hi] = advance_terminal(
                    terminal[lo:hi], p.gen, band, e1, t_offset=p.t1
                )
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [
                pool.submit(run, int(lo), int(hi))
                for lo, hi in zip(bounds, bounds[1:])
            ]
            for f in futs:
                f.result()
    y_t1 = np.ascontiguousarray(np.diagonal(final))

    tab = Payoff.tabulated(x, y_t1, lipschitz=p.lipschitz_const)
    epoch0 = solve_gheat(tab, p.gen, band, e0)
    y0 = epoch0.value_at(0.0, 0.0)
    return TwoEpochSolution(
        problem=p, epoch0=epoch0, y_t1=y_t1, y0=y0, epoch1_grids=e1
    )
