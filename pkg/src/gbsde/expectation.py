"""Sublinear expectation of increment payoffs: lattice and dual Monte Carlo.

The lattice side evaluates E[phi(D1, ..., Dm)] for payoffs of m path
increments by backward recursion: freeze the first m-1 increments on a
tensor grid, integrate the last one with the sublinear heat solver, read the
value at the origin, and repeat. The Monte Carlo side simulates paths under
admissible volatility controls h in [sigma_lo, sigma_hi]; by duality every
control's mean is a lower bound of the lattice value, with the curvature
adapted bang-bang control attaining it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from . import rng
from .core import (
    BudgetError,
    DomainError,
    Generator,
    Grids,
    NumericalError,
    Payoff,
    VolatilityBand,
    worker_count,
)
from .pde import ValueSurface, advance_terminal

__all__ = [
    "VolControl",
    "AdaptiveCurvatureControl",
    "IncrementPayoff",
    "PathBundle",
    "TabulatedConditional",
    "simulate_paths",
    "g_expectation",
    "conditional_g_expectation",
    "mc_bound",
    "evaluate_controls",
    "random_controls",
    "sup_over_controls",
]

MAX_LATTICE_INCREMENTS = 3
_CHUNK_CELLS = 1 << 21


@dataclass(frozen=True, slots=True)
class VolControl:
    """Piecewise-constant volatility control, one value per time step."""

    values: np.ndarray = field(compare=False)

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size < 1:
            raise DomainError("control values must be a nonempty 1-d array")
        if not np.isfinite(v).all():
            raise DomainError("control values must be finite")
        object.__setattr__(self, "values", v)
        v.flags.writeable = False

    def validate(self, band: VolatilityBand) -> None:
        if self.values.min() < band.sigma_lo or self.values.max() > band.sigma_hi:
            raise DomainError("control leaves the volatility band")

    @classmethod
    def constant(cls, level: float, nt: int) -> "VolControl":
        return cls(np.full(nt, float(level)))

    @classmethod
    def from_array(cls, values) -> "VolControl":
        return cls(np.asarray(values, dtype=np.float64))


@dataclass(frozen=True, slots=True)
class AdaptiveCurvatureControl:
    """Bang-bang control on the sign of the interpolated second derivative.

    At each step the control reads the curvature surface at (t_k, B_k) and
    picks sigma_hi where it is >= 0, sigma_lo otherwise; both choices are
    band endpoints, never recomputed from squared values.
    """

    curvature: ValueSurface
    band: VolatilityBand

    def h_step(self, k: int, pos: np.ndarray) -> np.ndarray:
        g = self.curvature.grids
        a = K.interp_rows(
            np.ascontiguousarray(self.curvature.values[k]),
            g.x_lo,
            g.dx,
            np.ascontiguousarray(pos, dtype=np.float64),
        )
        return np.where(a >= 0.0, self.band.sigma_hi, self.band.sigma_lo)


@dataclass(frozen=True, slots=True)
class IncrementPayoff:
    """Payoff phi(D1, ..., Dm) of increments over times 0 = t0 < ... < tm.

    fn is vectorized over broadcastable increment arrays. m is capped at
    MAX_LATTICE_INCREMENTS for lattice evaluation (Monte Carlo has no cap).
    """

    times: tuple
    fn: Callable = field(compare=False)
    lipschitz_const: float | None = None
    bound: float | None = None

    def __post_init__(self) -> None:
        ts = tuple(float(t) for t in self.times)
        if len(ts) < 2:
            raise DomainError("increment payoff needs at least times (0, T)")
        if ts[0] != 0.0:
            raise DomainError("increment times must start at 0")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise DomainError("increment times must be strictly increasing")
        object.__setattr__(self, "times", ts)

    @property
    def m(self) -> int:
        return len(self.times) - 1

    def __call__(self, *deltas):
        return self.fn(*deltas)

    @classmethod
    def terminal(cls, payoff: Payoff, T: float) -> "IncrementPayoff":
        """Single increment payoff phi(B_T) (paths start at 0)."""
        return cls(
            (0.0, T), payoff.fn, payoff.lipschitz_const, payoff.bound
        )

    @classmethod
    def of(
        cls,
        times: Sequence[float],
        fn: Callable,
        lipschitz: float | None = None,
        bound: float | None = None,
    ) -> "IncrementPayoff":
        return cls(tuple(times), fn, lipschitz, bound)


@dataclass(frozen=True, slots=True)
class PathBundle:
    """Simulated paths: positions b, quadratic variation qv, controls h.

    b and qv have shape (n_paths, nt+1) with b[:, 0] = qv[:, 0] = 0; h is
    (nt,) for a shared control or (n_paths, nt) for pathwise controls and
    holds the exact per-step values so increments of qv can be recomputed as
    (h*h)*dt without differencing.
    """

    n_paths: int
    grids: Grids
    b: np.ndarray = field(compare=False)
    qv: np.ndarray = field(compare=False)
    h: np.ndarray = field(compare=False)
    control: object = field(compare=False)
    control_desc: str = ""
    seed: int = 0
    path_offset: int = 0

    def __post_init__(self) -> None:
        n, nt = self.n_paths, self.grids.nt
        if self.b.shape != (n, nt + 1) or self.qv.shape != (n, nt + 1):
            raise DomainError("bundle arrays must have shape (n_paths, nt+1)")
        if self.h.shape not in ((nt,), (n, nt)):
            raise DomainError("bundle h must have shape (nt,) or (n_paths, nt)")
        for arr in (self.b, self.qv, self.h):
            arr.flags.writeable = False

    def h_matrix(self, rows: slice = slice(None)) -> np.ndarray:
        """Contiguous (rows, nt) matrix of per-step controls."""
        if self.h.ndim == 2:
            return np.ascontiguousarray(self.h[rows])
        n = self.b[rows].shape[0]
        return np.ascontiguousarray(np.broadcast_to(self.h, (n, self.grids.nt)))


def simulate_paths(
    control,
    n_paths: int,
    seed: int,
    grids: Grids,
    band: VolatilityBand,
    path_offset: int = 0,
) -> PathBundle:
    """Simulate paths dB_k = h_k * sqrt(dt) * N_k under the given control.

    Noise is drawn from the counter generator keyed by (seed, path index,
    step), so the same (seed, path_offset) always yields the same paths and
    different controls reuse common random numbers. Deterministic.
    """
    if n_paths < 1:
        raise DomainError("n_paths must be >= 1")
    if path_offset < 0:
        raise DomainError("path_offset must be >= 0")
    nt = grids.nt
    dt = grids.dt
    sqrt_dt = math.sqrt(dt)
    rows = np.arange(path_offset, path_offset + n_paths, dtype=np.int64)
    cols = np.arange(nt, dtype=np.int64)
    w = rng.normals(seed, rng.STREAM_PATHS, rows[:, None], cols[None, :]) * sqrt_dt

    if isinstance(control, VolControl):
        control.validate(band)
        if control.values.shape != (nt,):
            raise DomainError(
                f"control has {control.values.shape[0]} steps, grid has {nt}"
            )
        h = control.values
        b = np.empty((n_paths, nt + 1), dtype=np.float64)
        b[:, 0] = 0.0
        np.cumsum(h[None, :] * w, axis=1, out=b[:, 1:])
        h_store = h.copy()
        desc = "piecewise-constant"
    elif isinstance(control, AdaptiveCurvatureControl):
        cg = control.curvature.grids
        if (cg.T, cg.nt) != (grids.T, grids.nt):
            raise DomainError("adaptive control surface does not match the time grid")
        h_store = np.empty((n_paths, nt), dtype=np.float64)
        b = np.empty((n_paths, nt + 1), dtype=np.float64)
        b[:, 0] = 0.0
        for k in range(nt):
            hk = control.h_step(k, b[:, k])
            h_store[:, k] = hk
            b[:, k + 1] = b[:, k] + hk * w[:, k]
        desc = "adaptive-curvature"
    else:
        raise DomainError(f"unknown control type {type(control).__name__}")

    qv = np.empty((n_paths, nt + 1), dtype=np.float64)
    qv[:, 0] = 0.0
    dqv = (h_store * h_store) * dt
    if dqv.ndim == 1:
        qv[:, 1:] = np.cumsum(dqv)[None, :]
    else:
        np.cumsum(dqv, axis=1, out=qv[:, 1:])
    if not (np.isfinite(b).all() and np.isfinite(qv).all()):
        raise NumericalError("non-finite value during path simulation")
    return PathBundle(
        n_paths=n_paths,
        grids=grids,
        b=b,
        qv=qv,
        h=h_store,
        control=control,
        control_desc=desc,
        seed=seed,
        path_offset=path_offset,
    )


def _implied_width_mult(band: VolatilityBand, grids: Grids) -> float:
    return grids.x_hi / (band.sigma_hi * math.sqrt(grids.T))


def _stage_grids(payoff: IncrementPayoff, band: VolatilityBand, grids: Grids):
    wm = _implied_width_mult(band, grids)
    out = []
    for i in range(1, payoff.m + 1):
        delta = payoff.times[i] - payoff.times[i - 1]
        out.append(Grids.make(band, delta, grids.nx, width_mult=wm))
    return out


def _center_values(rows: np.ndarray, g: Grids) -> np.ndarray:
    """Values at x = 0 for a batch of final levels (exact node when hit)."""
    s = (0.0 - g.x_lo) / g.dx
    j = int(round(s))
    if 0 <= j <= g.nx - 1 and abs(s - j) <= 1e-9 * max(1.0, abs(s)):
        return rows[:, j].copy()
    s = min(max(s, 0.0), float(g.nx - 1))
    j = min(int(s), g.nx - 2)
    w = s - j
    return rows[:, j] + w * (rows[:, j + 1] - rows[:, j])


def _integrate_last_axis(
    table: np.ndarray,
    fn,
    frozen_axes: Sequence[np.ndarray],
    stage: Grids,
    band: VolatilityBand,
) -> np.ndarray:
    """One reduction: integrate the last increment of a tabulated payoff.

    Either table is a tensor of already reduced values whose last axis lives
    on the stage grid, or fn samples the raw payoff with the frozen leading
    coordinates; both paths advance row batches through the heat solver and
    read the center.
    """
    nx = stage.nx
    n_front = int(np.prod([ax.size for ax in frozen_axes], dtype=np.int64)) if frozen_axes else 1
    out = np.empty(n_front, dtype=np.float64)
    rows_per_chunk = max(1, _CHUNK_CELLS // nx)
    front_shape = tuple(ax.size for ax in frozen_axes)
    zero = Generator.zero()
    for lo in range(0, n_front, rows_per_chunk):
        hi = min(lo + rows_per_chunk, n_front)
        if table is not None:
            terminal = table.reshape(n_front, nx)[lo:hi]
        else:
            flat = np.arange(lo, hi, dtype=np.int64)
            idx = np.unravel_index(flat, front_shape) if front_shape else ()
            args = [frozen_axes[d][idx[d]][:, None] for d in range(len(frozen_axes))]
            args.append(stage.x[None, :])
            terminal = np.broadcast_to(
                np.asarray(fn(*args), dtype=np.float64), (hi - lo, nx)
            )
        final = advance_terminal(terminal, zero, band, stage)
        out[lo:hi] = _center_values(final, stage)
    return out.reshape(front_shape) if front_shape else out.reshape(())


def _reduce_to_stage(
    payoff: IncrementPayoff, band: VolatilityBand, grids: Grids, stop_i: int
):
    """Run the backward recursion until only the first stop_i increments
    remain tabulated; returns (axes, values)."""
    m = payoff.m
    if m > MAX_LATTICE_INCREMENTS:
        raise BudgetError(
            f"lattice evaluation supports at most {MAX_LATTICE_INCREMENTS} "
            f"increments, got {m}"
        )
    if not (0 <= stop_i <= m):
        raise DomainError("conditioning stage must be between 0 and m")
    stages = _stage_grids(payoff, band, grids)
    axes = [g.x for g in stages]
    if stop_i == m:
        if m == 0:
            raise DomainError("payoff has no increments")
        shape = tuple(g.nx for g in stages)
        mesh = np.meshgrid(*axes, indexing="ij")
        values = np.broadcast_to(
            np.asarray(payoff.fn(*mesh), dtype=np.float64), shape
        ).copy()
        if not np.isfinite(values).all():
            raise NumericalError("non-finite payoff sample on the lattice")
        return axes[:stop_i], values
    table = None
    for i in range(m, stop_i, -1):
        values = _integrate_last_axis(table, payoff.fn, axes[: i - 1], stages[i - 1], band)
        table = values
    return axes[:stop_i], table


def g_expectation(payoff: IncrementPayoff, band: VolatilityBand, grids: Grids) -> float:
    """Sublinear expectation of an increment payoff by lattice recursion.

    Increment i is integrated on its own stage grid (same node count and
    relative width as the reference grid, horizon t_i - t_{i-1}); values are
    read at the origin, an exact center node for odd nx. Deterministic.
    """
    _, table = _reduce_to_stage(payoff, band, grids, 0)
    return float(table)


@dataclass(frozen=True, slots=True)
class TabulatedConditional:
    """Conditional sublinear expectation tabulated on increment grids.

    values[i1, ..., ik] is the conditional expectation given the first k
    increments equal the node values axes[0][i1], ..., axes[k-1][ik];
    __call__ interpolates multilinearly with edge clamping.
    """

    times: tuple
    axes: tuple
    values: np.ndarray = field(compare=False)

    def __post_init__(self) -> None:
        self.values.flags.writeable = False

    def __call__(self, *deltas):
        if len(deltas) != len(self.axes):
            raise DomainError(
                f"expected {len(self.axes)} increment arguments, got {len(deltas)}"
            )
        table = self.values
        for ax, v in zip(self.axes, deltas):
            table = _interp_leading_axis(table, ax, float(v))
        return float(table)


def _interp_leading_axis(table: np.ndarray, ax: np.ndarray, v: float) -> np.ndarray:
    n = ax.size
    s = (v - ax[0]) / (ax[1] - ax[0])
    s = min(max(s, 0.0), float(n - 1))
    j = min(int(s), n - 2)
    w = s - j
    return table[j] + w * (table[j + 1] - table[j])


def conditional_g_expectation(
    payoff: IncrementPayoff, i: int, band: VolatilityBand, grids: Grids
) -> TabulatedConditional:
    """Conditional expectation given the first i increments, as a table.

    i = 0 gives a scalar table equal to g_expectation; i = m returns the
    payoff itself sampled on the tensor grid.
    """
    axes, values = _reduce_to_stage(payoff, band, grids, i)
    return TabulatedConditional(
        times=payoff.times[: i + 1], axes=tuple(axes), values=np.asarray(values)
    )


def _increment_indices(payoff: IncrementPayoff, grids: Grids) -> list[int]:
    ks = []
    dt = grids.dt
    for t in payoff.times:
        kf = t / dt
        k = int(round(kf))
        if not (0 <= k <= grids.nt) or abs(kf - k) > 1e-6:
            raise DomainError(f"increment time {t} is not a path grid node")
        ks.append(k)
    return ks


def mc_bound(payoff: IncrementPayoff, bundle: PathBundle, control=None):
    """Monte Carlo lower-bound estimate (mean, stderr) under one control.

    The control argument, when given, must be the one the bundle was
    simulated under; increment times must land on path grid nodes.
    """
    if control is not None and control is not bundle.control:
        if isinstance(control, VolControl) and isinstance(bundle.control, VolControl):
            if not np.array_equal(control.values, bundle.control.values):
                raise DomainError("control does not match the bundle's control")
        else:
            raise DomainError("control does not match the bundle's control")
    ks = _increment_indices(payoff, bundle.grids)
    deltas = [bundle.b[:, k1] - bundle.b[:, k0] for k0, k1 in zip(ks, ks[1:])]
    vals = np.asarray(payoff.fn(*deltas), dtype=np.float64)
    if vals.ndim == 0:
        vals = np.broadcast_to(vals, (bundle.n_paths,))
    if not np.isfinite(vals).all():
        raise NumericalError("non-finite payoff sample on simulated paths")
    mean = float(vals.mean())
    if bundle.n_paths > 1:
        stderr = float(vals.std(ddof=1) / math.sqrt(bundle.n_paths))
    else:
        stderr = 0.0
    return mean, stderr


def _control_stats(
    payoff: IncrementPayoff,
    control,
    band: VolatilityBand,
    grids: Grids,
    n_paths: int,
    seed: int,
    chunk: int,
):
    ks = None
    count = 0
    total = 0.0
    total_sq = 0.0
    for lo in range(0, n_paths, chunk):
        n = min(chunk, n_paths - lo)
        bundle = simulate_paths(control, n, seed, grids, band, path_offset=lo)
        if ks is None:
            ks = _increment_indices(payoff, grids)
        deltas = [bundle.b[:, k1] - bundle.b[:, k0] for k0, k1 in zip(ks, ks[1:])]
        vals = np.asarray(payoff.fn(*deltas), dtype=np.float64)
        if vals.ndim == 0:
            vals = np.broadcast_to(vals, (n,))
        if not np.isfinite(vals).all():
            raise NumericalError("non-finite payoff sample on simulated paths")
        count += n
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
    mean = total / count
    if count > 1:
        var = max(0.0, (total_sq - count * mean * mean) / (count - 1))
        stderr = math.sqrt(var / count)
    else:
        stderr = 0.0
    return mean, stderr


def evaluate_controls(
    payoff: IncrementPayoff,
    controls: Sequence,
    band: VolatilityBand,
    grids: Grids,
    n_paths: int,
    seed: int,
    chunk: int = 2048,
):
    """Mean and standard error per control, common random numbers across
    controls (chunked; chunking does not change the estimates)."""
    if n_paths < 1:
        raise DomainError("n_paths must be >= 1")
    workers = min(worker_count(), max(1, len(controls)))
    if workers <= 1 or len(controls) <= 1:
        return [
            _control_stats(payoff, c, band, grids, n_paths, seed, chunk)
            for c in controls
        ]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futs = [
            pool.submit(_control_stats, payoff, c, band, grids, n_paths, seed, chunk)
            for c in controls
        ]
        return [f.result() for f in futs]


def random_controls(
    band: VolatilityBand, nt: int, count: int, seed: int
) -> list[VolControl]:
    """Independent piecewise-constant controls uniform over the band."""
    if count < 1:
        raise DomainError("count must be >= 1")
    rows = np.arange(count, dtype=np.int64)
    cols = np.arange(nt, dtype=np.int64)
    u = rng.uniforms(seed, rng.STREAM_CONTROLS, rows[:, None], cols[None, :])
    width = band.sigma_hi - band.sigma_lo
    vals = np.clip(band.sigma_lo + width * u, band.sigma_lo, band.sigma_hi)
    return [VolControl(vals[i]) for i in range(count)]


def sup_over_controls(
    payoff: IncrementPayoff,
    band: VolatilityBand,
    grids: Grids,
    *,
    controls: Sequence | None = None,
    budget: int | None = None,
    n_paths: int = 1024,
    seed: int = 0,
    chunk: int = 2048,
):
    """Best (control, mean) over explicit candidates or a sampled family.

    With budget given and no explicit list, candidates are random_controls
    drawn from the control stream of the same seed. Ties break toward the
    first candidate; deterministic for fixed inputs.
    """
    if controls is None:
        if budget is None:
            raise DomainError("need explicit controls or a sampler budget")
        controls = random_controls(band, grids.nt, budget, seed)
    controls = list(controls)
    if not controls:
        raise DomainError("no candidate controls")
    results = evaluate_controls(payoff, controls, band, grids, n_paths, seed, chunk)
    best = max(range(len(controls)), key=lambda i: results[i][0])
    return controls[best], results[best][0]
