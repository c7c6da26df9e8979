"""Monotone explicit finite-difference solver for the sublinear heat PDE.

Solves the terminal-value problem

    du/dt + G(d2u/dx2 + 2*g(t, u, du/dx)) + f(t, u, du/dx) = 0,  u(T, .) = phi

backward in time with central differences in space, the nonlinearity G
applied pointwise to the discrete second difference, and a zero second
difference (linear extrapolation) closing the boundary. The scheme is
monotone under the stability margin sigma_hi^2*dt/dx^2 <= 1/2 and is exact
on payoffs with constant curvature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .core import (
    CFLError,
    DomainError,
    Generator,
    Grids,
    NumericalError,
    Payoff,
    VolatilityBand,
)

__all__ = [
    "ValueSurface",
    "solve_gheat",
    "advance_terminal",
    "first_derivative",
    "second_derivative",
    "write_surface_csv",
]


@dataclass(frozen=True, slots=True)
class ValueSurface:
    """Values on the full time-space grid, row k = time node t_k."""

    grids: Grids
    values: np.ndarray = field(compare=False)

    def __post_init__(self) -> None:
        expected = (self.grids.nt + 1, self.grids.nx)
        if self.values.shape != expected:
            raise DomainError(
                f"surface shape {self.values.shape} does not match grid {expected}"
            )
        if not np.isfinite(self.values).all():
            k, j = np.argwhere(~np.isfinite(self.values))[0]
            raise NumericalError(f"non-finite surface value at node (k={k}, j={j})")
        self.values.flags.writeable = False

    def row(self, k: int) -> np.ndarray:
        return self.values[k]

    def value_at(self, t: float, x: float) -> float:
        """Value at an exact time node, linearly interpolated in x.

        Positions that land on a space node (within 1e-9 of one) read the
        node exactly; t must sit on a time node.
        """
        g = self.grids
        kf = t / g.dt
        k = int(round(kf))
        if not (0 <= k <= g.nt) or abs(kf - k) > 1e-6:
            raise DomainError(f"time {t} is not a grid node")
        s = (x - g.x_lo) / g.dx
        j = int(round(s))
        if 0 <= j <= g.nx - 1 and abs(s - j) <= 1e-9 * max(1.0, abs(s)):
            return float(self.values[k, j])
        s = min(max(s, 0.0), float(g.nx - 1))
        j = min(int(s), g.nx - 2)
        w = s - j
        row = self.values[k]
        return float(row[j] + w * (row[j + 1] - row[j]))


def _as_batch(vals, shape: tuple[int, int]) -> np.ndarray:
    """Materialize a writable C-contiguous float64 batch of the given shape."""
    a = np.asarray(vals, dtype=np.float64)
    if a.shape != shape:
        a = np.broadcast_to(a, shape)
    return np.require(a, dtype=np.float64, requirements=["C", "W", "O"])


def _source_values(source, t: float, x: np.ndarray, k: int):
    if source is None:
        return None
    if callable(source):
        return source(t, x)
    return source[k]


def _step_batch(
    cur: np.ndarray,
    gen: Generator,
    band: VolatilityBand,
    t_next: float,
    dt: float,
    dx: float,
    x: np.ndarray,
    source,
    k_next: int,
) -> np.ndarray:
    """One backward step of the general scheme on a (batch, nx) level."""
    dx2 = dx * dx
    d2 = K.second_diff(cur, dx2)
    shape = cur.shape
    du = K.first_diff(cur, dx)
    fv = _as_batch(gen.f(t_next, cur, du), shape)
    if gen.has_g:
        gv = gen.g(t_next, cur, du)
        a = _as_batch(d2 + 2.0 * np.asarray(gv, dtype=np.float64), shape)
    else:
        a = d2
    src = _source_values(source, t_next, x, k_next)
    if src is not None:
        fv = _as_batch(fv + np.asarray(src, dtype=np.float64), shape)
    return K.step_update(cur, a, fv, dt, band.hi2, band.lo2)


def advance_terminal(
    terminal: np.ndarray,
    gen: Generator,
    band: VolatilityBand,
    grids: Grids,
    t_offset: float = 0.0,
    source=None,
) -> np.ndarray:
    """Advance a batch of terminal rows from t=T to t=0, returning the final
    level only. Driver arguments are evaluated at t_offset + local time, so
    epoch solves on [t1, T] see absolute times.
    """
    grids.require_cfl(band)
    cur = _as_batch(terminal, (np.atleast_2d(terminal).shape[0], grids.nx))
    if not np.isfinite(cur).all():
        raise NumericalError("non-finite terminal data")
    dt, dx = grids.dt, grids.dx
    if source is None and _is_zero_generator(gen):
        out = K.steps_f0(cur, grids.nt, dt, dx * dx, band.hi2, band.lo2)
        if not np.isfinite(out).all():
            raise NumericalError("non-finite value during advance")
        return out
    x = grids.x
    tnodes = grids.t
    for k in range(grids.nt - 1, -1, -1):
        cur = _step_batch(
            cur, gen, band, t_offset + tnodes[k + 1], dt, dx, x, source, k + 1
        )
        if not np.isfinite(cur).all():
            raise NumericalError(f"non-finite value at time step k={k}")
    return cur


def _is_zero_generator(gen: Generator) -> bool:
    """True when f and g vanish identically (probed once per generator)."""
    if gen.has_g:
        return False
    probe = gen.f(0.0, np.zeros(3), np.array([-1.0, 0.0, 2.0]))
    if np.any(np.asarray(probe) != 0.0):
        return False
    probe = gen.f(0.5, np.array([1.0, -2.0, 0.3]), np.zeros(3))
    return not np.any(np.asarray(probe) != 0.0)


def solve_gheat(
    payoff: Payoff,
    gen: Generator,
    band: VolatilityBand,
    grids: Grids,
    *,
    source=None,
    t_offset: float = 0.0,
) -> ValueSurface:
    """Solve the terminal-value problem, storing every time level.

    source, when given, is an extra driver term added like f: either a
    callable (t, x-array) -> array or an array indexed (time node, space
    node). Deterministic: identical inputs give bit-identical output.
    """
    grids.require_cfl(band)
    x = grids.x
    terminal = _as_batch(payoff(x), (1, grids.nx))[0]
    if not np.isfinite(terminal).all():
        j = int(np.argwhere(~np.isfinite(terminal))[0][0])
        raise NumericalError(f"non-finite terminal value at node j={j}")
    values = np.empty((grids.nt + 1, grids.nx), dtype=np.float64)
    values[grids.nt] = terminal
    dt, dx = grids.dt, grids.dx
    tnodes = grids.t
    fused = source is None and _is_zero_generator(gen)
    for k in range(grids.nt - 1, -1, -1):
        cur = values[k + 1 : k + 2]
        if fused:
            nxt = K.steps_f0(cur, 1, dt, dx * dx, band.hi2, band.lo2)
        else:
            nxt = _step_batch(
                cur, gen, band, t_offset + tnodes[k + 1], dt, dx, x, source, k + 1
            )
        if not np.isfinite(nxt).all():
            j = int(np.argwhere(~np.isfinite(nxt[0]))[0][0])
            raise NumericalError(f"non-finite value at node (k={k}, j={j})")
        values[k] = nxt[0]
    return ValueSurface(grids=grids, values=values)


def first_derivative(surface: ValueSurface) -> ValueSurface:
    """Spatial first derivative: central interior, one-sided boundary."""
    vals = K.first_diff(_as_batch(surface.values, surface.values.shape), surface.grids.dx)
    return ValueSurface(grids=surface.grids, values=vals)


def second_derivative(surface: ValueSurface) -> ValueSurface:
    """Spatial second derivative: central interior, zero at the boundary."""
    dx = surface.grids.dx
    vals = K.second_diff(_as_batch(surface.values, surface.values.shape), dx * dx)
    return ValueSurface(grids=surface.grids, values=vals)


def write_surface_csv(surface: ValueSurface, path, wide: bool = True) -> None:
    """Export a surface; wide: header "t", then x values, one row per time
    node. Long: header "t,x,u", one row per node pair.
    """
    g = surface.grids
    t, x = g.t, g.x
    lines = []
    if wide:
        lines.append("t," + ",".join(repr(float(v)) for v in x))
        for k in range(g.nt + 1):
            row = surface.values[k]
            lines.append(
                repr(float(t[k])) + "," + ",".join(repr(float(v)) for v in row)
            )
    else:
        lines.append("t,x,u")
        for k in range(g.nt + 1):
            tk = repr(float(t[k]))
            row = surface.values[k]
            for j in range(g.nx):
                lines.append(f"{tk},{float(x[j])!r},{float(row[j])!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
