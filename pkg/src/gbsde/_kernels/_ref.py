"""Pure-numpy reference kernels.

Every function here has a compiled twin in ``_gheat.pyx``. The two backends
must produce value-identical IEEE results, so each operation fixes one
association order per element and both implementations follow it exactly
(the C build disables FMA contraction for the same reason). Do not
"simplify" the arithmetic: ((u[j+1]-u[j]) - (u[j]-u[j-1])) is not the same
float as (u[j+1] - 2*u[j] + u[j-1]).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "second_diff",
    "first_diff",
    "g_apply",
    "step_update",
    "steps_f0",
    "interp_rows",
    "k_increments",
]


def second_diff(u: np.ndarray, dx2: float) -> np.ndarray:
    """Central second difference with zero closure at both boundary nodes.

    u has shape (batch, nx); returns ((u[j+1]-u[j]) - (u[j]-u[j-1]))/dx2.
    """
    out = np.zeros_like(u)
    fwd = u[:, 2:] - u[:, 1:-1]
    bwd = u[:, 1:-1] - u[:, :-2]
    out[:, 1:-1] = (fwd - bwd) / dx2
    return out


def first_diff(u: np.ndarray, dx: float) -> np.ndarray:
    """Central first difference interior, one-sided at the boundary."""
    out = np.empty_like(u)
    twodx = 2.0 * dx
    out[:, 1:-1] = (u[:, 2:] - u[:, :-2]) / twodx
    out[:, 0] = (u[:, 1] - u[:, 0]) / dx
    out[:, -1] = (u[:, -1] - u[:, -2]) / dx
    return out


def g_apply(a: np.ndarray, shi2: float, slo2: float) -> np.ndarray:
    """Elementwise 0.5*(shi2*a_plus - slo2*a_minus)."""
    return 0.5 * (shi2 * np.maximum(a, 0.0) - slo2 * np.maximum(-a, 0.0))


def step_update(
    u: np.ndarray,
    a: np.ndarray,
    fv: np.ndarray | None,
    dt: float,
    shi2: float,
    slo2: float,
) -> np.ndarray:
    """One explicit backward Euler update: u + dt*(G(a) + fv)."""
    ga = g_apply(a, shi2, slo2)
    if fv is None:
        return u + dt * ga
    return u + dt * (ga + fv)


def steps_f0(
    u: np.ndarray,
    nsteps: int,
    dt: float,
    dx2: float,
    shi2: float,
    slo2: float,
) -> np.ndarray:
    """Advance a batch of value rows nsteps backward steps with f = g = 0."""
    cur = np.array(u, dtype=np.float64, copy=True)
    for _ in range(nsteps):
        a = second_diff(cur, dx2)
        cur = step_update(cur, a, None, dt, shi2, slo2)
    return cur


def interp_rows(
    row: np.ndarray,
    x_lo: float,
    dx: float,
    pos: np.ndarray,
) -> np.ndarray:
    """Linear interpolation of one value row at the given positions.

    Positions outside the grid are clamped to the boundary (callers count
    clamps separately).
    """
    nx = row.shape[0]
    s = (pos - x_lo) / dx
    np.clip(s, 0.0, float(nx - 1), out=s)
    j = np.minimum(s.astype(np.int64), nx - 2)
    w = s - j
    return row[j] + w * (row[j + 1] - row[j])


def k_increments(
    a: np.ndarray,
    h: np.ndarray,
    dt: float,
    shi2: float,
    slo2: float,
) -> np.ndarray:
    """Per-step increments 0.5*a*(h*h)*dt - 0.5*a*ghat*dt, ghat by sign of a.

    With h inside [sigma_lo, sigma_hi] every increment is <= 0 exactly
    (rounding monotonicity of IEEE multiplication); this is load-bearing for
    the zero-tolerance decreasing check.
    """
    ha = 0.5 * a
    h2 = h * h
    ghat = np.where(a >= 0.0, shi2, slo2)
    t1 = (ha * h2) * dt
    t2 = (ha * ghat) * dt
    return t1 - t2
