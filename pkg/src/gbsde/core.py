"""Problem parameters shared by all modules.

Defines the volatility uncertainty band, uniform space-time grids with the
explicit-scheme stability margin, payoff and generator abstractions, the
sublinear heat coefficient G with its maximizer, and the explicit moment
constant computed by gamma-grid minimization.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "GBSDEError",
    "DomainError",
    "CFLError",
    "BudgetError",
    "NumericalError",
    "VolatilityBand",
    "Grids",
    "Payoff",
    "Generator",
    "g_function",
    "gamma_argmax",
    "song_constant",
    "spot_check_lipschitz",
    "worker_count",
    "DEFAULT_WIDTH_MULT",
]

DEFAULT_WIDTH_MULT = 6.0


class GBSDEError(Exception):
    """Base class for solver errors."""


class DomainError(GBSDEError):
    """Invalid parameter outside an operation's domain."""


class CFLError(GBSDEError):
    """Grid violates the explicit-scheme stability margin."""


class BudgetError(GBSDEError):
    """Requested computation exceeds a declared budget."""


class NumericalError(GBSDEError):
    """Non-finite value produced during a solve."""


@dataclass(frozen=True, slots=True)
class VolatilityBand:
    """Volatility uncertainty interval [sigma_lo, sigma_hi], per sqrt(time)."""

    sigma_lo: float
    sigma_hi: float

    def __post_init__(self) -> None:
        lo, hi = self.sigma_lo, self.sigma_hi
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise DomainError("volatility band must be finite")
        if not (0.0 < lo <= hi):
            raise DomainError(
                f"volatility band needs 0 < sigma_lo <= sigma_hi, got ({lo}, {hi})"
            )

    @property
    def lo2(self) -> float:
        """sigma_lo squared, as the float sigma_lo*sigma_lo."""
        return self.sigma_lo * self.sigma_lo

    @property
    def hi2(self) -> float:
        """sigma_hi squared, as the float sigma_hi*sigma_hi."""
        return self.sigma_hi * self.sigma_hi


@dataclass(frozen=True, slots=True)
class Grids:
    """Uniform time grid on [0, T] and space grid on [x_lo, x_hi].

    Construct through :meth:`make` so the explicit-scheme stability margin
    sigma_hi^2 * dt / dx^2 <= 1/2 is enforced against a band; solvers
    re-check it as a precondition.
    """

    T: float
    nt: int
    x_lo: float
    x_hi: float
    nx: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.T) and self.T > 0.0):
            raise DomainError("horizon T must be positive and finite")
        if self.nt < 1:
            raise DomainError("nt must be >= 1")
        if self.nx < 3:
            raise DomainError("nx must be >= 3")
        if not (self.x_lo < 0.0 < self.x_hi):
            raise DomainError("spatial domain must satisfy x_lo < 0 < x_hi")

    @classmethod
    def make(
        cls,
        band: VolatilityBand,
        T: float,
        nx: int,
        nt: int | None = None,
        width_mult: float = DEFAULT_WIDTH_MULT,
    ) -> "Grids":
        """Build a grid; nt defaults to the smallest stable step count."""
        if width_mult <= 0.0:
            raise DomainError("width_mult must be positive")
        half = width_mult * band.sigma_hi * math.sqrt(T)
        dx = 2.0 * half / (nx - 1)
        if nt is None:
            nt = max(1, math.ceil(2.0 * band.hi2 * T / (dx * dx) - 1e-9))
        g = cls(T=T, nt=nt, x_lo=-half, x_hi=half, nx=nx)
        g.require_cfl(band)
        return g

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / (self.nx - 1)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt + 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.nx)

    def cfl_ratio(self, band: VolatilityBand) -> float:
        return band.hi2 * self.dt / (self.dx * self.dx)

    def require_cfl(self, band: VolatilityBand) -> None:
        ratio = self.cfl_ratio(band)
        if ratio > 0.5 * (1.0 + 1e-12):
            raise CFLError(
                f"stability margin violated: sigma_hi^2*dt/dx^2 = {ratio:.6f} > 0.5"
            )

    def refined(self, level: int = 1) -> "Grids":
        """Halve dx and quarter dt per level; interval count doubles so the
        stability ratio is preserved exactly and the center node survives."""
        if level < 0:
            raise DomainError("refinement level must be >= 0")
        f = 2**level
        return Grids(
            T=self.T,
            nt=self.nt * f * f,
            x_lo=self.x_lo,
            x_hi=self.x_hi,
            nx=(self.nx - 1) * f + 1,
        )


@dataclass(frozen=True, slots=True)
class Payoff:
    """Terminal condition phi with its declared Lipschitz data.

    kind names the catalog entry; fn is the vectorized realization;
    lipschitz_const must be a valid Lipschitz constant for fn (spot-checkable
    with :func:`spot_check_lipschitz`); bound is sup|phi| when finite.
    """

    kind: str
    fn: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    lipschitz_const: float = 0.0
    bound: float | None = None
    params: tuple = ()

    def __post_init__(self) -> None:
        if self.lipschitz_const < 0.0:
            raise DomainError("lipschitz_const must be >= 0")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.fn(x)

    @classmethod
    def linear(cls, a: float, b: float = 0.0) -> "Payoff":
        return cls("linear", lambda x: a * x + b, abs(a), None, (a, b))

    @classmethod
    def square(cls, s: float = 1.0) -> "Payoff":
        """s*x^2; Lipschitz only on a bounded domain, constant filled at use."""
        return cls("square", lambda x: s * (x * x), math.inf, None, (s,))

    @classmethod
    def call(cls, strike: float) -> "Payoff":
        return cls(
            "call", lambda x: np.maximum(x - strike, 0.0), 1.0, None, (strike,)
        )

    @classmethod
    def put(cls, strike: float) -> "Payoff":
        return cls(
            "put", lambda x: np.maximum(strike - x, 0.0), 1.0, None, (strike,)
        )

    @classmethod
    def butterfly(cls, lo: float, mid: float, hi: float, scale: float = 1.0) -> "Payoff":
        """Piecewise-linear hat: scale*((x-lo)+ - 2(x-mid)+ + (x-hi)+).

        Bounded, Lipschitz, and non-convex; peak value scale*(mid-lo) at mid.
        """
        if not (lo < mid < hi):
            raise DomainError("butterfly knots must satisfy lo < mid < hi")

        def fn(x: np.ndarray) -> np.ndarray:
            return scale * (
                np.maximum(x - lo, 0.0)
                - 2.0 * np.maximum(x - mid, 0.0)
                + np.maximum(x - hi, 0.0)
            )

        return cls("butterfly", fn, abs(scale), abs(scale) * (mid - lo), (lo, mid, hi, scale))

    @classmethod
    def tabulated(cls, xs: np.ndarray, ys: np.ndarray, lipschitz: float) -> "Payoff":
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
            raise DomainError("tabulated payoff needs matching 1-d tables")
        if not np.all(np.diff(xs) > 0.0):
            raise DomainError("tabulated payoff nodes must be strictly increasing")
        bound = float(np.max(np.abs(ys)))
        return cls(
            "tabulated",
            lambda x: np.interp(x, xs, ys),
            lipschitz,
            bound,
            (xs, ys),
        )

    @classmethod
    def from_expression(
        cls, source: str, lipschitz: float, bound: float | None = None
    ) -> "Payoff":
        """Payoff from an expression in the variable x."""
        from . import exprlang

        expr = exprlang.parse_expression(source)
        exprlang.require_variables(expr, {"x"})

        def fn(x: np.ndarray) -> np.ndarray:
            return exprlang.evaluate(expr, {"x": x})

        return cls("expression", fn, lipschitz, bound, (source,))


def _zero_fg(t: float, y: np.ndarray, z: np.ndarray):
    return np.zeros(np.broadcast(y, z).shape)


@dataclass(frozen=True, slots=True)
class Generator:
    """Driver pair (f, g) with joint Lipschitz constant in (y, z).

    f and g map (t, y, z) -> array, vectorized over y and z; g defaults to
    zero. f0_bound(t) evaluates |f(t, 0, 0)|.
    """

    f: Callable[[float, np.ndarray, np.ndarray], np.ndarray] = field(compare=False)
    g: Callable[[float, np.ndarray, np.ndarray], np.ndarray] | None = field(
        compare=False, default=None
    )
    lipschitz_const: float = 0.0
    f0_bound: Callable[[float], float] = field(compare=False, default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.lipschitz_const < 0.0:
            raise DomainError("lipschitz_const must be >= 0")
        if self.f0_bound is None:
            f = self.f
            object.__setattr__(
                self, "f0_bound", lambda t: float(abs(f(t, np.float64(0.0), np.float64(0.0))))
            )

    @property
    def has_g(self) -> bool:
        return self.g is not None

    @classmethod
    def zero(cls) -> "Generator":
        return cls(f=_zero_fg, g=None, lipschitz_const=0.0)

    @classmethod
    def constant(cls, c: float) -> "Generator":
        def f(t: float, y: np.ndarray, z: np.ndarray):
            return np.full(np.broadcast(y, z).shape, c)

        return cls(f=f, g=None, lipschitz_const=0.0)

    @classmethod
    def from_expressions(
        cls,
        f_source: str,
        g_source: str | None = None,
        lipschitz: float = 0.0,
    ) -> "Generator":
        """Generator from expressions in the variables t, y, z."""
        from . import exprlang

        f_expr = exprlang.parse_expression(f_source)
        exprlang.require_variables(f_expr, {"t", "y", "z"})

        def f(t: float, y: np.ndarray, z: np.ndarray):
            out = exprlang.evaluate(f_expr, {"t": t, "y": y, "z": z})
            return np.broadcast_to(np.asarray(out, dtype=np.float64), np.broadcast(y, z).shape)

        g = None
        if g_source is not None and not exprlang.is_zero_literal(g_source):
            g_expr = exprlang.parse_expression(g_source)
            exprlang.require_variables(g_expr, {"t", "y", "z"})

            def g(t: float, y: np.ndarray, z: np.ndarray):  # type: ignore[misc]
                out = exprlang.evaluate(g_expr, {"t": t, "y": y, "z": z})
                return np.broadcast_to(
                    np.asarray(out, dtype=np.float64), np.broadcast(y, z).shape
                )

        return cls(f=f, g=g, lipschitz_const=lipschitz)


def g_function(a, band: VolatilityBand):
    """Sublinear heat coefficient 0.5*(sigma_hi^2*a+ - sigma_lo^2*a-).

    Positively homogeneous, monotone, and sublinear in a; works on scalars
    and arrays. Bitwise equal to (0.5*a)*gamma_argmax(a, band) for a != 0.
    """
    return 0.5 * (
        band.hi2 * np.maximum(a, 0.0) - band.lo2 * np.maximum(-a, 0.0)
    )


def gamma_argmax(a, band: VolatilityBand):
    """Squared volatility attaining sup over [lo2, hi2] of 0.5*gamma*a.

    Returns hi2 for a > 0, lo2 for a < 0, and hi2 at the a = 0 tie (any
    value attains the sup there; the upper endpoint keeps the curvature
    control constant on convex payoffs).
    """
    if np.ndim(a) == 0:
        return band.hi2 if a >= 0.0 else band.lo2
    return np.where(np.asarray(a) >= 0.0, band.hi2, band.lo2)


_SERIES_N = 10**6


def song_constant(alpha: float, delta: float) -> float:
    """Explicit moment constant 2*inf over a gamma grid of
    (gamma/(gamma-1))*(1 + 14*sum_{i>=1} i^(-beta/gamma)), beta=(alpha+delta)/alpha.

    The admissible range is 1 < gamma < beta with gamma <= 2; the series is
    truncated at 10^6 terms plus the integral tail bound, so the reported
    value is a certified upper bound of the grid value.
    """
    if not (math.isfinite(alpha) and math.isfinite(delta)):
        raise DomainError("song_constant needs finite parameters")
    if alpha < 1.0:
        raise DomainError("song_constant needs alpha >= 1")
    if delta <= 0.0:
        raise DomainError("song_constant needs delta > 0")
    beta = (alpha + delta) / alpha
    hi = min(beta, 2.0)
    gammas = [round(1.0 + 0.01 * k, 2) for k in range(1, 100)]
    gammas = [g for g in gammas if g < beta]
    if beta > 2.0:
        gammas.append(2.0)
    if not gammas:
        # beta barely above 1: the centi-grid has no point below beta
        gammas = [1.0 + frac * (hi - 1.0) for frac in (0.25, 0.5, 0.75)]
    i = np.arange(1, _SERIES_N + 1, dtype=np.float64)
    best = math.inf
    for g in gammas:
        s = beta / g
        partial = float(np.sum(i**(-s)))
        tail = _SERIES_N ** (1.0 - s) / (s - 1.0)
        val = (g / (g - 1.0)) * (1.0 + 14.0 * (partial + tail))
        if val < best:
            best = val
    return 2.0 * best


def worker_count(limit: int | None = None) -> int:
    """Worker cap for the parallel control and family loops.

    GBSDE_THREADS overrides the CPU count; work is partitioned statically so
    results never depend on the value.
    """
    n = os.cpu_count() or 1
    env = os.environ.get("GBSDE_THREADS")
    if env is not None:
        try:
            n = int(env)
        except ValueError:
            raise DomainError(f"GBSDE_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise DomainError("GBSDE_THREADS must be >= 1")
    if limit is not None:
        n = min(n, limit)
    return max(1, n)


def spot_check_lipschitz(
    payoff: Payoff, xs: np.ndarray, declared: float | None = None
) -> float:
    """Max difference quotient of the payoff over consecutive sample pairs.

    Returns the measured constant; callers compare against the declared one
    (warn, not fail: declared constants are user input).
    """
    xs = np.sort(np.asarray(xs, dtype=np.float64))
    ys = payoff(xs)
    dx = np.diff(xs)
    keep = dx > 0.0
    ratios = np.abs(np.diff(ys))[keep] / dx[keep]
    return float(ratios.max()) if ratios.size else 0.0
