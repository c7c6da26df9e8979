"""Counter-based splittable random numbers.

Draws are pure functions of (seed, stream, row, column): any sub-block of a
panel can be regenerated in isolation, in any order, on any thread, with
bit-identical results. The generator is a keyed 64-bit finalizer-style
mixer (two avalanche rounds) producing uniforms strictly inside (0, 1);
normals are inverse-CDF transforms of those uniforms.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

__all__ = [
    "uniforms",
    "normals",
    "STREAM_PATHS",
    "STREAM_CONTROLS",
    "STREAM_CHECKS",
]

# stream tags keep independent purposes from sharing draws
STREAM_PATHS = 0
STREAM_CONTROLS = 1
STREAM_CHECKS = 2

_K1 = np.uint64(0x9E3779B97F4A7C15)
_K2 = np.uint64(0xC2B2AE3D27D4EB4F)
_K3 = np.uint64(0x165667B19E3779F9)
_K4 = np.uint64(0x27D4EB2F165667C5)

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

_U53 = 2.0**-53


def _mix(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    x ^= x >> np.uint64(30)
    x *= _M1
    x ^= x >> np.uint64(27)
    x *= _M2
    x ^= x >> np.uint64(31)
    return x


def _keyed(seed: int, stream: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    key = (
        np.uint64(seed & 0xFFFFFFFFFFFFFFFF) * _K3
        ^ np.uint64(stream & 0xFFFFFFFFFFFFFFFF) * _K4
    )
    x = rows.astype(np.uint64) * _K1 ^ cols.astype(np.uint64) * _K2 ^ key
    return _mix(_mix(x + _K1))


def uniforms(seed: int, stream: int, rows, cols) -> np.ndarray:
    """Uniforms in the open interval (0, 1), keyed by (seed, stream, row, col).

    rows and cols broadcast; e.g. rows[:, None] with cols[None, :] yields a
    panel whose (i, j) entry depends only on the key tuple.
    """
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    r, c = np.broadcast_arrays(rows, cols)
    bits = _keyed(seed, stream, r, c)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _U53


def normals(seed: int, stream: int, rows, cols) -> np.ndarray:
    """Standard normals via the inverse CDF of the keyed uniforms."""
    return ndtri(uniforms(seed, stream, rows, cols))
