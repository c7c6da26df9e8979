"""Kernel backend selection.

Two interchangeable backends provide the hot numerical loops: a compiled
Cython extension (``_gheat``) and a pure-numpy reference (``_ref``). They
produce value-identical results; the compiled one is picked when available.

Selection is controlled by the ``GBSDE_KERNEL`` environment variable at
import time: ``auto`` (default), ``c`` (require the extension), or
``python`` (force the reference backend).
"""

from __future__ import annotations

import os

from . import _ref

_choice = os.environ.get("GBSDE_KERNEL", "auto").strip().lower()

_compiled = None
if _choice in ("auto", "c"):
    try:
        from . import _gheat as _compiled  # type: ignore[no-redef]
    except ImportError:
        _compiled = None
    if _choice == "c" and _compiled is None:
        raise ImportError(
            "GBSDE_KERNEL=c but the compiled kernel extension is not available"
        )
elif _choice != "python":
    raise ValueError(f"GBSDE_KERNEL must be auto, c, or python; got {_choice!r}")

_active = _compiled if _compiled is not None else _ref

second_diff = _active.second_diff
first_diff = _active.first_diff
g_apply = _active.g_apply
step_update = _active.step_update
steps_f0 = _active.steps_f0
interp_rows = _active.interp_rows
k_increments = _active.k_increments


def backend_name() -> str:
    """Name of the active backend: 'c' or 'python'."""
    return "c" if _active is _compiled else "python"


def available_backends() -> tuple[str, ...]:
    """Backends importable in this environment."""
    try:
        from . import _gheat  # noqa: F401
    except ImportError:
        return ("python",)
    return ("c", "python")
