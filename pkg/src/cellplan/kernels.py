"""Kernel backend selection.

The compiled extension ``cellplan._kernels`` is used when importable; set
``CELLPLAN_PURE=1`` to force the pure-Python fallback.
"""
from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("CELLPLAN_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _fallback

hull_hits_mask = _impl.hull_hits_mask
hull_hits_boxes = _impl.hull_hits_boxes
line_of_sight = _impl.line_of_sight
grid_search = _impl.grid_search

__all__ = ["BACKEND", "hull_hits_mask", "hull_hits_boxes", "line_of_sight", "grid_search"]
