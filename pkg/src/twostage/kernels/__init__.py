"""Replication kernels with compiled and reference backends.

The compiled extension is used when it imported cleanly; set the
environment variable ``TWOSTAGE_KERNEL`` to ``ref`` or ``fast`` to force
a backend (``fast`` raises if the extension is unavailable).  Both
backends satisfy the same contract and agree to within 1e-10.
"""
from __future__ import annotations

import os

from . import _ref

_requested = os.environ.get("TWOSTAGE_KERNEL", "").strip().lower()

if _requested in ("", "fast"):
    try:
        from . import _fast as _impl
    except ImportError:
        if _requested == "fast":
            raise ImportError(
                "TWOSTAGE_KERNEL=fast but the compiled kernel extension "
                "is not available; rebuild the package or unset the variable")
        _impl = _ref
elif _requested == "ref":
    _impl = _ref
else:
    raise ImportError(
        f"unknown TWOSTAGE_KERNEL value {_requested!r}; use 'ref' or 'fast'")

backend = _impl.BACKEND
coverage_replicate_stats = _impl.coverage_replicate_stats
iw_replicate_stats = _impl.iw_replicate_stats


def available_backends() -> dict[str, object]:
    """Map of backend name to module, for benchmarking and tests."""
    out = {"reference": _ref}
    try:
        from . import _fast
    except ImportError:
        pass
    else:
        out["compiled"] = _fast
    return out


__all__ = ["backend", "coverage_replicate_stats", "iw_replicate_stats",
           "available_backends"]
