"""Hot kernels: compiled extension when available, numpy fallback otherwise.

Set ``SPLATPIPE_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import composite_py

BACKENDS = {"python": composite_py.composite}

try:
    from .composite import composite as _compiled
except ImportError:  # extension not built
    _compiled = None
else:
    BACKENDS["compiled"] = _compiled

if _compiled is not None and os.environ.get("SPLATPIPE_PURE_PYTHON", "") in ("", "0"):
    BACKEND = "compiled"
else:
    BACKEND = "python"


def get_composite(name=None):
    name = name or BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
