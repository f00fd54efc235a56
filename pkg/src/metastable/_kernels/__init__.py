"""Hot kernels with a compiled backend and a pure-Python fallback.

The compiled extension is used when it imports; set
``METASTABLE_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

fallback = _fallback
compiled = None

if os.environ.get("METASTABLE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core as compiled
    except ImportError:  # extension not built
        compiled = None

_active = compiled if compiled is not None else fallback
BACKEND = "cython" if compiled is not None else "python"

orbit_chunk = _active.orbit_chunk
ulam_entries = _active.ulam_entries
