"""Backend selection for the hot kernels.

Set ``EVABID_DISABLE_NUMBA=1`` to force the pure-numpy path. When numba is not
importable the numpy path is used regardless.
"""

import os

_FLAG = os.environ.get("EVABID_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG in {"1", "true", "yes", "on"}

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"
