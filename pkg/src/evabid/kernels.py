"""Backend selection for the hot kernels.

With numba available and ``EVABID_DISABLE_NUMBA`` unset the compiled
versions are used; otherwise the numpy ones.
"""

from evabid import _kernels_np as numpy_backend
from evabid._accel import USE_NUMBA

if USE_NUMBA:
    from evabid import _kernels_nb as numba_backend

    _active = numba_backend
else:
    numba_backend = None
    _active = numpy_backend

marginal_known_price = _active.marginal_known_price
marginal_gaussian = _active.marginal_gaussian
edge_cvar_gaussian = _active.edge_cvar_gaussian
edge_cvar_discrete = _active.edge_cvar_discrete
isotonic_nonincreasing = _active.isotonic_nonincreasing
deterministic_chain = _active.deterministic_chain
displacements = numpy_backend.displacements
edge_lines = numpy_backend.edge_lines
