"""Kernel backend selection.

The compiled backend (``_speedups``, Cython) is used when the extension built;
otherwise the pure-numpy backend takes over. Set ``IRSMM_PURE=1`` to force the
fallback regardless. Both backends implement the same algorithms with the same
start vectors and stopping rules; within a backend results are bit-identical
call to call, across backends they agree to machine precision (summation order
in the matrix products differs).
"""

import os

from . import pure as _pure

if os.environ.get("IRSMM_PURE") == "1":
    _impl = _pure
else:
    try:
        from . import _speedups as _impl
    except ImportError:
        _impl = _pure

BACKEND = "compiled" if _impl is not _pure else "pure"

lambda_max_power = _impl.lambda_max_power
lse_min = _impl.lse_min
softmin_weights = _impl.softmin_weights
eq_products = _impl.eq_products
unit_phases = _impl.unit_phases
