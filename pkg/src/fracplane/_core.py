"""Backend selection for the O(n^2) pair kernels.

The compiled extension is used when it has been built; otherwise (or when
``FRACPLANE_PURE=1``) the numpy implementation is used.  Both expose
``kernel_matrix``, ``pair_form`` and ``holder_max``.
"""
import os

from . import _kernels_py as pure

BACKEND = "pure"
impl = pure

if os.environ.get("FRACPLANE_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled
    except ImportError:  # extension not built
        compiled = None
    else:
        impl = compiled
        BACKEND = "compiled"
else:
    compiled = None

kernel_matrix = impl.kernel_matrix
pair_form = impl.pair_form
holder_max = impl.holder_max
