"""Select the compiled kernels when available, the pure-Python ones otherwise."""
import os

from . import _kernels_py as python_kernels

compiled_kernels = None
if os.environ.get("TVCS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled_kernels
    except ImportError:
        compiled_kernels = None

kernels = compiled_kernels if compiled_kernels is not None else python_kernels
BACKEND = "compiled" if compiled_kernels is not None else "python"

build_tree_arrays = kernels.build_tree_arrays
dual_fill = kernels.dual_fill
project_linf_epigraph = kernels.project_linf_epigraph
