"""Chain kernel backend selection.

The compiled kernel is used when it was built; ``BREMARK_KERNEL=python``
forces the pure-Python twin.  Both expose the same ``ChainKernel`` class.
"""

import os

from . import _pykernel

PyChainKernel = _pykernel.ChainKernel

try:
    from ._ckernel import ChainKernel as CChainKernel
except ImportError:  # extension not built
    CChainKernel = None

if CChainKernel is not None and os.environ.get("BREMARK_KERNEL", "").lower() != "python":
    ChainKernel = CChainKernel
else:
    ChainKernel = PyChainKernel

BACKEND = ChainKernel.backend if isinstance(ChainKernel.backend, str) else "cython"


def get_kernel(backend: str | None = None):
    """Kernel class for ``backend`` ('cython', 'python' or None for the default)."""
    if backend is None:
        return ChainKernel
    if backend == "python":
        return PyChainKernel
    if backend == "cython":
        if CChainKernel is None:
            raise RuntimeError("compiled kernel is not available; reinstall with Cython")
        return CChainKernel
    raise ValueError(f"unknown kernel backend {backend!r}")
