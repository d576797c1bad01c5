"""Stencil-kernel backend selection.

The compiled extension ``convcool._stencils`` is preferred when importable;
otherwise the numpy implementation is used.  Override with the environment
variable ``CONVCOOL_KERNELS`` set to ``cython``, ``numpy`` or ``auto``
(default).  Requesting ``cython`` when the extension is missing is an error —
silent slowdowns are worse than a loud one.
"""

import os

from . import _stencils_np

_choice = os.environ.get("CONVCOOL_KERNELS", "auto").strip().lower()
if _choice not in ("auto", "cython", "numpy"):
    raise ImportError(f"CONVCOOL_KERNELS must be auto, cython or numpy, got {_choice!r}")

_impl = None
if _choice in ("auto", "cython"):
    try:
        from . import _stencils as _impl
    except ImportError:
        if _choice == "cython":
            raise ImportError(
                "CONVCOOL_KERNELS=cython but the compiled extension is not "
                "available; reinstall with a C toolchain or use numpy"
            ) from None
if _impl is None:
    _impl = _stencils_np

BACKEND = _impl.BACKEND

lap_neumann = _impl.lap_neumann
divergence = _impl.divergence
advect = _impl.advect
face_force = _impl.face_force
grad_to_faces = _impl.grad_to_faces
lap_u = _impl.lap_u
lap_w = _impl.lap_w


def available_backends():
    """Names of the importable kernel backends."""
    names = ["numpy"]
    try:
        from . import _stencils  # noqa: F401
        names.insert(0, "cython")
    except ImportError:
        pass
    return names


def get_backend(name):
    """Return the kernel module for an explicit backend name (for tests and
    the comparison benchmark)."""
    if name == "numpy":
        return _stencils_np
    if name == "cython":
        from . import _stencils
        return _stencils
    raise ValueError(f"unknown kernel backend {name!r}")
