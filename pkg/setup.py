"""Build hook for the optional compiled stencil core.

The package is fully functional without the extension (a numpy fallback is
selected at import time); any failure here degrades to a pure-Python install
instead of aborting.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "convcool._stencils",
                ["src/convcool/_stencils.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": 3,
        },
    )
except Exception as exc:  # pragma: no cover - toolchain-dependent
    import sys

    print(f"convcool: skipping compiled stencil core ({exc!r}); "
          "the numpy fallback will be used", file=sys.stderr)

setup(ext_modules=ext_modules)
