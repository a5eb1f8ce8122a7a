"""Build script for the compiled stencil kernels.

The package works without the extension (a NumPy fallback is selected at
import time), but the compiled kernels are what make desk-scale ensemble
sweeps run in minutes instead of hours.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off: keep a*b+c as two rounded ops so the compiled kernels
# agree bitwise with the NumPy fallback.
extensions = [
    Extension(
        "rbcda.kernels._stencils",
        ["src/rbcda/kernels/_stencils.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        language_level=3,
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
)
