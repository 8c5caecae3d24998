import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("HYPERFUEL_NO_EXT"):
    extensions = [
        Extension(
            "hyperfuel._ckernels",
            ["src/hyperfuel/_ckernels.pyx"],
            include_dirs=[np.get_include()],
            # no -ffast-math: the compiled and python kernels must agree bit-for-bit
            extra_compile_args=["-O3", "-ffp-contract=off"],
        )
    ]
    ext_modules = cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
