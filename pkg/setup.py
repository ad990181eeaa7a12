"""Builds the optional compiled kernels; the package works without them."""

import os
import sys

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    setup()
    sys.exit(0)

openmp = [] if os.environ.get("SPLATPIPE_NO_OPENMP") else ["-fopenmp"]

extensions = [
    Extension(
        "splatpipe._kernels.composite",
        ["src/splatpipe/_kernels/composite.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"] + openmp,
        extra_link_args=openmp,
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
