import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off keeps the native kernel bit-compatible with the numpy
# fallback (no FMA contraction); do not add -ffast-math.
ext = Extension(
    "posedist.kernels._native",
    sources=["src/posedist/kernels/_native.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3", "-fopenmp", "-ffp-contract=off"],
    extra_link_args=["-fopenmp"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(
    ext_modules=cythonize([ext], compiler_directives={"language_level": "3"}),
)
