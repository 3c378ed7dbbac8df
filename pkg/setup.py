import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext = Extension(
    "mbtsim._kernels",
    ["src/mbtsim/_kernels.pyx" if cythonize else "src/mbtsim/_kernels.c"],
    include_dirs=[np.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    # contraction into FMA would break bitwise parity with the Python kernels
    extra_compile_args=["-O2", "-ffp-contract=off"],
    optional=True,
)

ext_modules = cythonize([ext], compiler_directives={"language_level": "3"}) if cythonize else [ext]

setup(ext_modules=ext_modules)
