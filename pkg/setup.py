import sys

from setuptools import Extension, setup

# The compiled kernels are an optional speedup: if Cython (or a C compiler)
# is unavailable the package falls back to the numpy kernels at import time.
ext_modules = []
try:
    from Cython.Build import cythonize

    extra = [] if sys.platform.startswith("win") else ["-O3"]
    ext_modules = cythonize(
        [
            Extension(
                "subgridboost.kernels._convkernels",
                ["src/subgridboost/kernels/_convkernels.pyx"],
                extra_compile_args=extra,
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
            "cdivision": True,
        },
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
