import os

import numpy
from setuptools import setup

ext_modules = []
if os.environ.get("BNPMA_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "bnpma._pg_kernel",
                    ["src/bnpma/_pg_kernel.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )

setup(ext_modules=ext_modules)
