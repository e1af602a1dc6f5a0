from setuptools import Extension, setup

import numpy as np

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "climatefield.kernels._gridcore",
                ["src/climatefield/kernels/_gridcore.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython available: install pure-Python only, the kernels package
    # falls back to the NumPy backend at import time.
    ext_modules = []

setup(ext_modules=ext_modules)
