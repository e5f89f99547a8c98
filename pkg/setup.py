from setuptools import setup, Extension

import numpy as np

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "floqmc.kernels._core",
                ["src/floqmc/kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level="3",
    )
except ImportError:
    # pure-python fallback is selected at import time; the wheel still works
    ext_modules = []

setup(ext_modules=ext_modules)
