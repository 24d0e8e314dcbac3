from setuptools import setup, Extension

import numpy as np

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install still works; kernels fall back to numpy
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "perfhom.kernels._core",
                ["src/perfhom/kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
