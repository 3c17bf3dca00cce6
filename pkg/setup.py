"""Build script for the optional compiled kernel extension.

The package works without the extension (a numpy fallback is selected at
import time); building it just makes the hot training loops faster.
"""

import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

ext_modules = [
    Extension(
        "nahtlab.kernels._ckernels",
        sources=["src/nahtlab/kernels/_ckernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

setup(ext_modules=cythonize(ext_modules, language_level="3"))
