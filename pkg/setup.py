"""Build script for the optional compiled kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile only costs speed.
"""

from setuptools import setup

try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/featedit/_kernels/_core.pyx"],
        compiler_directives={"language_level": "3"},
    )
    include_dirs = [np.get_include()]
except ImportError:
    ext_modules = []
    include_dirs = []

setup(ext_modules=ext_modules, include_dirs=include_dirs)
