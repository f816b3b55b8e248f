"""Minimal setup.py for the Cython extension; all other metadata lives in
pyproject.toml.

The compiled kernels are optional: if Cython or a C compiler is missing the
package installs without them and falls back to the numpy backend at import.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("PPPL_SKIP_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        extension = Extension(
            "pppl.nn._kernels",
            [os.path.join("src", "pppl", "nn", "_kernels.pyx")],
            include_dirs=[np.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            extra_compile_args=["-O3"],
        )
        ext_modules = cythonize([extension], language_level="3")
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
