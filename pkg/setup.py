"""Build script for the optional compiled kernels.

The package works without the extension: ``amlgen.kernels`` falls back to
pure-Python/numpy implementations when ``amlgen._ckernels`` cannot be
imported.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("AMLGEN_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "amlgen._ckernels",
                    ["src/amlgen/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
