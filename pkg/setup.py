"""Build script: compiles the optional native engine.

The package works without the extension (the pure-Python engine is
selected at import time), so a failed compile only costs speed.
"""

import os

from setuptools import Extension, setup

PYX = "src/specmine/engine/_core.pyx"

ext_modules = []
try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None and os.path.exists(PYX):
    ext_modules = cythonize(
        [
            Extension(
                "specmine.engine._core",
                sources=[PYX],
                extra_compile_args=["-O2", "-pthread"],
                extra_link_args=["-pthread"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
