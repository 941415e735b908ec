"""Build the optional compiled pair kernel.

The pure-Python fallback in ``fracsemi._kernels_py`` is used whenever the
extension is missing, so a failed compile never blocks installation.
"""
from __future__ import annotations

import os

from setuptools import setup

ext_modules = []
if os.environ.get("FRACSEMI_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "fracsemi._kernels",
                    ["src/fracsemi/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except Exception as exc:  # pragma: no cover - build environment dependent
        print(f"fracsemi: skipping compiled kernel ({exc})")
        ext_modules = []

setup(ext_modules=ext_modules)
