"""Build script for the compiled kernel extension.

The extension is optional: if Cython or a C compiler is unavailable the
package installs anyway and falls back to the NumPy backend at import time.
Set LANDAU_NO_EXT=1 to skip the extension build explicitly.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("LANDAU_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "landau._backend._compiled",
                    ["src/landau/_backend/_compiled.pyx"],
                    extra_compile_args=["-O3", "-march=native", "-funroll-loops"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
