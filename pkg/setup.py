"""Build script for the optional compiled backend.

The package is fully functional without the extension: if Cython, numpy
headers, or a C compiler are unavailable the install proceeds and the
numpy fallback backend is selected at import time.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "trendeq.backends._speedups",
                ["src/trendeq/backends/_speedups.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
