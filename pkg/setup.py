import os

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is None or not os.path.exists("src/meshforge/raster/_speedups.pyx"):
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "meshforge.raster._speedups",
                ["src/meshforge/raster/_speedups.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
