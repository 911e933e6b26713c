"""Build script: compiles the optional Cython kernel module.

The package works without the compiled extension (vlsfbc._kernels falls back to
pure-numpy implementations), so any failure here is demoted to a warning and the
build proceeds pure-Python.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "vlsfbc._kernels._core",
                ["src/vlsfbc/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - exercised only on broken toolchains
    sys.stderr.write(
        "warning: building without compiled kernels (%s); "
        "pure-Python fallback will be used\n" % exc
    )
    ext_modules = []

setup(ext_modules=ext_modules)
