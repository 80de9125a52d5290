"""Build script for the optional compiled lattice kernels.

The package works without the extension (a numpy fallback is selected at
import time), so the extension is marked optional: a missing compiler
degrades the install to the pure-Python path instead of failing it.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "pggsim._kernels",
                ["src/pggsim/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
