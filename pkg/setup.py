"""Build the optional Cython kernels.

The package works without them: ``geomews.kernels`` falls back to a
pure-Python implementation when ``geomews._kernels`` cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("GEOMEWS_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        npy_random_lib = os.path.join(os.path.dirname(np.__file__), "random", "lib")
        ext_modules = cythonize(
            [
                Extension(
                    "geomews._kernels",
                    ["src/geomews/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    library_dirs=[npy_random_lib],
                    libraries=["npyrandom"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
