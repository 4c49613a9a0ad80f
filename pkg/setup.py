import os

from setuptools import Extension, setup

# The compiled kernels are an optional speedup; the package falls back to the
# pure-numpy backend in irsmm._kernels.pure when the extension is missing.
ext_modules = []
if os.environ.get("IRSMM_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "irsmm._kernels._speedups",
                    ["src/irsmm/_kernels/_speedups.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
