"""Build the compiled walk kernel; fall back to a pure-Python install if it cannot be built."""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("NEARCONVEX_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "nearconvex._ckernel",
                    ["src/nearconvex/_ckernel.pyx"],
                    include_dirs=[np.get_include()],
                    # numpy's bit-generator distributions (standard normal via ziggurat)
                    library_dirs=[os.path.join(os.path.dirname(np.__file__), "random", "lib")],
                    libraries=["npyrandom", "m"],
                    # no fast-math / contraction: results must match the Python fallback bit for bit
                    extra_compile_args=["-O2", "-ffp-contract=off", "-fno-fast-math"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
