"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension (a numpy fallback with
identical numerical semantics is selected at import time), so the extension
is marked optional: a failed compile degrades to the pure build instead of
failing the install.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "vropt._kernels._core",
                ["src/vropt/_kernels/_core.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
