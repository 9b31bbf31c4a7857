"""Build script for the optional compiled kernel.

The package is pure Python plus one Cython extension holding the hot
per-batch contrastive kernel. The extension is marked optional: if no C
toolchain (or no Cython) is available the install still succeeds and the
package falls back to the numpy kernel at import time.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "contrareg._kernels._fast",
                ["src/contrareg/_kernels/_fast.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
