"""Builds the optional compiled kernels. The package works without them:
motionscore.estimator falls back to the numpy kernels when the extension
is missing, so a plain-Python install is still functional.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "motionscore.estimator._kernels_cy",
                ["src/motionscore/estimator/_kernels_cy.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
