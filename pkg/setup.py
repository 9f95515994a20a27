"""Builds the optional compiled term-rewriting kernel.

The package is fully functional without the extension; utxsim.terms falls
back to the pure-Python kernel if the build is unavailable.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/utxsim/_kernel_c.pyx",
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
