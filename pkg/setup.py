"""Build script for the compiled ODE kernels.

The package works without the extension (a pure-Python fallback is selected
at import time); building it just makes the SEIR integrators much faster.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "epimort._kernels._ode_cy",
        ["src/epimort/_kernels/_ode_cy.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O2"],
    )
]

setup(ext_modules=cythonize(extensions, language_level="3"))
