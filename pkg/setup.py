from setuptools import setup, Extension

import numpy as np

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "evresil._kernels._backlog_cy",
                ["src/evresil/_kernels/_backlog_cy.pyx"],
                include_dirs=[np.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    # Pure-Python kernel is selected at import time when the extension
    # is unavailable; the package still installs and runs.
    ext_modules = []

setup(ext_modules=ext_modules)
