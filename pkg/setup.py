"""Build script: compiles the optional CSR aggregation kernel.

The package works without the extension (a numpy fallback is selected at
import time), so a missing compiler or Cython must never fail the install.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "auxweight.kernels._csr_ext",
                ["src/auxweight/kernels/_csr_ext.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
