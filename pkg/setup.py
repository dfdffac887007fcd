import os

import numpy as np
from setuptools import Extension, setup

NUMPY_ROOT = os.path.dirname(np.__file__)


def extensions():
    if os.environ.get("RBBCHAOS_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "rbbchaos._kernels",
        ["src/rbbchaos/_kernels.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[
            os.path.join(NUMPY_ROOT, "random", "lib"),
            os.path.join(NUMPY_ROOT, "_core", "lib"),
        ],
        libraries=["npyrandom", "npymath"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions())
