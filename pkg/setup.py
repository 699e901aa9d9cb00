import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# The compiled core only covers the per-pixel scoring loops; everything else
# is plain NumPy/SciPy.  `optional=True` lets installation proceed on boxes
# without a C toolchain -- the package then falls back to the NumPy twin.
extensions = [
    Extension(
        "rxdet._hotloop",
        ["src/rxdet/_hotloop.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
)
