import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; the kernel falls back at import
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "bremark.kernels._ckernel",
                ["src/bremark/kernels/_ckernel.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O2", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
