import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

setup(
    ext_modules=cythonize(
        [Extension("mazing._core", ["src/mazing/_core.pyx"], include_dirs=[numpy.get_include()],
                   extra_compile_args=["-O3"])],
        language_level=3,
    ),
)
