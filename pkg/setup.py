"""Build script for the optional compiled convolution kernels.

The package works without the extension: akn.kernels falls back to a pure
numpy implementation when the compiled module is missing or when
AKN_PURE_PYTHON=1 is set.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:  # pure-python install
    ext_modules = []
else:
    ext = Extension(
        "akn.kernels._conv",
        ["src/akn/kernels/_conv.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    ext.optional = True  # build failure degrades to the python lane
    ext_modules = cythonize([ext], compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)
