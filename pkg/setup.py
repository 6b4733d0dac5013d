import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    extensions = [
        Extension(
            "samkit._kernels",
            ["src/samkit/_kernels.pyx"],
            include_dirs=[numpy.get_include()],
            # Keep IEEE semantics: no -ffast-math, results must be
            # reproducible and match the numpy fallback to the last ulp
            # for elementwise ops.
            extra_compile_args=["-O3"],
            optional=True,
        )
    ]
    ext_modules = cythonize(extensions, compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)
