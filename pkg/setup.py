import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # the package still works through its numpy fallback
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "aendo._kernels",
                ["src/aendo/_kernels.pyx"],
                include_dirs=[np.get_include()],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
