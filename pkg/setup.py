import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# BTSNET_NO_OPENMP=1 builds the kernels without OpenMP.
use_openmp = os.environ.get("BTSNET_NO_OPENMP", "0") != "1"
compile_args = ["-O3"]
link_args = []
if use_openmp:
    compile_args.append("-fopenmp")
    link_args.append("-fopenmp")

extensions = [
    Extension(
        "btsnet._conv_ext",
        ["src/btsnet/_conv_ext.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=compile_args,
        extra_link_args=link_args,
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # a failed compile leaves the pure-numpy kernels in charge
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
