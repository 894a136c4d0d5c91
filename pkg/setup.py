from setuptools import Extension, setup
from Cython.Build import cythonize

ext_modules = [
    Extension(
        "tlmri._kernels",
        sources=["src/tlmri/_kernels.pyx"],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        # a failed compile leaves the pure-Python kernels in charge
        optional=True,
    ),
]

setup(
    ext_modules=cythonize(
        ext_modules,
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    ),
)
