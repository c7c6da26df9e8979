"""Build script: compiles the optional C stepping kernels.

The extension is marked optional so a missing or broken C toolchain
degrades to the pure-numpy backend instead of failing the install.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = [
    Extension(
        "gbsde._kernels._gheat",
        ["src/gbsde/_kernels/_gheat.pyx"],
        # -ffp-contract=off: no FMA contraction, so the C kernels produce
        # the same IEEE results as the numpy reference backend.
        extra_compile_args=["-O3", "-ffp-contract=off"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
    if cythonize is not None
    else [],
)
