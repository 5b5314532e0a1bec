"""Build script for the compiled kernel core.

The hot kernels (series partial sums, gravity traversals, finite-volume
updates, hardware timestamps) live in a single Cython extension.  The
package falls back to the numpy implementation in
``octask.kernels._pykernels`` when the extension is unavailable, so a
pure-Python install still works; building the extension is what enables
multi-core scaling, because its inner loops release the GIL.

FP contraction is disabled so the compiled kernels round exactly like the
equivalent sequence of Python float operations.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = [
    Extension(
        "octask.kernels._ckernels",
        ["src/octask/kernels/_ckernels.pyx"],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

if cythonize is not None:
    extensions = cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
