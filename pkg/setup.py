"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a pure-Python fallback is
selected at import time), so a failed compile only degrades speed.
`-ffp-contract=off` keeps the compiled kernels bit-identical to the
pure-Python mirrors (no FMA contraction).
"""

import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - exercised only on broken toolchains
            print(f"warning: kernel extension build failed ({exc}); "
                  "falling back to pure-Python kernels")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover
            print(f"warning: building {ext.name} failed ({exc}); "
                  "falling back to pure-Python kernels")


try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "curvetac._kernels._core_cy",
                sources=["src/curvetac/_kernels/_core_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
except ImportError:  # pragma: no cover
    extensions = []

setup(ext_modules=extensions, cmdclass={"build_ext": OptionalBuildExt})
