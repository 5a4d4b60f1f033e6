"""Build script: compiles the optional simulation core.

The extension is a pure speed-up; if the toolchain is missing or the
compile fails, installation proceeds and the package falls back to the
numpy kernels at import time.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Swallow compiler failures so the extension stays optional."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001 - any build failure is non-fatal
            warnings.warn(f"compiled core skipped ({exc}); using the python kernels")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            warnings.warn(
                f"building {ext.name} failed ({exc}); using the python kernels"
            )


def extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError as exc:
        warnings.warn(f"compiled core skipped ({exc}); using the python kernels")
        return []
    return cythonize(
        [
            Extension(
                "metasysid._core",
                ["src/metasysid/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
