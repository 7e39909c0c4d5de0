"""Build script: compiles the fused training kernel when a toolchain is present.

The compiled extension is optional. If Cython or a C compiler is missing the
install proceeds and the package falls back to the pure-numpy training loop
(selected automatically at import time).
"""

import warnings

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension best-effort; never fail the whole install."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001 - any toolchain failure degrades gracefully
            warnings.warn(f"compiled kernel unavailable, using numpy fallback: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            warnings.warn(f"compiled kernel unavailable, using numpy fallback: {exc}")


def make_extensions():
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    return cythonize(
        [Extension("sdti._kernel", ["src/sdti/_kernel.pyx"])],
        language_level=3,
    )


setup(
    ext_modules=make_extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
