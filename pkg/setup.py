"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension (pure-Python
fallbacks ship in balsim._kernels); a failed compile downgrades to a
warning instead of aborting the install.
"""

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class MaybeBuildExt(build_ext):
    """Build the extension if possible, warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler or toolchain missing
            print(f"warning: compiled kernels skipped ({exc}); "
                  "pure-Python fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: building {ext.name} failed ({exc}); "
                  "pure-Python fallback will be used")


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "balsim._kernels._compiled",
        sources=["src/balsim/_kernels/_compiled.pyx"],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=extensions(), cmdclass={"build_ext": MaybeBuildExt})
