import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the compiled core if possible; fall back to pure Python otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, cython failure, ...
            print(f"WARNING: compiled core skipped ({exc}); the pure-Python core will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"WARNING: building {ext.name} failed ({exc}); the pure-Python core will be used")


ext_modules = []
if not os.environ.get("PROJEQ_SKIP_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "projeq.core._fastcore",
                    ["src/projeq/core/_fastcore.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level="3",
        )
    except Exception as exc:
        print(f"WARNING: cythonize unavailable ({exc}); the pure-Python core will be used")

setup(cmdclass={"build_ext": optional_build_ext}, ext_modules=ext_modules)
