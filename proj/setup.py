"""CMake-driven build for the _provmark extension.

The C++ core builds through CMake; this shim configures a Release build of
just the python module and drops the resulting shared object where
setuptools expects the extension.
"""

import shutil
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        source_dir = Path(__file__).resolve().parent
        build_dir = Path(self.build_temp).resolve()
        build_dir.mkdir(parents=True, exist_ok=True)
        subprocess.run(
            [
                "cmake",
                str(source_dir),
                "-DCMAKE_BUILD_TYPE=Release",
                "-DPROVMARK_BUILD_TESTS=OFF",
                "-DPROVMARK_BUILD_CLI=OFF",
                f"-DPython3_EXECUTABLE={sys.executable}",
            ],
            cwd=build_dir,
            check=True,
        )
        subprocess.run(
            ["cmake", "--build", ".", "--target", "_provmark", "--parallel"],
            cwd=build_dir,
            check=True,
        )
        built = sorted((build_dir / "python").glob("_provmark*"))
        if not built:
            raise RuntimeError("cmake did not produce the _provmark module")
        out = Path(self.get_ext_fullpath(ext.name)).resolve()
        out.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(built[0], out)


setup(
    ext_modules=[CMakeExtension("_provmark")],
    cmdclass={"build_ext": CMakeBuild},
)
