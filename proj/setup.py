"""CMake-driven build of the `sscl._sscl` pybind11 extension.

scikit-build-core would normally own this glue; it is unavailable in the
build environment, so a minimal setuptools `build_ext` drives CMake instead.
"""

import os
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name: str):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext: CMakeExtension) -> None:
        source_dir = Path(__file__).resolve().parent
        ext_path = Path(self.get_ext_fullpath(ext.name)).resolve()
        ext_dir = ext_path.parent
        ext_dir.mkdir(parents=True, exist_ok=True)
        build_dir = Path(self.build_temp).resolve() / "cmake-python"
        build_dir.mkdir(parents=True, exist_ok=True)

        cmake_args = [
            f"-DCMAKE_LIBRARY_OUTPUT_DIRECTORY={ext_dir}",
            f"-DPython_EXECUTABLE={sys.executable}",
            "-DSSCL_BUILD_PYTHON=ON",
            "-DSSCL_BUILD_TESTS=OFF",
            "-DCMAKE_BUILD_TYPE=Release",
        ]
        try:
            import pybind11

            cmake_args.append(f"-Dpybind11_DIR={pybind11.get_cmake_dir()}")
        except ImportError:
            pass
        env = os.environ.copy()
        subprocess.run(["cmake", str(source_dir), *cmake_args], cwd=build_dir, env=env, check=True)
        subprocess.run(
            ["cmake", "--build", ".", "--target", "_sscl", f"-j{os.cpu_count() or 2}"],
            cwd=build_dir,
            env=env,
            check=True,
        )


setup(
    ext_modules=[CMakeExtension("sscl._sscl")],
    cmdclass={"build_ext": CMakeBuild},
)
