import os

from pybind11.setup_helpers import ParallelCompile, Pybind11Extension, build_ext
from setuptools import setup

SOURCES = sorted(
    ["bindings/module.cpp"]
    + [os.path.join("src", f) for f in os.listdir("src") if f.endswith(".cpp")]
)

EIGEN_INCLUDE = os.environ.get("EIGEN_INCLUDE_DIR", "/usr/include/eigen3")

ParallelCompile("NPY_NUM_BUILD_JOBS").install()

setup(
    ext_modules=[
        Pybind11Extension(
            "spdecomp._core",
            SOURCES,
            include_dirs=["include", "vendor", EIGEN_INCLUDE],
            cxx_std=20,
            extra_compile_args=["-O2"],
        )
    ],
    cmdclass={"build_ext": build_ext},
)
