import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("NARRATIVE_ENRICH_NO_EXTENSION") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "narrative_enrich._ckernels",
                    ["src/narrative_enrich/_ckernels.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # No Cython: install pure-Python only; narrative_enrich.kernels falls
        # back automatically at import time.
        ext_modules = []

setup(ext_modules=ext_modules)
