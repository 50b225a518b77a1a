import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off keeps the compiled kernel bit-identical to the
# pure-Python fallback (no fused multiply-add in the linkage value).
extensions = [
    Extension(
        "airfed._linkage_cy",
        ["src/airfed/_linkage_cy.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)
