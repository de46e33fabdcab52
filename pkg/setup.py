import os

from setuptools import find_packages, setup

with open(os.path.join("carnot_lab", "version.txt"), "r") as file_handler:
    __version__ = file_handler.read().strip()


long_description = """

# Carnot Lab

Carnot Lab is a numerical calculus library for Carnot groups (Heisenberg groups, the Engel group,
Euclidean spaces and user-supplied stratified groups) together with a command line harness that checks
operator-norm equalities for composition operators on homogeneous Sobolev spaces.

It provides group arithmetic in exponential coordinates, the Carnot-Caratheodory distance, horizontal
and Pansu differentials, distortion functions, generators of 1-Lipschitz test functions and
Monte Carlo estimators of the quasi-additive set function attached to a map.

## Quick example

```python
from carnot_lab import heisenberg
from carnot_lab.field_calc import Domain
from carnot_lab.map_calc import Dilation
from carnot_lab.operator_lab import verify_theorem_sobolev

g = heisenberg(1)
phi = Dilation(g, 2.0)
domain = Domain.ball_domain(g, [0.0, 0.0, 0.0], 1.0, seed=0)
verdict = verify_theorem_sobolev(phi, domain, p=8, q=4, seed=0)
print(verdict)
```

Or from the command line, with one of the bundled configurations:

```
carnot-lab run heisenberg_dilation --output results/
```

"""  # noqa:E501


setup(
    name="carnot_lab",
    packages=[package for package in find_packages() if package.startswith("carnot_lab")],
    package_data={"carnot_lab": ["py.typed", "version.txt", "configs/*.json"]},
    entry_points={"console_scripts": ["carnot-lab=carnot_lab.cli.__main__:main"]},
    install_requires=[
        "numpy",
        # Quadrature and root finding
        "scipy>=1.4.1",
        # Control optimization of CC distances
        "torch>=1.8.1",
        # Per-sample tables and reading logs
        "pandas",
    ],
    extras_require={
        "tests": [
            # Run tests and coverage
            "pytest",
            "pytest-cov",
            "pytest-env",
            "pytest-xdist",
            # Type check
            "pytype",
            # Lint code
            "flake8>=3.8",
            # Find likely bugs
            "flake8-bugbear",
            # Sort imports
            "isort>=5.0",
            # Reformat
            "black",
        ],
        "docs": [
            "sphinx",
            "sphinx-autobuild",
            "sphinx-rtd-theme",
            # For spelling
            "sphinxcontrib.spelling",
            # Type hints support
            "sphinx-autodoc-typehints",
        ],
    },
    description="Numerical calculus on Carnot groups and verification of composition operator norms.",
    keywords="carnot-groups heisenberg-group sub-riemannian-geometry sobolev-spaces quasiconformal-maps "
    "monte-carlo numerical-analysis",
    license="MIT",
    long_description=long_description,
    long_description_content_type="text/markdown",
    version=__version__,
    python_requires=">=3.7",
    # PyPI package information.
    classifiers=[
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.7",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
    ],
)

# python setup.py sdist
# python setup.py bdist_wheel
