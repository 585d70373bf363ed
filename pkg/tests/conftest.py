import numpy as np
import pytest

from multibang.cli import PhantomKind, PhantomSpec, build_phantom
from multibang.penalty import AdmissibleSet
from multibang.poisson import Grid, LinearSolveOptions, ScalarField, poisson_solve

ADMISSIBLE_SETS = {
    "unit": (0.0, 1.0, 2.0),
    "paper": (0.0, 0.1, 0.15),
    "low_contrast": (0.0, 0.1, 0.11),
}


@pytest.fixture
def U_unit():
    return AdmissibleSet(ADMISSIBLE_SETS["unit"])


@pytest.fixture
def U_paper():
    return AdmissibleSet(ADMISSIBLE_SETS["paper"])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def two_disks_phantom(n: int, values=(0.0, 0.1, 0.15), linear=False) -> ScalarField:
    kind = PhantomKind.TWO_DISKS_LINEAR if linear else PhantomKind.TWO_DISKS
    return build_phantom(PhantomSpec(kind, AdmissibleSet(values)), Grid(n))


def exact_data(u_true: ScalarField) -> ScalarField:
    return poisson_solve(u_true, LinearSolveOptions(rel_tol=1e-12))
