import numpy as np
import pytest

from einvex import SamplingPlan, load_builtin
from einvex.expr import MapE, MapPsi, ScalarFn
from einvex.sets import Box, SetSpec
from einvex.classifiers import ProblemTriple


def interval(lo, hi, bounded=True, predicates=()):
    return SetSpec(Box((float(lo),), (float(hi),)), tuple(predicates), bounded=bounded)


def triple_1d(h_src, lo=-1.0, hi=1.0, E="identity", Psi="difference", bounded=True):
    h = ScalarFn.parse(h_src, ["s"])
    E_map = MapE.identity(1) if E == "identity" else MapE.parse(E, ["s"])
    Psi_map = MapPsi.difference(1) if Psi == "difference" else MapPsi.parse(Psi, ["a"], ["b"])
    return ProblemTriple(h, E_map, Psi_map, interval(lo, hi, bounded))


@pytest.fixture(scope="session")
def ex1():
    return load_builtin("ex1")


@pytest.fixture(scope="session")
def ex2():
    return load_builtin("ex2")


@pytest.fixture(scope="session")
def ex_qsei():
    return load_builtin("ex_qsei")


@pytest.fixture(scope="session")
def ex_psei():
    return load_builtin("ex_psei")


@pytest.fixture
def small_plan():
    return SamplingPlan(grid_per_axis=11, random_pairs=200)


@pytest.fixture
def rng():
    return np.random.default_rng(7)
