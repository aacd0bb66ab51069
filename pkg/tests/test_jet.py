import pytest

from bihamkit.jet import (
    dx, grade_of, is_variational, jet_order, total_x_derivative, variational_derivative,
)
from bihamkit.localgeom import LocalBivector, LocalFunctional, functionals_equal, schouten_pf
from bihamkit.parse import VarTable


@pytest.fixture
def vt():
    return VarTable(["u"], invertible=["u#1"])


def test_total_derivative(vt):
    p = vt.parse
    assert total_x_derivative(p("u")) == p("u#1")
    assert total_x_derivative(p("log(u#1)")) == p("u#2/u#1")
    assert total_x_derivative(p("u*u#1")) == p("u#1^2 + u*u#2")


def test_grades(vt):
    p = vt.parse
    g = grade_of(p("u#1^2"))
    assert g.homogeneous and g.degree == 2
    g = grade_of(p("u#2/u#1"))
    assert g.homogeneous and g.degree == 1
    g = grade_of(p("u + u#1"))
    assert not g.homogeneous and g.degrees == (0, 1)


def test_derivative_raises_grade(vt):
    e = vt.parse("u#2^2/u#1 + u*u#3")
    assert grade_of(dx(e, 2)).degree == grade_of(e).degree + 2


def test_euler_operator(vt):
    p = vt.parse
    assert variational_derivative(p("u^3/6"), vt, 0) == p("u^2/2")
    assert variational_derivative(p("u#1^2/2"), vt, 0) == p("-u#2")


def test_kdv_flow_from_density():
    # hand computation: δ/δw (w^3/6 - w_x^2/24) = w^2/2 + w_xx/12
    vt = VarTable(["w"])
    h = vt.parse("w^3/6 - w#1^2/24")
    xi = schouten_pf(LocalBivector.from_rows(vt, [[[0, 1]]]), LocalFunctional(h, vt))
    assert xi.comps[0] == vt.parse("w*w#1 + w#3/12")


def test_helmholtz(vt):
    p = vt.parse
    ok, h, _ = is_variational([p("u^2/2")], vt)
    assert ok and h == p("u^3/6")
    ok, h, res = is_variational([p("u#1")], vt)
    assert not ok and h is None and res
    ok, h, _ = is_variational([p("-u#2")], vt)
    assert ok
    assert functionals_equal(LocalFunctional(h, vt), LocalFunctional(p("u#1^2/2"), vt))


def test_jet_order(vt):
    assert jet_order(vt.parse("u*u#3 + u#1"), vt) == 3
    assert jet_order(vt.parse("7"), vt) == -1
