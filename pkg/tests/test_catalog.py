import pytest

from bihamkit import catalog
from bihamkit.expr import ExprError, atom_expr, jet
from bihamkit.localgeom import compatibility, jacobi
from bihamkit.miura import first_nonzero, pencil_residual, reduce_system
from bihamkit.pencil import central_invariants


def _all_zero(d):
    return all(r.is_zero() for r in d.values())


@pytest.mark.parametrize("name", ["kdv", "ch", "nls", "two-ch", "boussinesq", "ito"])
def test_entry_is_a_pencil(name):
    p = catalog.get_entry(name).pencil
    assert p.P1.is_antisymmetric() and p.P2.is_antisymmetric()
    assert _all_zero(jacobi(p.P1, p.vt, p.order))
    assert _all_zero(jacobi(p.P2, p.vt, p.order))
    assert _all_zero(compatibility(p.P1, p.P2, p.vt, p.order))


@pytest.mark.parametrize("name,expected", [
    ("kdv", ["c"]), ("ch", ["1/24*u"]), ("nls", ["1/24", "1/24"]),
    ("boussinesq", ["1/24", "1/24"]), ("two-ch", ["1/24*u^2"] * 2), ("ito", ["1/24*u"] * 2),
])
def test_central_invariants(name, expected):
    e = catalog.get_entry(name)
    got = central_invariants(e.pencil, e.roots).as_functions()
    assert [str(c) for c in got] == expected
    assert got == e.expected


@pytest.mark.parametrize("args", [(2, 2, 1, (0, 0, -8)), (2, 1, 0, (1, 2, 3)), (1, 0, 1, (2, 1))])
def test_kdv_ch_formula_matches_direct(args):
    e = catalog.kdv_ch(*args)
    p = e.pencil
    assert _all_zero(jacobi(p.P1, p.vt, p.order)) and _all_zero(jacobi(p.P2, p.vt, p.order))
    assert _all_zero(compatibility(p.P1, p.P2, p.vt, p.order))
    ci = central_invariants(p, e.roots)
    lam = jet("lam")
    formula = e.notes["c_of_lambda"]
    for c, l in zip(ci.c, e.notes["lambda"]):
        assert c == formula.subs({lam: l})


def test_kdv_ch_rejects_bad_parameters():
    with pytest.raises(ExprError):
        catalog.kdv_ch_pencil(1, 1, 1, (0, 1))
    with pytest.raises(ExprError):
        catalog.kdv_ch_pencil(1, 1, 0, (0, 0))
    with pytest.raises(ExprError):
        catalog.kdv_ch(3, 1, 0, (1, 0, 0, 0))


@pytest.mark.parametrize("name", ["nls", "two-ch", "boussinesq", "ito"])
def test_bridge_to_kdv_ch(name):
    T = catalog.miura_bridge(name)
    r1, r2, _ = pencil_residual(T, catalog.bridge_target(name), target=catalog.get_entry(name).pencil,
                                order=4)
    assert first_nonzero(r1, 4) is None and first_nonzero(r2, 4) is None


def test_nls_and_two_ch_differ():
    a = central_invariants(catalog.get_entry("nls").pencil).as_functions()
    b = central_invariants(catalog.get_entry("two-ch").pencil).as_functions()
    assert a != b


def test_unknown_entry():
    with pytest.raises(KeyError, match="unknown"):
        catalog.get_entry("sine-gordon")


def test_kdv_numeric_parameter():
    e = catalog.get_entry("kdv", {"c": "1/24"})
    assert central_invariants(e.pencil).c == [e.vt.parse("1/24")]


class TestGas:
    def test_central_invariants(self):
        e = catalog.get_entry("gas")
        assert [str(c) for c in central_invariants(e.pencil).c] == ["1/24", "1/24"]

    def test_first_order_transform_reduces_system(self):
        T = catalog.gas_transform(2)
        res = reduce_system(catalog.gas_system(T.dst, 2), T, 2)
        assert first_nonzero(res, 2) is None

    def test_leading_system_is_hamiltonian(self):
        from bihamkit.localgeom import hamiltonian_pair_check
        vt = catalog.gas_vt()
        L1, L2 = catalog.gas_leading(vt)
        h1, h2 = catalog.gas_hamiltonians(vt, 0)
        k = vt.p("k")
        ok, _ = hamiltonian_pair_check(catalog.gas_system(vt, 0), L1, h1, vt, L2,
                                       {0: h2[0] * k / (k + 1)}, order=0)
        assert ok

    def test_index_contraction_is_inhomogeneous(self):
        from bihamkit.jet import grade_of
        vt = catalog.gas_vt()
        assert not grade_of(catalog.gas_F2_index_contraction(vt)).homogeneous
        g = grade_of(catalog.gas_F2(vt))
        assert g.homogeneous and g.degree == 2

    def test_second_generating_function_is_homogeneous(self):
        from bihamkit.jet import grade_of
        T = catalog.gas_transform(4)
        assert all(grade_of(f).homogeneous and grade_of(f).degree == 4 for f in T.F[4])

    def test_numeric_k_refused(self):
        with pytest.raises(ExprError):
            catalog.get_entry("gas", {"k": 2})
        with pytest.raises(ExprError):
            catalog.get_entry("gas", {"k": -1})
