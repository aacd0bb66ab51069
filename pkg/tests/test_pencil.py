import numpy as np
import pytest

from bihamkit import catalog
from bihamkit.localgeom import LocalBivector
from bihamkit.parse import ParseError, VarTable
from bihamkit.pencil import (
    EpsBivector, GradingError, PoissonPencil, canonical_coordinates, central_invariants,
    flatness_check, leading_metrics, read_pencil, semisimple_check, sl2_change, write_pencil,
)


@pytest.fixture(scope="module")
def gas0():
    return catalog.gas_leading_pencil()


def test_leading_metrics_kdv(kdv_entry):
    L = leading_metrics(kdv_entry.pencil)
    assert L.g1 == [[1]] or str(L.g1[0][0]) == "1"
    assert L.g2[0][0] == kdv_entry.vt.parse("w")


def test_leading_metrics_gas(gas0):
    L = leading_metrics(gas0)
    p = gas0.vt.parse
    assert [[str(x) for x in r] for r in L.g1] == [["0", "1"], ["1", "0"]]
    assert L.g2 == [[p("2*pow(rho,k-1)"), p("u")], [p("u"), p("2*rho/k")]]


def test_ch_first_bracket_has_third_derivative_term(ch_entry):
    b = ch_entry.pencil.P1[2]
    assert b.coeff(0, 0, 3) == ch_entry.vt.parse("-1/8")


def test_flatness(gas0):
    vt = VarTable(["w"])
    assert flatness_check([[vt.parse("7")]], vt)[0]
    assert flatness_check([[vt.parse("w")]], vt)[0]
    assert flatness_check(leading_metrics(gas0).g2, gas0.vt)[0]


def test_flatness_detects_curvature():
    vt = VarTable(["a", "b"], invertible=["a"])
    p = vt.parse
    # contravariant diag(1, a^2), i.e. da^2 + db^2/a^2: the hyperbolic plane
    ok, _ = flatness_check([[p("1"), p("0")], [p("0"), p("a^2")]], vt)
    assert not ok


def test_gas_canonical_coordinates(gas0):
    d = canonical_coordinates(gas0)
    L = leading_metrics(gas0)
    rng = np.random.default_rng(0)
    for _ in range(5):
        pt = {"u": rng.uniform(-1, 1), "rho": rng.uniform(0.5, 2), "k": rng.uniform(1.2, 3)}
        g1 = np.array([[x.eval(pt) for x in r] for r in L.g1])
        g2 = np.array([[x.eval(pt) for x in r] for r in L.g2])
        lams = sorted(ui.eval(pt) for ui in d.u)
        # det(g2 - λ g1) = 4ρ^κ/κ - (u - λ)^2
        for lam in lams:
            assert abs(np.linalg.det(g2 - lam * g1)) < 1e-12
        s = 2 * np.sqrt(pt["rho"] ** pt["k"] / pt["k"])
        assert lams == pytest.approx([pt["u"] - s, pt["u"] + s])


def test_two_component_roots():
    e = catalog.kdv_ch(2, 2, 1, (0, 0, -8))
    w = e.notes["w_pencil"]
    lam = e.notes["lambda"]
    T = e.transform
    # λ solves λ² - w1 λ + w2 = 0 after substituting w(φ, ρ)
    w1, w2 = T.F[0]
    for x in lam:
        assert x * x - w1 * x + w2 == 0
    assert w.vt.n == 2


def test_central_invariants_examples(kdv_entry, ch_entry):
    assert central_invariants(kdv_entry.pencil).c == [kdv_entry.vt.parse("c")]
    assert [str(c) for c in central_invariants(ch_entry.pencil).as_functions()] == ["1/24*u"]
    nls = catalog.get_entry("nls")
    assert [str(c) for c in central_invariants(nls.pencil).as_functions()] == ["1/24", "1/24"]


def test_sl2_changes(kdv_entry):
    p = kdv_entry.pencil
    for m in ((1, 0, 0, 1), (0, 1, 1, 0), (3, 0, 0, 1)):
        _, rep, old, new = sl2_change(p, *m)
        assert all(ok for _, _, ok in rep)
    _, _, old, new = sl2_change(p, 0, 1, 1, 0)
    assert str(new.u[0]) == "w^(-1)" and str(new.c[0]) == "-c*w"
    _, _, old, new = sl2_change(p, 3, 0, 0, 1)
    assert str(new.u[0]) == "3*w" and str(new.c[0]) == "1/3*c"


def test_sl2_inverse_round_trip(ch_entry):
    q, *_ = sl2_change(ch_entry.pencil, 2, 1, 1, 1)
    r, *_ = sl2_change(q, 1, -1, -1, 2)
    assert central_invariants(r).c == central_invariants(ch_entry.pencil).c


def test_sl2_degenerate(kdv_entry):
    with pytest.raises(Exception, match="degenerate"):
        sl2_change(kdv_entry.pencil, 1, 2, 2, 4)


def test_semisimplicity(kdv_entry):
    assert semisimple_check(kdv_entry.pencil)[0]
    ok, roots = semisimple_check(catalog.gas_leading_pencil(basepoint={"u": 0.0, "rho": 1.0, "k": 2.0}))
    assert ok and roots == pytest.approx([-np.sqrt(2), np.sqrt(2)])
    vt = VarTable(["a", "b"])
    B = EpsBivector(vt, {0: LocalBivector.from_rows(vt, [[[0, 1], []], [[], [0, 1]]])})
    assert not semisimple_check(PoissonPencil(vt, B, B, {"a": 1.0, "b": 2.0}))[0]


def test_grading_enforced():
    vt = VarTable(["w"])
    with pytest.raises(GradingError):
        EpsBivector(vt, {0: LocalBivector.from_rows(vt, [[[0, vt.parse("w#1")]]])})
    with pytest.raises(GradingError):
        EpsBivector(vt, {2: LocalBivector.from_rows(vt, [[[0, 0, 0, vt.parse("w#1")]]])})
    # degree m - l + 1 = 0 at eps^2 d^3: w itself is admissible
    EpsBivector(vt, {2: LocalBivector.from_rows(vt, [[[0, 0, 0, vt.parse("w")]]])})


def test_base_point_required():
    vt = VarTable(["w"])
    B = EpsBivector(vt, {0: LocalBivector.from_rows(vt, [[[0, 1]]])})
    with pytest.raises(Exception):
        PoissonPencil(vt, B, B, {})


@pytest.mark.parametrize("name", catalog.names())
def test_pencil_file_round_trip(name):
    p = catalog.get_entry(name).pencil
    text = write_pencil(p)
    q = read_pencil(text)
    assert q.P1 == p.P1 and q.P2 == p.P2 and q.basepoint == p.basepoint
    assert write_pencil(q) == text


def test_pencil_file_errors_have_lines():
    bad = '[vars]\nw\n[basepoint]\nw = 1\n[bracket1]\nP[0][0].eps0.d1 = "w +"\n'
    with pytest.raises(ParseError, match="line 6"):
        read_pencil(bad)
    with pytest.raises(ParseError, match="line 2"):
        read_pencil("[vars]\n[oops]\n")
    with pytest.raises(GradingError):
        read_pencil('[vars]\nw\n[basepoint]\nw = 1\n[bracket1]\nP[0][0].eps0.d1 = "w#1"\n')
