import numpy as np
import pytest

from bihamkit import catalog
from bihamkit.expr import ZERO, atom_expr, jet
from bihamkit.jet import grade_of
from bihamkit.localgeom import EvolutionaryVF, LocalBivector, schouten_pv
from bihamkit.miura import (
    MiuraTransform, apply_to_pencil, apply_to_solution, compose_transforms, exp_vector_field,
    first_nonzero, invert, pencil_residual, read_transform, reduce_pencil, reduce_system,
    rename_bivector, write_transform,
)
from bihamkit.parse import VarTable
from bihamkit.pencil import EpsBivector, PoissonPencil


def _to(e, name, top=8):
    return e.subs({jet("v", m): atom_expr(jet(name, m)) for m in range(top)})


@pytest.fixture(scope="module")
def kdv0():
    p = catalog.get_entry("kdv").pencil
    return PoissonPencil(p.vt, p.P1.truncated(0), p.P2.truncated(0), p.basepoint, "kdv0")


def test_identity_transform_leaves_pencil(kdv_entry):
    p = kdv_entry.pencil
    src = VarTable(["v"], p.vt.params)
    q = apply_to_pencil(MiuraTransform.identity(src, p.vt), p, 2)
    assert rename_bivector(p.P1, src) == q.P1 and rename_bivector(p.P2, src) == q.P2


def test_linear_map_scales_bracket():
    vt = VarTable(["w"])
    src = VarTable(["v"])
    B = EpsBivector(vt, {0: LocalBivector.from_rows(vt, [[[0, 1]]])})
    p = PoissonPencil(vt, B, B, {"w": 1.0})
    # w = 2v, so {v, v} = δ'/4 ... and the push-forward of [δ'] under v = 2w is 4δ'
    q = apply_to_pencil(MiuraTransform(src, vt, {0: [src.parse("2*v")]}), p, 0)
    assert q.P1[0].row(0, 0)[1] == src.parse("1/4")
    r = apply_to_pencil(MiuraTransform(src, vt, {0: [src.parse("v/2")]}), p, 0)
    assert r.P1[0].row(0, 0)[1] == src.parse("4")


def test_kdv_transform_reaches_eps6(kdv_entry):
    r1, r2, _ = pencil_residual(kdv_entry.transform, kdv_entry.pencil, order=6)
    assert first_nonzero(r1, 6) == 6 or first_nonzero(r2, 6) == 6
    assert all(first_nonzero(r, 6) in (None, 6) for r in (r1, r2))


def test_ch_transform_clean_through_eps4(ch_entry):
    r1, r2, _ = pencil_residual(ch_entry.transform, ch_entry.pencil, order=4)
    assert first_nonzero(r1, 4) is None and first_nonzero(r2, 4) is None


def test_kdv_system_reduces(kdv_entry):
    res = reduce_system(kdv_entry.system, kdv_entry.transform, 6)
    assert first_nonzero(res, 6) == 6


def test_zero_perturbation_identity():
    vt = VarTable(["w"])
    src = VarTable(["v"])
    res = reduce_system({0: [vt.parse("-w*w#1")]}, MiuraTransform.identity(src, vt), 4)
    assert first_nonzero(res, 4) is None


class TestSolutions:
    def test_identity(self):
        vt = VarTable(["w"])
        src = VarTable(["v"])
        y = np.linspace(0, 1, 9)
        (w,) = apply_to_solution(MiuraTransform.identity(src, vt), None, 0.3, jets={"v": y})
        assert np.array_equal(w, y)

    def test_linear_profile_unchanged(self, kdv_entry):
        x = np.linspace(-1, 1, 7)
        jets = {"v": x, "v#1": np.ones_like(x), **{f"v#{m}": np.zeros_like(x) for m in range(2, 7)}}
        (w,) = apply_to_solution(kdv_entry.transform, None, 0.1, jets=jets, order=2, params={"c": 0.5})
        assert np.allclose(w, x, atol=0, rtol=1e-15)

    def test_cubic_profile(self, kdv_entry):
        # v = x^3 at x = 1: c ε² ∂²log(3x²) = -2 c ε²
        jets = {"v": np.array([1.0]), "v#1": np.array([3.0]), "v#2": np.array([6.0]),
                "v#3": np.array([6.0])}
        jets.update({f"v#{m}": np.array([0.0]) for m in range(4, 7)})
        c, eps = 0.3, 0.2
        (w,) = apply_to_solution(kdv_entry.transform, None, eps, jets=jets, order=2, params={"c": c})
        assert w[0] == pytest.approx(1.0 - 2 * c * eps ** 2, rel=1e-14)

    def test_denominator_blow_up(self, kdv_entry):
        jets = {f"v#{m}": np.array([1.0, 2.0]) for m in range(1, 7)}
        jets["v"] = np.array([0.0, 1.0])
        jets["v#1"] = np.array([1.0, 0.0])
        with pytest.raises(FloatingPointError, match="index 1"):
            apply_to_solution(kdv_entry.transform, None, 0.1, jets=jets, order=2, params={"c": 0.1})


class TestGroup:
    def test_invert_identity(self):
        vt, src = VarTable(["w"]), VarTable(["v"])
        S = invert(MiuraTransform.identity(src, vt), 4)
        assert S.is_identity()

    def test_invert_order_two(self):
        vt, src = VarTable(["w"], invertible=["w#1"]), VarTable(["v"], invertible=["v#1"])
        f = src.parse("v#2^2/v#1^2")
        S = invert(MiuraTransform(src, vt, {2: [f]}), 2)
        assert S.F[2][0] == -vt.parse("w#2^2/w#1^2")

    def test_compose_with_inverse(self, kdv_entry):
        T = kdv_entry.transform
        C = compose_transforms(T, invert(T, 4), 4)
        assert C.is_identity()

    def test_compose_preserves_grading(self):
        src, mid = VarTable(["v"]), VarTable(["a"])
        dst = VarTable(["w"])
        T1 = MiuraTransform(src, mid, {1: [src.parse("v*v#1")], 2: [src.parse("v#1^2 + v*v#2")]})
        T2 = MiuraTransform(mid, dst, {2: [mid.parse("a^2*a#2")], 3: [mid.parse("a#1^3")]})
        C = compose_transforms(T2, T1, 4)     # w = T2(a), a = T1(v)
        for k, comps in C.F.items():
            for f in comps:
                if f:
                    assert grade_of(f).degree == k


class TestExpAction:
    def test_zero_generator(self, kdv0):
        q = exp_vector_field([ZERO], kdv0, 2, 4)
        assert q.P1 == kdv0.P1 and q.P2 == kdv0.P2

    def test_first_order_term(self, kdv0):
        xi = EvolutionaryVF([kdv0.vt.parse("w#1^2")], kdv0.vt)
        q = exp_vector_field(xi, kdv0, 2, 2)
        assert q.P2[2] == -schouten_pv(kdv0.P2[0], xi)

    def test_agrees_with_substitution(self, kdv0):
        vt = kdv0.vt
        src = VarTable(["w_"], vt.params)
        q = exp_vector_field([vt.parse("w#1^2")], kdv0, 2, 2)
        T = MiuraTransform(src, vt, {2: [src.parse("-w_#1^2")]})
        s = apply_to_pencil(T, kdv0, 2)
        assert rename_bivector(q.P1, src) == s.P1 and rename_bivector(q.P2, src) == s.P2

    def test_eliminating_exact_deformation(self, kdv0):
        vt = kdv0.vt
        xi = EvolutionaryVF([vt.parse("w#1^2")], vt)
        D = PoissonPencil(vt, *(EpsBivector(vt, {0: P[0], 2: schouten_pv(P[0], xi)}, check=False)
                                for P in (kdv0.P1, kdv0.P2)), kdv0.basepoint)
        R = exp_vector_field(xi, D, 2, 4)
        diffs = [(R.P1[m] - kdv0.P1[m]).is_zero() and (R.P2[m] - kdv0.P2[m]).is_zero()
                 for m in range(5)]
        assert diffs == [True, True, True, True, False]


class TestReduction:
    def test_kdv_order_two_contains_known_term(self, kdv_entry):
        r = reduce_pencil(kdv_entry.pencil, 2)
        assert r.ok and r.transform.respects_jet_bound()
        assert r.step(1).zero_admissible
        F2 = _to(kdv_entry.transform.F[2][0], "w_")
        assert r.step(2).contains([F2])
        assert not r.step(2).contains([F2 * 2])

    def test_ch_order_two(self, ch_entry):
        r = reduce_pencil(ch_entry.pencil, 2)
        assert r.ok
        assert r.step(2).contains([_to(ch_entry.transform.F[2][0], "w_")])

    def test_undeformed_pencil_gives_identity(self, kdv0):
        r = reduce_pencil(kdv0, 2)
        assert r.ok
        assert all(s.zero_admissible for s in r.steps)
        assert r.transform.is_identity()

    def test_logs_can_be_switched_off(self, kdv_entry):
        from bihamkit.miura import AnsatzConfig
        r = reduce_pencil(kdv_entry.pencil, 2, AnsatzConfig(logs=False))
        assert r.ok and not any(s.uses_logs for s in r.steps)


def test_transform_file_round_trip(kdv_entry):
    text = write_transform(kdv_entry.transform)
    T = read_transform(text)
    assert write_transform(T) == text
    assert all(T.F[k][0] == _to(kdv_entry.transform.F[k][0], "v") for k in (2, 4))


def test_transform_file_error_line():
    from bihamkit.parse import ParseError
    with pytest.raises(ParseError, match="line 4"):
        read_transform('[source]\nvars = v\n[transform]\nF[0].eps2 = "v#1 +"\n')
