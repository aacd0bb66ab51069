"""Built-in examples: pencils, flows, Hamiltonians, known reducing transforms.

Flow convention for every entry: ``w_t = -P δH/δw`` (so ``sign=-1`` in
:func:`bihamkit.localgeom.hamiltonian_pair_check`).  Expected central invariants
are stored as Exprs in a canonical-coordinate symbol ``u``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

from gmpy2 import mpq

from .expr import ExprError, ONE, ZERO, as_expr, atom_expr, const, declare_invertible, jet
from ._subs import log_of
from .jet import apply_vector_field, dx
from .localgeom import LocalBivector
from .miura import MiuraTransform, apply_to_pencil, invert
from .parse import VarTable
from .pencil import EpsBivector, PoissonPencil, bivector_from

__all__ = ["CatalogEntry", "get_entry", "names", "kdv_ch_central_invariants", "miura_bridge",
           "kdv_ch_pencil", "gas_transform", "gas_system", "gas_hamiltonians", "lt_pencil"]

NAMES = ("kdv", "ch", "kdv-ch", "nls", "two-ch", "boussinesq", "ito", "gas")


@dataclass
class CatalogEntry:
    name: str
    params: dict
    pencil: PoissonPencil
    expected: list | None = None          # c_i as Exprs in the symbol u
    roots: list | None = None             # canonical coordinates, when supplied by hand
    system: dict | None = None            # {m: [ξ^i_m]}
    H1: dict | None = None                # {m: density} for P1
    H2: dict | None = None                # {m: density} for P2 (already scaled)
    transform: MiuraTransform | None = None
    notes: dict = field(default_factory=dict)

    @property
    def vt(self):
        return self.pencil.vt


def names():
    return list(NAMES)


def _U():
    return atom_expr(jet("u"))


def _biv(vt, orders):
    return EpsBivector(vt, {m: bivector_from(vt, e) for m, e in orders.items()})


def _num(x):
    return float(mpq(x))


# --------------------------------------------------------------------------
# one-component examples

def kdv(c=None):
    vt = VarTable(["w"], ["c"] if c is None else [])
    cc = vt.p("c") if c is None else const(c)
    P1 = _biv(vt, {0: {(0, 0): [0, 1]}})
    P2 = _biv(vt, {0: {(0, 0): [vt.parse("w#1") / 2, vt.x(0)]},
                   2: {(0, 0): [0, 0, 0, cc * 3]}})
    bp = {"w": 1.0}
    if c is None:
        bp["c"] = 0.1
    pen = PoissonPencil(vt, P1, P2, bp, "kdv")
    w = vt.x(0)
    system = {0: [-w * vt.x(0, 1)], 2: [-cc * 2 * vt.x(0, 3)]}
    H1 = {0: w ** 3 / 6, 2: -cc * vt.x(0, 1) ** 2}
    H2 = {0: w ** 2 / 3}
    src = VarTable(["v"], vt.params)
    jet("v", 1).invertible = True
    v = src.x
    F2 = cc * dx(v(0, 2) / v(0, 1), 1)
    F4 = cc * cc / 10 * dx(v(0, 4) * 5 / v(0, 1) ** 2 - v(0, 2) * v(0, 3) * 21 / v(0, 1) ** 3
                           + v(0, 2) ** 3 * 16 / v(0, 1) ** 4, 2)
    T = MiuraTransform(src, vt, {2: [F2], 4: [F4]})
    return CatalogEntry("kdv", {"c": c if c is not None else "c"}, pen, [cc], None, system, H1, H2, T,
                        {"flow": "w_t = -w w_x - 2 c eps^2 w_xxx", "c_kdv_12": "c = 1/24 gives eps^2/12"})


def ch():
    vt = VarTable(["w"])
    P1 = _biv(vt, {0: {(0, 0): [0, 1]}, 2: {(0, 0): [0, 0, 0, mpq(-1, 8)]}})
    P2 = _biv(vt, {0: {(0, 0): [vt.parse("w#1") / 2, vt.x(0)]}})
    pen = PoissonPencil(vt, P1, P2, {"w": 1.0}, "ch")
    src = VarTable(["v"])
    jet("v", 1).invertible = True
    p = src.parse
    F2 = dx(p("v*v#2/(24*v#1) - v#1/48"), 1)
    F4 = dx(p("7*v#2^2/(2880*v#1) + v*v#2^3/(180*v#1^3) - v^2*v#2^4/(90*v#1^5) - v#3/512"
              " - 59*v*v#2*v#3/(5760*v#1^2) + 37*v^2*v#2^2*v#3/(1920*v#1^4)"
              " - 7*v^2*v#3^2/(1920*v#1^3) + 5*v*v#4/(1152*v#1)"
              " - 31*v^2*v#2*v#4/(5760*v#1^3) + v^2*v#5/(1152*v#1^2)"), 1)
    T = MiuraTransform(src, vt, {2: [F2], 4: [F4]})
    return CatalogEntry("ch", {}, pen, [_U() / 24], None, None, None, None, T, {})


# --------------------------------------------------------------------------
# KdV-CH family

def _D(vt, s, a, n, scale=1):
    """Entries of 𝒟_s = w^s δ' + w^s_x/2 δ + a_s ε²/8 δ''' (w^0 = 1)."""
    if s < 0 or s > n:
        return None
    if s == 0:
        r0 = [ZERO, const(scale)]
    else:
        r0 = [vt.x(s - 1, 1) * mpq(scale, 2), vt.x(s - 1) * scale]
    r2 = [ZERO, ZERO, ZERO, const(mpq(a[s]) * scale / 8)] if a[s] else None
    return r0, r2


def kdv_ch_bracket(vt, n, m, a, scale=1):
    o0, o2 = {}, {}
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if i <= m and j <= m:
                f = -1
            elif i >= m + 1 and j >= m + 1:
                f = 1
            else:
                f = 0
            if not f:
                continue
            d = _D(vt, i + j - m - 1, a, n, scale * f * (-1) ** m)
            if d is None:
                continue
            o0[(i - 1, j - 1)] = d[0]
            if d[1]:
                o2[(i - 1, j - 1)] = d[1]
    orders = {0: o0}
    if o2:
        orders[2] = o2
    return EpsBivector(vt, {mm: bivector_from(vt, e, complete=False) for mm, e in orders.items()})


def kdv_ch_pencil(n, k, l, a, scale=1, basepoint=None):
    """ℬ_{k,l} = ({,}_k, {,}_l) in the variables w1..wn (w for n = 1)."""
    if k == l:
        raise ExprError("k and l must differ")
    a = [mpq(x) for x in a]
    if len(a) != n + 1:
        raise ExprError("need a_0..a_n")
    if not any(a):
        raise ExprError("at least one a_i must be nonzero")
    vt = VarTable(["w"] if n == 1 else [f"w{i}" for i in range(1, n + 1)])
    P1 = kdv_ch_bracket(vt, n, k, a, scale)
    P2 = kdv_ch_bracket(vt, n, l, a, scale)
    if basepoint is None:
        basepoint = {"w": 2.0} if n == 1 else {"w1": 4.0, "w2": 3.0}
    return PoissonPencil(vt, P1, P2, basepoint, f"B{k}{l}")


def kdv_ch_central_invariants(n, k, l, a, symbol="lam"):
    """c(λ) = Σ_j (-1)^j a_j λ^{n-j} / (24 (l-k) λ^{n-1-l}), as an Expr in λ."""
    if k == l:
        raise ExprError("k and l must differ")
    lam_atom = jet(symbol)
    lam_atom.invertible = True
    lam = atom_expr(lam_atom)
    num = ZERO
    for j, aj in enumerate(a):
        num = num + lam ** (n - j) * (mpq(aj) * (-1) ** j)
    return num / (lam ** (n - 1 - l) * (24 * (l - k)))


def _phirho(params=()):
    return VarTable(["phi", "rho"], list(params), invertible=["rho"])


def _point_map_phirho(src):
    """w1 = 2φ, w2 = φ² - 4ρ: λ² - w1 λ + w2 has roots φ ± 2ρ^{1/2}."""
    p = src.parse
    return {0: [p("2*phi"), p("phi^2 - 4*rho")]}


def kdv_ch(n=1, k=1, l=0, a=(0, 1)):
    a = [mpq(x) for x in a]
    lam_c = kdv_ch_central_invariants(n, k, l, a)
    if n == 1:
        pen = kdv_ch_pencil(1, k, l, a)
        lam = jet("lam")
        expected_lam = [lam_c]
        # u = λ^{k-l}; λ = w
        return CatalogEntry("kdv-ch", {"n": n, "k": k, "l": l, "a": a}, pen, None, None,
                            notes={"c_of_lambda": lam_c, "lambda": [pen.vt.x(0)]})
    if n != 2:
        raise ExprError("only n <= 2 is supported")
    pw = kdv_ch_pencil(2, k, l, a)
    src = _phirho()
    T = MiuraTransform(src, pw.vt, _point_map_phirho(src))
    pen = apply_to_pencil(T, pw, basepoint={"phi": 2.0, "rho": 0.25})
    pen.name = f"B{k}{l}(phi,rho)"
    lam = [src.parse("phi - 2*pow(rho,1/2)"), src.parse("phi + 2*pow(rho,1/2)")]
    roots = [x ** (k - l) for x in lam]
    return CatalogEntry("kdv-ch", {"n": n, "k": k, "l": l, "a": a}, pen, None, roots,
                        transform=T, notes={"c_of_lambda": lam_c, "lambda": lam, "w_pencil": pw})


# --------------------------------------------------------------------------
# (lt) family

def lt_pencil(extra1=None, extra2=None, name="lt"):
    vt = _phirho()
    p = vt.parse
    L1 = {0: {(1, 0): [0, 1]}}
    L2 = {0: {(0, 0): [0, 2], (1, 0): [0, p("phi")], (1, 1): [p("rho#1"), p("2*rho")]}}
    for src, dst in ((extra1, L1), (extra2, L2)):
        for m, e in (src or {}).items():
            dst.setdefault(m, {}).update(e)
    pen = PoissonPencil(vt, _biv(vt, L1), _biv(vt, L2), {"phi": 0.3, "rho": 1.0}, name)
    return pen


def nls():
    pen = lt_pencil(extra2={1: {(1, 0): [0, 0, 1]}}, name="nls")
    return CatalogEntry("nls", {}, pen, [const(mpq(1, 24))] * 2,
                        transform=miura_bridge("nls"), notes={"bridge_a": (0, 0, -8)})


def two_ch():
    pen = lt_pencil(extra1={1: {(1, 0): [0, 0, 1]}}, name="two-ch")
    return CatalogEntry("two-ch", {}, pen, [_U() ** 2 / 24] * 2,
                        transform=miura_bridge("two-ch"), notes={"bridge_a": (-8, 0, 0)})


def boussinesq():
    pen = lt_pencil(extra2={2: {(1, 1): [0, 0, 0, mpq(1, 2)]}}, name="boussinesq")
    return CatalogEntry("boussinesq", {}, pen, [const(mpq(1, 24))] * 2,
                        transform=miura_bridge("boussinesq"), notes={"bridge_a": (0, 0, -8)})


def ito():
    pen = lt_pencil(extra1={2: {(1, 1): [0, 0, 0, mpq(-1, 2)]}}, name="ito")
    return CatalogEntry("ito", {}, pen, [_U() / 24] * 2,
                        transform=miura_bridge("ito"), notes={"bridge_a": (0, 8, 0)})


_BRIDGES = {
    "nls": ({0: ["2*phi", "phi^2 - 4*rho"], 1: ["0", "2*phi#1"]}, (0, 0, -8)),
    "two-ch": ({0: ["2*phi", "phi^2 - 4*rho"], 1: ["2*phi#1", "0"]}, (-8, 0, 0)),
    "boussinesq": ({0: ["2*phi", "phi^2 - 4*rho"]}, (0, 0, -8)),
    "ito": ({0: ["2*phi", "phi^2 - 4*rho"]}, (0, 8, 0)),
}


def miura_bridge(name):
    """Polynomial Miura map from the (lt)-form variables (φ, ρ) to w1, w2 of 8·ℬ_{2,1}."""
    if name not in _BRIDGES:
        raise KeyError(f"no bridge for {name!r}")
    F, a = _BRIDGES[name]
    src = _phirho()
    dst = VarTable(["w1", "w2"])
    T = MiuraTransform(src, dst, {k: [src.parse(s) for s in comps] for k, comps in F.items()})
    T.target_a = a
    return T


def bridge_target(name):
    return kdv_ch_pencil(2, 2, 1, _BRIDGES[name][1], scale=8)


# --------------------------------------------------------------------------
# isentropic gas

_A = {
    1: "(18 + 75*k - 15*k^2 + 20*k^3 + 2*k^4)/(2880*k^3)",
    2: "(6 + 113*k + 409*k^2 - 185*k^3 + 17*k^4)/(5760*k^2)",
    3: "-(18 + 11*k + 3*k^2)/(720*k^2)",
    4: "7/(720*k)",
    5: "(-6 + 3*k - k^2)/(480*k^2)",
    6: "(-6 - 39*k - 10*k^2 + 5*k^3)/(480*k)",
    7: "(14 + 5*k + 5*k^2)/1440",
    8: "1/(120*k)",
    9: "(2 + 5*k)/240",
    10: "-(k+2)*(k+3)*(k^2-1)/(5760*k^4)",
}
_B = {
    1: "(42 + 83*k - 53*k^2 + 8*k^3)/(1440*k^3)",
    2: "-(6 + 35*k - 24*k^2 + 5*k^3)/(720*k^3)",
    3: "-(12 + 40*k - 13*k^2 + 5*k^3)/(720*k^3)",
    4: "(6 - 4*k + k^2)/(180*k^2)",
    5: "(6 + k + k^2)/(720*k^2)",
    6: "(6 + k + k^2)/(720*k^2)",
    7: "-1/(360*k)",
    8: "-(k+2)*(k+3)/(720*k^4)",
    9: "(k+1)*(k+2)*(k+3)/(1440*k^4)",
}
_A_MONO = {
    1: "rho^(-4)*u#1^2*rho#1^2", 2: "pow(rho,k-6)*rho#1^4", 3: "rho^(-3)*u#2*u#1*rho#1",
    4: "rho^(-2)*u#2^2", 5: "rho^(-3)*u#1^2*rho#2", 6: "pow(rho,k-5)*rho#1^2*rho#2",
    7: "pow(rho,k-4)*rho#2^2", 8: "rho^(-2)*u#1*u#3", 9: "pow(rho,k-4)*rho#1*rho#3",
    10: "pow(rho,-k-2)*u#1^4",
}
_B_MONO = {
    1: "rho^(-4)*u#1*rho#1^3", 2: "rho^(-3)*rho#1^2*u#2", 3: "rho^(-3)*u#1*rho#1*rho#2",
    4: "rho^(-2)*u#2*rho#2", 5: "rho^(-2)*u#3*rho#1", 6: "rho^(-2)*u#1*rho#3",
    7: "rho^(-1)*u#4", 8: "pow(rho,-k-1)*u#1^2*u#2", 9: "pow(rho,-k-2)*u#1^3*rho#1",
}


def gas_vt(names=("u", "rho")):
    vt = VarTable(list(names), ["k"], invertible=[names[1]])
    return vt


def _gas_D(vt):
    u, r = vt.vars
    D = vt.parse(f"{u}#1^2 - k*pow({r},k-2)*{r}#1^2")
    declare_invertible(D)
    return D


def gas_system(vt=None, order=4):
    """Right-hand sides ξ of u_t = ξ_u, ρ_t = ξ_ρ for the deformed gas equations."""
    vt = vt or gas_vt()
    p = vt.parse
    fu = {0: p("u^2/2 + pow(rho,k)"),
          2: p("k*(k-2)/8*pow(rho,k-3)*rho#1^2 + k^2/12*pow(rho,k-2)*rho#2")}
    fr = {0: p("rho*u"),
          2: p("(2-k)*(k-3)/(12*k)*rho^(-1)*u#1*rho#1 + u#2/6")}
    if order >= 4:
        kk = p("(k-2)*(k-3)")
        su = sum((p(_A[i]) * p(_A_MONO[i]) for i in _A), ZERO)
        sr = sum((p(_B[i]) * p(_B_MONO[i]) for i in _B), ZERO)
        fu[4] = kk * su + p("k*(k^2-4)/360*pow(rho,k-3)*rho#4")
        fr[4] = kk * sr
    return {m: [-dx(fu[m], 1), -dx(fr[m], 1)] for m in fu if m <= order}


def gas_hamiltonians(vt=None, order=4):
    """Densities h1, h2 per ε-order (Δh1 = u Δh2 + ...)."""
    vt = vt or gas_vt()
    p = vt.parse
    dh2 = {2: p("-(k-2)*(k-3)/(12*k)*rho^(-1)*u#1*rho#1")}
    dh1 = {2: p("-1/(24*k)*((k^2-3*k+6)*u#1^2 + k*(2*k^2-5*k+6)*pow(rho,k-2)*rho#1^2)")}
    if order >= 4:
        dh2[4] = p("(k-2)*(k-3)/(720*k^3)") * (
            p("-2*k*(k^2-8*k+6)*rho^(-2)*u#1*rho#3")
            + p("k*(7*k^2-61*k+42)*rho^(-3)*u#1*rho#1*rho#2")
            + p("(-5*k^3 + 79/2*k^2 - 55/2*k + 3)*rho^(-4)*u#1*rho#1^3")
            + p("1/(6*k)*(k+3)*(k+2)*(k+1)*pow(rho,-k-2)*u#1^3*rho#1"))
        dh1[4] = p("(k-2)*(k-3)/(240*k^3)") * (
            p("-1/3*k*(k^2-4*k+6)*rho^(-1)*u#1*u#3")
            + p("1/3*k*(2*k^2-13*k+12)*rho^(-2)*u#1*u#2*rho#1")
            + p("1/72*(3*k+5)*(k+3)*(k+2)/k*pow(rho,-k-1)*u#1^4")
            - p("1/12*(2*k-3)*(k+3)*(k+2)*rho^(-3)*u#1^2*rho#1^2")
            + p("k^2*(k-1)*(3*k^2-8*k+12)/(2*(k-3))*pow(rho,k-3)*rho#2^2")
            - p("1/72*k*(k-1)*(16*k^4-100*k^3+229*k^2-211*k+6)*pow(rho,k-5)*rho#1^4"))
    u = vt.x(0)
    h1 = {0: p("rho*u^2/2 + pow(rho,k+1)/(k+1)")}
    h2 = {0: p("rho*u")}
    for m in dh2:
        if m <= order:
            h1[m] = dh1[m] + u * dh2[m]
            h2[m] = dh2[m]
    return h1, h2


def _T2(vt):
    u, r = vt.vars
    return [vt.parse(f"k*pow({r},k-2)*{r}#1"), vt.x(0, 1)]


def _T_chain(vt, idx, base, cache):
    """𝒯_{a1}...𝒯_{am} applied to base (indices 1 = ∂_x, 2 = 𝒯₂; they commute)."""
    key = (tuple(sorted(idx)), base)
    r = cache.get(key)
    if r is not None:
        return r
    if not idx:
        r = vt.x(base)
    else:
        prev = _T_chain(vt, idx[1:], base, cache)
        r = dx(prev, 1) if idx[0] == 1 else apply_vector_field(_T2(vt), prev, vt)
    cache[key] = r
    return r


def gas_F1(vt):
    D = _gas_D(vt)
    return log_of(-D, drop_constant=True) / 24 - \
        vt.parse("(k-2)*(k-3)/(24*k)") * log_of(vt.x(1))


def _gas_M(vt):
    u, r = vt.vars
    p = vt.parse
    Dinv = 1 / _gas_D(vt)
    return [[p(f"-k*pow({r},k-2)*{r}#1") * Dinv, p(f"{u}#1") * Dinv],
         [p(f"{u}#1") * Dinv, p(f"-{r}#1") * Dinv]]


def gas_F2_index_contraction(vt):
    """Index-contracted ε⁴ ansatz with fixed weights ±1/1152, ±1/360.

    Kept for comparison only: after 𝒯-application it mixes degrees 4, 5 and 6,
    so it cannot serve as a generating function (see gas_F2)."""
    from itertools import product
    M = _gas_M(vt)
    cache = {}

    def R(*a):
        return _T_chain(vt, [x + 1 for x in a], 1, cache)
    I = (0, 1)
    t = ZERO
    for a1, a2, a3, a4 in product(I, repeat=4):
        t = t + R(a1, a2, a3, a4) * M[a1][a2] * M[a3][a4] / 1152
    for a in product(I, repeat=6):
        a1, a2, a3, a4, a5, a6 = a
        t = t - R(a1, a2, a3) * R(a4, a5, a6) * M[a1][a4] * M[a2][a5] * M[a3][a6] / 360
        t = t - R(a1, a2) * R(a3, a4, a5, a6) * M[a1][a3] * M[a2][a4] * M[a5][a6] / 1152
    for a in product(I, repeat=8):
        a1, a2, a3, a4, a5, a6, a7, a8 = a
        m = M[a1][a3] * M[a2][a6] * M[a4][a7] * M[a5][a8]
        if m:
            t = t + R(a1, a2) * R(a3, a4, a5) * R(a6, a7, a8) * m / 360
    return t


def gas_F2_bracket(vt):
    """The explicit D^-2 [...] part of the ε⁴ generating function."""
    u, r = vt.vars
    p = vt.parse
    Dinv = 1 / _gas_D(vt)
    br = [
        "-1/240*k*pow(rho,2*k-5)*rho#3*rho#1^3",
        "11/2880*k*pow(rho,2*k-5)*rho#2^2*rho#1^2",
        "(-7/5760*k^2 + 19/5760*k + 7/960)*pow(rho,2*k-6)*rho#2*rho#1^4",
        "11/2880*pow(rho,k-3)*rho#1^2*u#2^2",
        "-1/(5760*k)*(k^4-9*k^3+k^2+53*k+6)*pow(rho,2*k-7)*rho#1^6",
        "1/240*pow(rho,k-3)*rho#1^2*u#3*u#1",
        "1/240*pow(rho,k-3)*rho#1*rho#3*u#1^2",
        "-11/720*pow(rho,k-3)*rho#1*u#1*u#2*rho#2",
        "11/2880*pow(rho,k-3)*u#1^2*rho#2^2",
        "-1/1440*(11*k-21)*pow(rho,k-4)*rho#1^3*u#2*u#1",
        "1/(2880*k)*(22*k^2-47*k-42)*pow(rho,k-4)*rho#1^2*u#1^2*rho#2",
        "1/(5760*k^2)*(12*k^4-45*k^3+15*k^2+101*k+6)*pow(rho,k-5)*u#1^2*rho#1^4",
        "-1/(240*k)*rho^(-1)*u#3*u#1^3",
        "11/(2880*k)*rho^(-1)*u#1^2*u#2^2",
        "1/(1440*k)*rho^(-2)*u#2*u#1^3*rho#1",
        "1/(5760*k^2)*(7*k^2-13*k+42)*rho^(-2)*rho#2*u#1^4",
        "-1/(5760*k^3)*(8*k^3-31*k^2+43*k-6)*rho^(-3)*u#1^4*rho#1^2",
        "-1/(5760*k^4)*(k+3)*(k+2)*pow(rho,-k-1)*u#1^6",
    ]
    if (u, r) != ("u", "rho"):
        br = [s.replace("rho", "\0").replace("u", u).replace("\0", r) for s in br]
    bracket = sum((p(s) for s in br), ZERO)
    return p("(k-2)*(k-3)") * Dinv * Dinv * bracket


# ε⁴ generating function, contracted part: (chains, M-index pairs, coefficient in k).
# A chain (m, j) is 𝒯-applied m times to ρ, j of them 𝒯₂.  Obtained by an exact
# undetermined-coefficient solve against the ε⁴ system.  The solution is one
# representative: the solve leaves a 19-dimensional kernel.
_F2_CHAINS = [
    (((4, 0),), ((0, 0), (0, 0)), "(-101/5760) + (53/5760)*k"),
    (((4, 1),), ((0, 0), (0, 1)), "(1/256)"),
    (((4, 2),), ((0, 0), (1, 1)), "(79/3840) + (-53/5760)*k"),
    (((4, 2),), ((0, 1), (0, 1)), "(1/288)"),
    (((4, 3),), ((0, 1), (1, 1)), "(7/2304)"),
    (((4, 4),), ((1, 1), (1, 1)), "(1/2304)"),
    (((2, 0), (3, 0)), ((0, 0), (0, 0), (0, 0)), "(191/5760) + (-53/1920)*k"),
    (((2, 0), (3, 1)), ((0, 0), (0, 0), (0, 1)), "(-1007/5760) + (517/2880)*k + (-53/960)*k^2"),
    (((2, 0), (3, 2)), ((0, 0), (0, 0), (1, 1)), "(101/2880) + (-53/5760)*k"),
    (((2, 0), (3, 2)), ((0, 0), (0, 1), (0, 1)), "(-187/1920) + (53/1440)*k"),
    (((2, 0), (3, 3)), ((0, 0), (0, 1), (1, 1)), "(173/1152) + (-517/2880)*k + (53/960)*k^2"),
    (((2, 0), (3, 3)), ((0, 1), (0, 1), (0, 1)), "(-13/2880)"),
    (((2, 1), (3, 0)), ((0, 0), (0, 0), (0, 1)), "(67/384) + (-1193/5760)*k + (53/960)*k^2"),
    (((2, 1), (3, 1)), ((0, 0), (0, 0), (1, 1)), "(-859/11520) + (53/1920)*k"),
    (((2, 1), (3, 1)), ((0, 0), (0, 1), (0, 1)), "(-331/11520)"),
    (((2, 1), (3, 2)), ((0, 0), (0, 1), (1, 1)), "(-419/1920) + (1193/5760)*k + (-53/960)*k^2"),
    (((2, 1), (3, 2)), ((0, 1), (0, 1), (0, 1)), "(-7/480)"),
    (((2, 1), (3, 3)), ((0, 0), (1, 1), (1, 1)), "(691/11520) + (-53/1920)*k"),
    (((2, 1), (3, 3)), ((0, 1), (0, 1), (1, 1)), "(-173/11520)"),
    (((2, 2), (3, 0)), ((0, 0), (0, 0), (1, 1)), "(-143/3840) + (53/1920)*k"),
    (((2, 2), (3, 0)), ((0, 0), (0, 1), (0, 1)), "(-191/1280) + (169/1440)*k + (-53/1920)*k^2"),
    (((2, 2), (3, 1)), ((0, 0), (0, 1), (1, 1)), "(-55/288) + (167/1152)*k + (-53/1920)*k^2"),
    (((2, 2), (3, 1)), ((0, 1), (0, 1), (0, 1)), "(-29/2880)"),
    (((2, 2), (3, 2)), ((0, 0), (1, 1), (1, 1)), "(-35/768) + (53/5760)*k"),
    (((2, 2), (3, 2)), ((0, 1), (0, 1), (1, 1)), "(779/3840) + (-37/240)*k + (53/1920)*k^2"),
    (((2, 2), (3, 3)), ((0, 1), (1, 1), (1, 1)), "(11/64) + (-167/1152)*k + (53/1920)*k^2"),
    (((2, 0), (2, 0), (2, 0)), ((0, 0), (0, 0), (0, 0), (0, 0)), "(1/90)"),
    (((2, 0), (2, 0), (2, 1)), ((0, 0), (0, 0), (0, 0), (0, 1)), "(1/15)"),
    (((2, 0), (2, 0), (2, 2)), ((0, 0), (0, 0), (0, 0), (1, 1)), "(55/1152) + (-53/1920)*k"),
    (((2, 0), (2, 0), (2, 2)), ((0, 0), (0, 0), (0, 1), (0, 1)), "(-83/5760) + (53/1920)*k"),
    (((2, 0), (2, 1), (2, 1)), ((0, 0), (0, 0), (0, 0), (1, 1)), "(289/2880) + (-53/960)*k"),
    (((2, 0), (2, 1), (2, 1)), ((0, 0), (0, 0), (0, 1), (0, 1)), "(19/576) + (53/960)*k"),
    (((2, 0), (2, 1), (2, 2)), ((0, 0), (0, 1), (0, 1), (0, 1)), "(2/15)"),
    (((2, 0), (2, 2), (2, 2)), ((0, 0), (0, 0), (1, 1), (1, 1)), "(-151/2880) + (53/1920)*k"),
    (((2, 0), (2, 2), (2, 2)), ((0, 0), (0, 1), (0, 1), (1, 1)), "(43/576) + (-53/1920)*k"),
    (((2, 0), (2, 2), (2, 2)), ((0, 1), (0, 1), (0, 1), (0, 1)), "(1/90)"),
    (((2, 1), (2, 1), (2, 1)), ((0, 0), (0, 0), (0, 1), (1, 1)), "(2/45)"),
    (((2, 1), (2, 1), (2, 1)), ((0, 0), (0, 1), (0, 1), (0, 1)), "(2/45)"),
    (((2, 1), (2, 1), (2, 2)), ((0, 0), (0, 0), (1, 1), (1, 1)), "(-193/2880) + (53/960)*k"),
    (((2, 1), (2, 1), (2, 2)), ((0, 0), (0, 1), (0, 1), (1, 1)), "(481/2880) + (-53/960)*k"),
    (((2, 1), (2, 1), (2, 2)), ((0, 1), (0, 1), (0, 1), (0, 1)), "(1/30)"),
    (((2, 1), (2, 2), (2, 2)), ((0, 0), (0, 1), (1, 1), (1, 1)), "(1/15)"),
    (((2, 2), (2, 2), (2, 2)), ((0, 0), (1, 1), (1, 1), (1, 1)), "(3/640)"),
    (((2, 2), (2, 2), (2, 2)), ((0, 1), (0, 1), (1, 1), (1, 1)), "(37/5760)"),
]
_F2_BRACKET_FIX = [
    ("pow(rho,2*k-5)*rho#2^2*rho#1^2", "(-1/60)*k^2 + (1/120)*k^3"),
    ("pow(rho,k-3)*rho#1^2*u#2^2", "(7/90)*k + (-7/180)*k^2"),
    ("pow(rho,k-3)*rho#1^2*u#3*u#1", "(-91/5760)*k + (91/11520)*k^2"),
    ("pow(rho,k-3)*rho#1*rho#3*u#1^2", "(37/5760)*k + (-37/11520)*k^2"),
    ("pow(rho,k-3)*rho#1*u#1*u#2*rho#2", "(-53/1440)*k + (53/2880)*k^2"),
]


def _rename_gas(s, vt):
    u, r = vt.vars
    if (u, r) != ("u", "rho"):
        s = s.replace("rho", "\0").replace("u", u).replace("\0", r)
    return s


def gas_F2_contracted(vt):
    M = _gas_M(vt)
    p = vt.parse
    cache = {}
    t = ZERO
    for chains, pairs, coeff in _F2_CHAINS:
        e = p(coeff)
        for m, j in chains:
            e = e * _T_chain(vt, [2] * j + [1] * (m - j), 1, cache)
        for a, b in pairs:
            e = e * M[a][b]
        t = t + e
    return t


def gas_F2(vt):
    """ℱ₂: derived contracted part + the explicit D^-2 bracket with corrected coefficients."""
    p = vt.parse
    Dinv = 1 / _gas_D(vt)
    fix = sum((p(c) * p(_rename_gas(m, vt)) for m, c in _F2_BRACKET_FIX), ZERO)
    return gas_F2_contracted(vt) + gas_F2_bracket(vt) + fix * Dinv * Dinv


def gas_transform(order=2, names=("u_", "rho_"), dst=None):
    """u ↦ u + 𝒯₁𝒯₂(ε²ℱ₁ + ε⁴ℱ₂), ρ ↦ ρ + 𝒯₁𝒯₁(ε²ℱ₁ + ε⁴ℱ₂) as w = T(v)."""
    src = gas_vt(names)
    dst = dst or gas_vt()
    F = {}
    Fs = {2: gas_F1(src)}
    if order >= 4:
        Fs[4] = gas_F2(src)
    for m, f in Fs.items():
        F[m] = [dx(apply_vector_field(_T2(src), f, src), 1), dx(f, 2)]
    return MiuraTransform(src, dst, F)


def gas_leading(vt):
    u, r = vt.vars
    p = vt.parse
    P1 = {0: {(0, 1): [0, 1]}}
    P2 = {0: {(0, 0): [p(f"(k-1)*pow({r},k-2)*{r}#1"), p(f"2*pow({r},k-1)")],
              (0, 1): [p(f"{u}#1/k"), p(f"{u}")],
              (1, 1): [p(f"{r}#1/k"), p(f"2*{r}/k")]}}
    return _biv(vt, P1), _biv(vt, P2)


@lru_cache(maxsize=4)
def _gas_deformed(order):
    T = gas_transform(order)
    S = invert(T, order)
    src = T.src
    L1, L2 = gas_leading(src)
    lead = PoissonPencil(src, L1, L2, {"u_": 0.3, "rho_": 1.0, "k": 1.5}, "gas0")
    pen = apply_to_pencil(S, lead, order, basepoint={"u": 0.3, "rho": 1.0, "k": 1.5})
    pen.name = "gas"
    return pen, T, S


def gas(order=2):
    """Deformed gas pencil, obtained by pushing the leading pencil through the
    reducing transform (the deformed brackets are not written out in closed form)."""
    pen, T, S = _gas_deformed(order)
    vt = pen.vt
    h1, h2 = gas_hamiltonians(vt, order)
    kk = vt.p("k")
    H2 = {m: h * kk / (kk + 1) for m, h in h2.items()}
    return CatalogEntry("gas", {"k": "k"}, pen, [const(mpq(1, 24))] * 2, None,
                        gas_system(vt, order), h1, H2, T,
                        {"flow": "u_t = {H1,u}_1 = k/(k+1) {H2,u}_2",
                         "pencil": "derived: leading pencil pushed through the inverse transform"})


def gas_leading_pencil(vt=None, basepoint=None):
    vt = vt or gas_vt()
    L1, L2 = gas_leading(vt)
    return PoissonPencil(vt, L1, L2, basepoint or {"u": 0.3, "rho": 1.0, "k": 1.5}, "gas0")


_BUILDERS = {
    "kdv": kdv, "ch": ch, "kdv-ch": kdv_ch, "nls": nls, "two-ch": two_ch,
    "boussinesq": boussinesq, "ito": ito, "ito-variant": ito, "gas": gas,
}


def get_entry(name: str, params: dict | None = None) -> CatalogEntry:
    params = dict(params or {})
    if name not in _BUILDERS:
        raise KeyError(f"unknown catalog entry {name!r}; known: {', '.join(NAMES)}")
    if name == "gas" and "k" in params:
        kv = mpq(params.pop("k"))
        if kv in (0, -1):
            raise ExprError("k must differ from 0 and -1")
        raise ExprError("gas is built with symbolic k; substitute afterwards")
    return _BUILDERS[name](**params)
