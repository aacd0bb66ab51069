"""Differential polynomials on the jet space: grading, total derivative,
Euler operator and the Helmholtz (Volterra) criterion."""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

from gmpy2 import mpq

from .expr import (
    _ATOMS, _FACTORS, Aff, Atom, Expr, ExprError, ONE, ZERO, _acc, _mmul, _mset,
    as_expr, atom_expr, const, jet,
)
from .parse import VarTable

__all__ = [
    "total_x_derivative", "dx", "grade_of", "GradeReport", "variational_derivative",
    "is_variational", "apply_vector_field", "jet_order", "atom_degree", "expr_degree",
]


def var_atoms(e: Expr):
    """Jet atoms e depends on, including those inside logs and denominators."""
    out = set()
    for a in e.atoms():
        if a.kind == "var":
            out.add(a)
        elif a.kind == "log":
            b = a.base
            out |= {b} if isinstance(b, Atom) else {x for x in b.atoms() if x.kind == "var"}
    return sorted(out, key=lambda a: a.sortkey)


def _generic_dx(e: Expr) -> Expr:
    r = ZERO
    for a in var_atoms(e):
        if a.kind == "var":
            d = e.diff(a)
            if d:
                r = r + d * atom_expr(a.next())
    return r


def total_x_derivative(e: Expr) -> Expr:
    """∂_x e = Σ u^{i,s+1} ∂e/∂u^{i,s}."""
    e = as_expr(e)
    if e.den:
        return _generic_dx(e)
    out = {}
    for m, c in e.t.items():
        for aid, k in m:
            at = _ATOMS[aid]
            if at.kind == "var":
                nxt = at.next().id
                nm = _mmul(_mset(m, aid, k - 1), ((nxt, 1),))
                if isinstance(k, Aff):
                    if k.q:
                        _acc(out, nm, c * k.q)
                    if k.p:
                        _acc(out, _mmul(nm, ((k.par.id, 1),)), c * k.p)
                else:
                    _acc(out, nm, c * k)
            elif at.kind == "log":
                base = at.base
                if not isinstance(base, Atom):
                    return _generic_dx(e)
                nm = _mset(m, aid, k - 1)
                nm = _mmul(nm, ((base.id, -1), (base.next().id, 1)))
                _acc(out, nm, c * k)
    return Expr({m: v for m, v in out.items() if v}, ())


_DX_CACHE: dict = {}


def dx(e: Expr, n: int = 1) -> Expr:
    """n-fold total derivative (memoized)."""
    if n == 0:
        return e
    key = (e, n)
    r = _DX_CACHE.get(key)
    if r is None:
        r = total_x_derivative(dx(e, n - 1))
        if len(_DX_CACHE) > 200000:
            _DX_CACHE.clear()
        _DX_CACHE[key] = r
    return r


# --------------------------------------------------------------------------
# grading

def atom_degree(a: Atom, k):
    if a.kind == "var":
        if a.order == 0:
            return 0
        if isinstance(k, Aff):
            raise ExprError(f"symbolic power of the jet {a} has no degree")
        return a.order * k
    return 0


def _factor_degree(f):
    degs = {sum(atom_degree(_ATOMS[a], k) for a, k in m) for m in f.poly}
    if len(degs) != 1:
        raise ExprError(f"denominator {f.skey} is not homogeneous")
    return degs.pop()


@dataclass(frozen=True)
class GradeReport:
    homogeneous: bool
    degree: int | None
    degrees: tuple

    def __str__(self):
        if self.homogeneous:
            return f"homogeneous of degree {self.degree}"
        return "inhomogeneous " + "{" + ",".join(map(str, self.degrees)) + "}"


def grade_of(e: Expr) -> GradeReport:
    """Degrees of the monomials; deg u^{i,m} = m, coordinates/params/logs 0."""
    e = as_expr(e)
    shift = sum(_factor_degree(_FACTORS[f]) * k for f, k in e.den)
    degs = sorted({sum(atom_degree(_ATOMS[a], k) for a, k in m) - shift for m in e.t})
    if not degs:
        return GradeReport(True, None, ())
    if len(degs) == 1:
        return GradeReport(True, degs[0], tuple(degs))
    return GradeReport(False, None, tuple(degs))


def expr_degree(e: Expr):
    """Degree of a homogeneous expression (None for zero); error when inhomogeneous."""
    g = grade_of(e)
    if not g.homogeneous:
        raise ExprError(f"expression is not homogeneous: {g}")
    return g.degree


# --------------------------------------------------------------------------
# variational calculus

def jet_order(e: Expr, vt: VarTable, i: int | None = None) -> int:
    """Highest jet order of variable i (or of any variable) appearing in e; -1 if none."""
    best = -1
    for b in var_atoms(e):
        ix = vt.index_of(b)
        if ix is not None and (i is None or ix[0] == i):
            best = max(best, ix[1])
    return best


def variational_derivative(h: Expr, vt: VarTable, i: int) -> Expr:
    """δh/δu^i = Σ_s (-∂_x)^s ∂h/∂u^{i,s}."""
    h = as_expr(h)
    top = jet_order(h, vt, i)
    r = ZERO
    for s in range(top, -1, -1):
        # Horner-like accumulation: r = ∂h/∂u^{i,s} - ∂_x r
        r = h.diff(vt.var(i, s)) - total_x_derivative(r)
    return r


def apply_vector_field(xi, e: Expr, vt: VarTable) -> Expr:
    """Prolonged evolutionary derivation Σ ∂e/∂u^{i,m} ∂_x^m ξ^i."""
    e = as_expr(e)
    r = ZERO
    for a in var_atoms(e):
        ix = vt.index_of(a)
        if ix is None:
            continue
        i, m = ix
        if not xi[i]:
            continue
        d = e.diff(a)
        if d:
            r = r + d * dx(as_expr(xi[i]), m)
    return r


def _helmholtz_residuals(psi, vt):
    n = vt.n
    out = []
    for i in range(n):
        for j in range(n):
            ti = jet_order(psi[j], vt, i)
            sj = jet_order(psi[i], vt, j)
            top = max(ti, sj)
            for s in range(top + 1):
                lhs = psi[i].diff(vt.var(j, s))
                rhs = ZERO
                for t in range(s, ti + 1):
                    d = psi[j].diff(vt.var(i, t))
                    if d:
                        rhs = rhs + dx(d, t - s) * ((-1) ** t * comb(t, s))
                res = lhs - rhs
                if res:
                    out.append(((i, j, s), res))
    return out


def _weight(m, vt):
    w = 0
    for aid, k in m:
        at = _ATOMS[aid]
        if at.kind == "var" and at.name in vt.vars:
            w = w + k
        elif at.kind == "log":
            return None
    return w


def is_variational(psi, vt: VarTable):
    """Helmholtz criterion. Returns (bool, witness density or None, residuals)."""
    psi = [as_expr(p) for p in psi]
    if len(psi) != vt.n:
        raise ExprError("need one component per dependent variable")
    res = _helmholtz_residuals(psi, vt)
    if res:
        return False, None, res
    # homotopy reconstruction, weight by weight
    h = ZERO
    for i in range(vt.n):
        p = psi[i]
        if p.den:
            return True, None, []
        groups = {}
        for m, c in p.t.items():
            w = _weight(m, vt)
            if w is None:
                return True, None, []
            groups.setdefault(w, {})[m] = c
        for w, t in groups.items():
            w1 = w + 1
            wexpr = w1.as_expr() if isinstance(w1, Aff) else const(w1)
            if not wexpr:
                return True, None, []
            h = h + Expr(t, ()) * vt.x(i) / wexpr
    for i in range(vt.n):
        if variational_derivative(h, vt, i) != psi[i]:
            return True, None, []
    return True, h, []
