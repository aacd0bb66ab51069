"""ε-graded Poisson pencils: leading metrics, flatness, canonical coordinates,
central invariants and changes of representative."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from gmpy2 import mpq

from .expr import (
    Aff, Expr, ExprError, ONE, ZERO, _ATOMS, as_expr, atom_expr, const,
    declare_invertible, param,
)
from .jet import dx, grade_of, total_x_derivative
from .linsolve import solve
from .localgeom import LocalBivector, Operator, compose, is_antisymmetric
from .parse import VarTable

__all__ = [
    "GradingError", "EpsBivector", "PoissonPencil", "DiagonalData", "CentralInvariants",
    "leading_metrics", "flatness_check", "canonical_coordinates", "central_invariants",
    "sl2_change", "semisimple_check", "express_as_function", "diagonal_form_check",
    "bivector_from", "read_pencil", "write_pencil",
]


class GradingError(ExprError):
    pass


class EpsBivector:
    """Bivector per ε-order; the coefficient of ε^m δ^{(l)} has degree m - l + 1."""

    def __init__(self, vt: VarTable, orders: dict, check: bool = True):
        self.vt = vt
        self.orders = {m: (b if isinstance(b, LocalBivector) else LocalBivector.of(vt, b))
                       for m, b in orders.items() if not b.is_zero()}
        if 0 not in self.orders:
            self.orders[0] = LocalBivector(vt)
        if check:
            self.validate_grading()

    def validate_grading(self):
        for m, b in self.orders.items():
            for i in range(b.n):
                for j in range(b.n):
                    for l, c in b.a[i][j].items():
                        g = grade_of(c)
                        if not g.homogeneous or (g.degree is not None and g.degree != m - l + 1):
                            raise GradingError(
                                f"eps^{m} coefficient of d^{l} in [{i}][{j}] has degree {g}, "
                                f"expected {m - l + 1}")

    @property
    def top(self):
        return max(self.orders)

    def __getitem__(self, m):
        return self.orders.get(m, LocalBivector(self.vt))

    def leading(self):
        return self[0]

    def combine(self, a, other, b):
        """a*self + b*other."""
        out = {}
        for m in set(self.orders) | set(other.orders):
            out[m] = self[m].scale(a) + other[m].scale(b)
        return EpsBivector(self.vt, out, check=False)

    def truncated(self, order):
        return EpsBivector(self.vt, {m: b for m, b in self.orders.items() if m <= order}, check=False)

    def as_dict(self):
        return dict(self.orders)

    def is_antisymmetric(self):
        return all(is_antisymmetric(b)[0] for b in self.orders.values())

    def __eq__(self, o):
        ms = set(self.orders) | set(o.orders)
        return all((self[m] - o[m]).is_zero() for m in ms)


@dataclass
class PoissonPencil:
    vt: VarTable
    P1: EpsBivector
    P2: EpsBivector
    basepoint: dict
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.basepoint:
            raise ExprError("a base point is mandatory")

    @property
    def order(self):
        return max(self.P1.top, self.P2.top)

    def point(self):
        """Base point keyed by atom names (variables and parameters)."""
        return dict(self.basepoint)

    def evalf(self, e):
        return as_expr(e).eval(self.basepoint)


# --------------------------------------------------------------------------
# leading term

@dataclass
class LeadingData:
    g1: list
    g2: list
    Q1: list   # Q[i][j][k]
    Q2: list


def _hydro(b: LocalBivector, vt):
    n = vt.n
    g = [[b.coeff(i, j, 1) for j in range(n)] for i in range(n)]
    Q = [[[ZERO] * n for _ in range(n)] for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if any(k > 1 for k in b.a[i][j]):
                raise ExprError("leading term is not of hydrodynamic type")
            if any(a.kind == "var" and a.order > 0 for a in g[i][j].atoms()):
                raise ExprError("leading metric depends on derivatives")
            A0 = b.coeff(i, j, 0)
            rest = A0
            for k in range(n):
                q = A0.diff(vt.var(k, 1))
                Q[i][j][k] = q
                rest = rest - q * vt.x(k, 1)
            if rest:
                raise ExprError("δ-coefficient of the leading term is not linear in first derivatives")
    return g, Q


def leading_metrics(p: PoissonPencil) -> LeadingData:
    if "lead" in p._cache:
        return p._cache["lead"]
    g1, Q1 = _hydro(p.P1[0], p.vt)
    g2, Q2 = _hydro(p.P2[0], p.vt)
    d = _det(g1)
    if abs(p.evalf(d)) < 1e-12:
        raise ExprError("det g1 vanishes at the base point")
    _ensure_invertible(d)
    out = LeadingData(g1, g2, Q1, Q2)
    p._cache["lead"] = out
    return out


def _det(M):
    n = len(M)
    if n == 1:
        return M[0][0]
    if n == 2:
        return M[0][0] * M[1][1] - M[0][1] * M[1][0]
    s = ZERO
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in M[1:]]
        s = s + M[0][j] * _det(minor) * (-1 if j % 2 else 1)
    return s


def _inverse(M):
    n = len(M)
    d = _det(M)
    if not d:
        raise ExprError("singular matrix")
    if not d.is_monomial() and not d.is_const():
        num = d.numerator()
        if not num.is_monomial():
            declare_invertible(num)
    di = 1 / d
    if n == 1:
        return [[di]]
    adj = [[ZERO] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [row[:i] + row[i + 1:] for k, row in enumerate(M) if k != j]
            adj[i][j] = _det(minor) * (-1 if (i + j) % 2 else 1) if n > 1 else ONE
    return [[adj[i][j] * di for j in range(n)] for i in range(n)]


def flatness_check(g, vt: VarTable):
    """Riemann tensor of the contravariant metric g^{ij}(w). Returns (flat, residuals)."""
    n = len(g)
    if n == 1:
        return True, {}
    gl = _inverse(g)          # covariant metric
    w = [vt.var(i) for i in range(n)]
    dg = [[[gl[i][j].diff(w[k]) for k in range(n)] for j in range(n)] for i in range(n)]
    G = [[[ZERO] * n for _ in range(n)] for _ in range(n)]  # G[k][i][j] = Γ^k_ij
    for k in range(n):
        for i in range(n):
            for j in range(i, n):
                s = ZERO
                for l in range(n):
                    if g[k][l]:
                        s = s + g[k][l] * (dg[l][j][i] + dg[l][i][j] - dg[i][j][l])
                G[k][i][j] = G[k][j][i] = s * mpq(1, 2)
    res = {}
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(k + 1, n):
                    r = G[i][l][j].diff(w[k]) - G[i][k][j].diff(w[l])
                    for m in range(n):
                        r = r + G[i][k][m] * G[m][l][j] - G[i][l][m] * G[m][k][j]
                    if r:
                        res[(i, j, k, l)] = r
    return not res, res


# --------------------------------------------------------------------------
# canonical coordinates

@dataclass
class DiagonalData:
    u: list          # canonical coordinates as Exprs in w
    f: list          # f^i (as Exprs in w)
    J: list          # ∂u^i/∂w^k
    order_values: list


def _sqrt(e: Expr):
    """Exact square root of a monomial (coefficient a rational square)."""
    if not e:
        return ZERO
    if not e.is_monomial():
        return None
    (m, c), = e.t.items()
    if c < 0:
        return None
    import gmpy2
    a, ea = gmpy2.iroot(gmpy2.mpz(c.numerator), 2)
    b, eb = gmpy2.iroot(gmpy2.mpz(c.denominator), 2)
    if not (ea and eb):
        return None
    try:
        mono = Expr({m: mpq(1)}, ()).pow_aff(Aff.make(mpq(1, 2)))
    except ExprError:
        return None
    return mono * mpq(a, b)


def _char_roots(g1, g2):
    n = len(g1)
    if n == 1:
        return [g2[0][0] / g1[0][0]]
    if n == 2:
        a = _det(g1)
        c = _det(g2)
        b = -(g1[0][0] * g2[1][1] + g1[1][1] * g2[0][0] - g1[0][1] * g2[1][0] - g1[1][0] * g2[0][1])
        disc = b * b - a * c * 4
        s = _sqrt(disc)
        if s is None:
            return None
        return [(-b + s) / (a * 2), (-b - s) / (a * 2)]
    return None


def _check_root(g1, g2, u):
    M = [[g2[i][j] - u * g1[i][j] for j in range(len(g1))] for i in range(len(g1))]
    return not _det(M)


def canonical_coordinates(p: PoissonPencil, roots=None) -> DiagonalData:
    """Roots of det(g2 - λ g1) as closed-form Exprs, sorted by value at the base point."""
    if roots is None and "diag" in p._cache:
        return p._cache["diag"]
    L = leading_metrics(p)
    n = p.vt.n
    if roots is None:
        roots = _char_roots(L.g1, L.g2)
        if roots is None:
            raise ExprError("canonical coordinates are not expressible in closed form; "
                            "supply the roots explicitly")
    else:
        roots = [as_expr(r) for r in roots]
        for r in roots:
            if not _check_root(L.g1, L.g2, r):
                raise ExprError(f"{r} is not a root of det(g2 - λ g1)")
    vals = [p.evalf(r) for r in roots]
    if len(set(np.round(vals, 12))) < n:
        raise ExprError("repeated roots at the base point: pencil is not semisimple")
    order = np.argsort(vals, kind="stable")
    roots = [roots[i] for i in order]
    vals = [vals[i] for i in order]
    J = [[roots[i].diff(p.vt.var(k)) for k in range(n)] for i in range(n)]
    F1 = _congruence(J, L.g1)
    F2 = _congruence(J, L.g2)
    for i in range(n):
        for j in range(n):
            if i != j and (F1[i][j] or F2[i][j]):
                raise ExprError("canonical coordinates fail to diagonalize the leading metrics")
        if F2[i][i] - roots[i] * F1[i][i]:
            raise ExprError("g2 is not u^i f^i in canonical coordinates")
    d = DiagonalData(roots, [F1[i][i] for i in range(n)], J, vals)
    p._cache["diag"] = d
    return d


def _congruence(J, g):
    n = len(J)
    out = [[ZERO] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            s = ZERO
            for k in range(n):
                if not J[i][k]:
                    continue
                for l in range(n):
                    if J[j][l] and g[k][l]:
                        s = s + J[i][k] * J[j][l] * g[k][l]
            out[i][j] = s
    return out


def _ensure_invertible(e: Expr):
    if not e:
        raise ZeroDivisionError("expected a nonvanishing expression")
    num = e.numerator()
    if not num.is_monomial() and not num.is_const():
        declare_invertible(num)
    else:
        for a in num.atoms():
            if a.kind == "var":
                a.invertible = True


@dataclass
class CentralInvariants:
    c: list
    u: list
    P: list   # [P1, P2] matrices in canonical coordinates
    Q: list

    def as_functions(self, names=None):
        return [express_as_function(ci, ui) for ci, ui in zip(self.c, self.u)]


def central_invariants(p: PoissonPencil, roots=None) -> CentralInvariants:
    d = canonical_coordinates(p, roots)
    n = p.vt.n
    A12 = [[[p.P1[1].coeff(i, j, 2) for j in range(n)] for i in range(n)],
           [[p.P2[1].coeff(i, j, 2) for j in range(n)] for i in range(n)]]
    A23 = [[[p.P1[2].coeff(i, j, 3) for j in range(n)] for i in range(n)],
           [[p.P2[2].coeff(i, j, 3) for j in range(n)] for i in range(n)]]
    P = [_congruence(d.J, A12[a]) for a in range(2)]
    Q = [_congruence(d.J, A23[a]) for a in range(2)]
    u, f = d.u, d.f
    for fi in f:
        _ensure_invertible(fi)
    cs = []
    for i in range(n):
        s = Q[1][i][i] - u[i] * Q[0][i][i]
        for k in range(n):
            if k == i:
                continue
            num = P[1][k][i] - u[i] * P[0][k][i]
            if not num:
                continue
            diff = u[k] - u[i]
            _ensure_invertible(diff)
            s = s + num * num / (f[k] * diff)
        cs.append(s / (f[i] * f[i] * 3))
    # each c_i must depend on u^i only
    for i in range(n):
        for k, l in combinations(range(n), 2):
            wk, wl = p.vt.var(k), p.vt.var(l)
            minor = cs[i].diff(wk) * u[i].diff(wl) - cs[i].diff(wl) * u[i].diff(wk)
            if minor:
                raise ExprError(f"central invariant c_{i + 1} depends on other canonical coordinates")
    return CentralInvariants(cs, u, P, Q)


def express_as_function(c: Expr, u: Expr, lo: int = -4, hi: int = 4, symbol: str = "u"):
    """Find φ with c = φ(u), φ a Laurent polynomial of degrees lo..hi; returns φ(symbol) or None.

    Polynomials are tried first; negative powers only when u can be inverted."""
    if c.is_const():
        return c
    out = _express(c, u, 0, hi, symbol)
    if out is None and lo < 0:
        try:
            u.inv()
        except ExprError:
            return None
        out = _express(c, u, lo, hi, symbol)
    return out


def _express(c, u, lo, hi, symbol):
    from .expr import jet
    names = [f"_phi{k - lo}" for k in range(lo, hi + 1)]
    unknowns = [atom_expr(param(nm)) for nm in names]
    trial = c
    for a, k in zip(unknowns, range(lo, hi + 1)):
        trial = trial - a * (u ** k)
    ids = {param(nm).id: ix for ix, nm in enumerate(names)}
    groups = {}
    for m, v in trial.t.items():
        key = tuple((a, e) for a, e in m if _ATOMS[a].kind != "param")
        rest = tuple((a, e) for a, e in m if _ATOMS[a].kind == "param")
        unk = [a for a, _ in rest if a in ids]
        g = groups.setdefault(key, [{}, ZERO])
        if unk:
            a = unk[0]
            coeff_m = tuple((b, e) for b, e in rest if b != a)
            g[0][ids[a]] = g[0].get(ids[a], ZERO) + Expr({coeff_m: v}, ())
        else:
            g[1] = g[1] - Expr({rest: v}, ())
    ls = solve([(row, rhs) for row, rhs in groups.values()], len(names))
    if not ls.consistent:
        return None
    x = ls.particular()
    sym = jet(symbol)
    if lo < 0:
        sym.invertible = True
    us = atom_expr(sym)
    out = ZERO
    for ix, k in enumerate(range(lo, hi + 1)):
        if x[ix]:
            out = out + x[ix] * us ** k
    if c - out.subs({sym: u}):
        return None
    return out


def diagonal_form_check(p: PoissonPencil):
    """Residuals of the Q-coefficients in canonical coordinates against the diagonal-form formulas."""
    d = canonical_coordinates(p)
    L = leading_metrics(p)
    vt = p.vt
    n = vt.n
    Jop = Operator.multiplication(d.J)
    Jinv = _inverse(d.J)
    ux = [sum((d.J[i][k] * vt.x(k, 1) for k in range(n)), ZERO) for i in range(n)]
    out = {}
    for a, (P, fs) in enumerate(((p.P1[0], d.f), (p.P2[0], [d.u[i] * d.f[i] for i in range(n)]))):
        H = compose(compose(Jop, P), Jop.adjoint())
        for i in range(n):
            for j in range(n):
                # ∂f^i/∂u^j in w-variables
                def fu(i_, j_):
                    return sum((d.f[i_].diff(vt.var(l)) * Jinv[l][j_] for l in range(n)), ZERO)
                fj = [[fu(x, y) for y in range(n)] for x in range(n)]
                if a == 0:
                    Aij = (d.f[i] / d.f[j] * fj[j][i] * ux[j] - d.f[j] / d.f[i] * fj[i][j] * ux[i]) * mpq(1, 2)
                else:
                    Aij = (d.u[i] * d.f[i] / d.f[j] * fj[j][i] * ux[j]
                           - d.u[j] * d.f[j] / d.f[i] * fj[i][j] * ux[i]) * mpq(1, 2)
                expect = Aij
                if i == j:
                    expect = expect + total_x_derivative(fs[i]) * mpq(1, 2)
                r = H.coeff(i, j, 0) - expect
                if r:
                    out[(a, i, j)] = r
    return out


# --------------------------------------------------------------------------
# representatives

def sl2_change(p: PoissonPencil, a, b, c, d, roots=None):
    """New pencil (c P2 + d P1, a P2 + b P1) and a report comparing the
    recomputed central invariants with the transformation rule."""
    a, b, c, d = (mpq(x) for x in (a, b, c, d))
    det = a * d - b * c
    if det == 0:
        raise ExprError("degenerate matrix")
    P1 = p.P2.combine(c, p.P1, d)
    P2 = p.P2.combine(a, p.P1, b)
    q = PoissonPencil(p.vt, P1, P2, p.basepoint, name=f"{p.name}@sl2")
    old = central_invariants(p, roots)
    for ui in old.u:
        den = ui * c + d
        if den and not den.is_const():
            _ensure_invertible(den)
    new_roots = None
    if roots is not None or p.vt.n > 2:
        new_roots = [(ui * a + b) / (ui * c + d) for ui in old.u]
    new = central_invariants(q, new_roots)
    report = []
    for i, ui in enumerate(old.u):
        ut = (ui * a + b) / (ui * c + d)
        j = next((j for j, v in enumerate(new.u) if v == ut), None)
        if j is None:
            report.append((i, None, False))
            continue
        predicted = (ui * c + d) / det * old.c[i]
        report.append((i, j, new.c[j] == predicted))
    return q, report, old, new


def semisimple_check(p: PoissonPencil, basepoint: dict | None = None, margin: float = 1e-9):
    """Numerical roots of det(g2 - λ g1) at the base point: (bool, roots)."""
    L = leading_metrics(p)
    pt = basepoint or p.basepoint
    g1 = np.array([[x.eval(pt) for x in row] for row in L.g1], dtype=float)
    g2 = np.array([[x.eval(pt) for x in row] for row in L.g2], dtype=float)
    lam = np.linalg.eigvals(np.linalg.solve(g1, g2))
    lam = np.sort_complex(lam)
    real = np.all(np.abs(lam.imag) < margin)
    r = np.sort(lam.real)
    distinct = len(r) < 2 or np.min(np.diff(r)) > margin
    return bool(real and distinct), r


def bivector_from(vt: VarTable, entries: dict, complete: bool = True) -> LocalBivector:
    """Build a bivector from {(i, j): [A_0, A_1, ...]}; with ``complete`` the
    missing transposed entries are filled in by antisymmetry."""
    b = LocalBivector(vt)
    for (i, j), row in entries.items():
        b.a[i][j] = {k: as_expr(c) for k, c in enumerate(row) if as_expr(c)}
    if complete:
        for (i, j) in list(entries):
            if i != j and (j, i) not in entries:
                sub = Operator(1, 1, [[dict(b.a[i][j])]]).adjoint()
                b.a[j][i] = {k: -c for k, c in sub.a[0][0].items()}
    return b


# --------------------------------------------------------------------------
# pencil file format

_ENTRY = re.compile(r'^\s*P\[(\d+)\]\[(\d+)\]\.eps(\d+)\.d(\d+)\s*=\s*"(.*)"\s*$')


def _used_invertibles(p: PoissonPencil):
    """Jet atoms that occur with a negative or symbolic exponent, or as a
    single-atom denominator factor; compound factors are not emitted."""
    from .expr import _FACTORS
    names = set()
    for P in (p.P1, p.P2):
        for b in P.orders.values():
            for row in b.a:
                for cell in row:
                    for c in cell.values():
                        for m in c.t:
                            for aid, e in m:
                                if isinstance(e, Aff) or e < 0:
                                    names.add(_ATOMS[aid])
                        for fid, _ in c.den:
                            at = _FACTORS[fid].atoms()
                            if len(at) == 1 and len(_FACTORS[fid].poly) == 1:
                                names |= at
    return sorted(str(a) for a in names if a.kind == "var")


def write_pencil(p: PoissonPencil) -> str:
    """Serialize to the sectioned text format; entries are emitted for every
    nonzero coefficient (no antisymmetric completion on read)."""
    vt = p.vt
    out = ["[vars]", ", ".join(vt.vars)]
    inv = _used_invertibles(p)
    if inv:
        out.append("invertible = " + ", ".join(inv))
    for s in vt.invertible_exprs:
        out.append(f'invertible_expr = "{s}"')
    if p.name:
        out += ["", "[meta]", f"name = {p.name}"]
    out += ["", "[params]"] + list(vt.params)
    out += ["", "[basepoint]"] + [f"{k} = {float(v)!r}" for k, v in p.basepoint.items()]
    for tag, P in (("bracket1", p.P1), ("bracket2", p.P2)):
        out += ["", f"[{tag}]"]
        for m in sorted(P.orders):
            b = P.orders[m]
            for i in range(b.n):
                for j in range(b.n):
                    for l in sorted(b.a[i][j]):
                        c = b.a[i][j][l]
                        if c:
                            out.append(f'P[{i}][{j}].eps{m}.d{l} = "{c}"')
    return "\n".join(out) + "\n"


def read_pencil(text: str, check: bool = True) -> PoissonPencil:
    """Inverse of :func:`write_pencil`.  Errors carry the 1-based line number."""
    from .parse import ParseError
    sec = None
    names, params, inv, inv_exprs, meta = [], [], [], [], {}
    bp, raw = {}, {"bracket1": [], "bracket2": []}
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if s.startswith("[") and s.endswith("]"):
            sec = s[1:-1].strip()
            if sec not in ("vars", "params", "basepoint", "bracket1", "bracket2", "meta"):
                raise ParseError(f"line {no}: unknown section [{sec}]")
            continue
        if sec == "vars":
            if s.startswith("invertible_expr"):
                inv_exprs.append(s.partition("=")[2].strip().strip('"'))
            elif s.startswith("invertible"):
                inv += [t.strip() for t in s.partition("=")[2].split(",") if t.strip()]
            else:
                names += [t.strip() for t in s.split(",") if t.strip()]
        elif sec == "params":
            params += [t.strip() for t in s.split(",") if t.strip()]
        elif sec in ("basepoint", "meta"):
            k, eq, v = s.partition("=")
            if not eq:
                raise ParseError(f"line {no}: expected key = value")
            if sec == "meta":
                meta[k.strip()] = v.strip()
                continue
            try:
                bp[k.strip()] = float(v)
            except ValueError:
                raise ParseError(f"line {no}: bad number {v.strip()!r}") from None
        elif sec in raw:
            m = _ENTRY.match(line)
            if not m:
                raise ParseError(f"line {no}: malformed bracket entry")
            raw[sec].append((no, *map(int, m.groups()[:4]), m.group(5)))
        else:
            raise ParseError(f"line {no}: entry outside a section")
    try:
        vt = VarTable(names, params, inv, inv_exprs)
    except ExprError as ex:
        raise ParseError(f"[vars]/[params]: {ex}") from None
    for k in bp:
        if k not in vt.vars and k not in vt.params:
            raise ParseError(f"[basepoint]: unknown name {k!r}")
    biv = {}
    for tag, rows in raw.items():
        orders = {}
        for no, i, j, m, l, src in rows:
            if i >= vt.n or j >= vt.n:
                raise ParseError(f"line {no}: index out of range")
            try:
                e = vt.parse(src)
            except ParseError as ex:
                raise ParseError(f"line {no}: {ex}") from None
            b = orders.setdefault(m, LocalBivector(vt))
            cell = b.a[i][j]
            cell[l] = cell.get(l, ZERO) + e
        biv[tag] = EpsBivector(vt, orders, check=check)
    return PoissonPencil(vt, biv["bracket1"], biv["bracket2"], bp, meta.get("name", ""))
