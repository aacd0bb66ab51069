"""Local functionals, evolutionary vector fields and local bivectors.

A bivector ``{u^i(x), u^j(y)} = Σ_k A^{ij}_k(x) δ^{(k)}(x-y)`` is stored as the
matrix differential operator ``H^{ij} = Σ_k A^{ij}_k ∂^k`` (so the Hamiltonian
vector field of ``I`` is ``H δI/δu``).  Antisymmetry is ``H† = -H``.

The Jacobi identity is checked in the λ-bracket language: with
``{u_i λ u_j} = H^{ji}(λ)``, the residual

    {u_i λ {u_j μ u_k}} - {u_j μ {u_i λ u_k}} - {{u_i λ u_j} λ+μ u_k}

is a polynomial in λ, μ whose coefficient of λ^p μ^q is the coefficient of
δ^{(p)}(x-y) δ^{(q)}(x-z) of the trivector, all taken at x.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

from .expr import Expr, ExprError, ONE, ZERO, as_expr
from .jet import dx, jet_order, var_atoms, variational_derivative
from .parse import VarTable

__all__ = [
    "Operator", "LocalBivector", "DistributionRow", "LocalFunctional", "EvolutionaryVF",
    "TrivectorResidual", "normalize_row", "is_antisymmetric", "schouten_pf", "schouten_pv",
    "jacobi", "compatibility", "jacobi_pair", "hamiltonian_pair_check", "frechet",
    "functionals_equal",
]


DistributionRow = list  # [A_0, A_1, ...]: Σ A_k δ^{(k)}(x-y)


def _trim(row):
    row = list(row)
    while row and not row[-1]:
        row.pop()
    return row


def normalize_row(terms) -> list:
    """Express Σ f(y) δ^{(k)}(x-y) with x-coefficients.

    ``terms``: iterable of (f, k, at) where at is "x" or "y"."""
    out = {}
    for t in terms:
        f, k = as_expr(t[0]), t[1]
        at = t[2] if len(t) > 2 else "y"
        if at == "x":
            out[k] = out.get(k, ZERO) + f
            continue
        for m in range(k + 1):
            out[k - m] = out.get(k - m, ZERO) + dx(f, m) * comb(k, m)
    top = max(out) if out else -1
    return _trim([out.get(k, ZERO) for k in range(top + 1)])


class Operator:
    """n x m matrix of scalar differential operators {k: coefficient of ∂^k}."""

    __slots__ = ("n", "m", "a")

    def __init__(self, n, m=None, a=None):
        self.n = n
        self.m = n if m is None else m
        self.a = a if a is not None else [[{} for _ in range(self.m)] for _ in range(n)]

    @classmethod
    def identity(cls, n):
        op = cls(n)
        for i in range(n):
            op.a[i][i] = {0: ONE}
        return op

    @classmethod
    def from_rows(cls, rows):
        """rows[i][j] = DistributionRow [A_0, A_1, ...]."""
        n = len(rows)
        op = cls(n, len(rows[0]))
        for i in range(n):
            for j in range(op.m):
                op.a[i][j] = {k: as_expr(c) for k, c in enumerate(rows[i][j]) if as_expr(c)}
        return op

    @classmethod
    def multiplication(cls, mat):
        n = len(mat)
        op = cls(n, len(mat[0]))
        for i in range(n):
            for j in range(op.m):
                c = as_expr(mat[i][j])
                if c:
                    op.a[i][j] = {0: c}
        return op

    def copy(self):
        return Operator(self.n, self.m, [[dict(e) for e in r] for r in self.a])

    def row(self, i, j):
        d = self.a[i][j]
        if not d:
            return []
        return _trim([d.get(k, ZERO) for k in range(max(d) + 1)])

    def coeff(self, i, j, k):
        return self.a[i][j].get(k, ZERO)

    def order(self):
        return max((max(e) for r in self.a for e in r if e), default=-1)

    def is_zero(self):
        return not any(e for r in self.a for e in r)

    def __eq__(self, o):
        return isinstance(o, Operator) and (self - o).is_zero()

    def __add__(self, o):
        r = self.copy()
        for i in range(self.n):
            for j in range(self.m):
                d = r.a[i][j]
                for k, c in o.a[i][j].items():
                    s = d.get(k, ZERO) + c
                    if s:
                        d[k] = s
                    else:
                        d.pop(k, None)
        return r

    def __neg__(self):
        return Operator(self.n, self.m, [[{k: -c for k, c in e.items()} for e in r] for r in self.a])

    def __sub__(self, o):
        return self + (-o)

    def scale(self, s):
        s = as_expr(s)
        if not s:
            return Operator(self.n, self.m)
        out = Operator(self.n, self.m)
        for i in range(self.n):
            for j in range(self.m):
                d = {}
                for k, c in self.a[i][j].items():
                    v = c * s
                    if v:
                        d[k] = v
                out.a[i][j] = d
        return out

    def __mul__(self, o):
        if isinstance(o, Operator):
            return compose(self, o)
        return self.scale(o)

    __rmul__ = scale

    def adjoint(self):
        out = Operator(self.m, self.n)
        for i in range(self.n):
            for j in range(self.m):
                d = out.a[j][i]
                for k, c in self.a[i][j].items():
                    sgn = -1 if k % 2 else 1
                    for r in range(k + 1):
                        v = dx(c, r) * (sgn * comb(k, r))
                        if v:
                            s = d.get(k - r, ZERO) + v
                            if s:
                                d[k - r] = s
                            else:
                                d.pop(k - r, None)
        return out

    def apply(self, f):
        """Act on a column of Exprs."""
        out = []
        for i in range(self.n):
            s = ZERO
            for j in range(self.m):
                fj = as_expr(f[j])
                if not fj:
                    continue
                for k, c in self.a[i][j].items():
                    s = s + c * dx(fj, k)
            out.append(s)
        return out

    def map_coeffs(self, fn):
        out = Operator(self.n, self.m)
        for i in range(self.n):
            for j in range(self.m):
                d = {}
                for k, c in self.a[i][j].items():
                    v = fn(c)
                    if v:
                        d[k] = v
                out.a[i][j] = d
        return out

    def __repr__(self):
        rows = []
        for i in range(self.n):
            for j in range(self.m):
                for k in sorted(self.a[i][j]):
                    rows.append(f"[{i}][{j}] d^{k}: {self.a[i][j][k]}")
        return "Operator(\n  " + "\n  ".join(rows) + ")" if rows else "Operator(0)"


def _compose_scalar(A, B, out):
    for a, ca in A.items():
        for b, cb in B.items():
            for r in range(a + 1):
                v = dx(cb, r)
                if not v:
                    continue
                v = ca * v * comb(a, r)
                k = a - r + b
                s = out.get(k, ZERO) + v
                if s:
                    out[k] = s
                else:
                    out.pop(k, None)


def compose(A: Operator, B: Operator) -> Operator:
    if A.m != B.n:
        raise ExprError("operator shapes do not match")
    out = Operator(A.n, B.m)
    for i in range(A.n):
        for j in range(B.m):
            d = out.a[i][j]
            for l in range(A.m):
                if A.a[i][l] and B.a[l][j]:
                    _compose_scalar(A.a[i][l], B.a[l][j], d)
    return out


class LocalBivector(Operator):
    """Square operator viewed as a bivector over a VarTable."""

    __slots__ = ("vt",)

    def __init__(self, vt: VarTable, a=None):
        super().__init__(vt.n, vt.n, a)
        self.vt = vt

    @classmethod
    def of(cls, vt, op: Operator):
        return cls(vt, op.a)

    @classmethod
    def from_rows(cls, vt, rows):
        return cls.of(vt, Operator.from_rows(rows))

    def rows(self):
        return [[self.row(i, j) for j in range(self.n)] for i in range(self.n)]


@dataclass
class LocalFunctional:
    density: Expr
    vt: VarTable

    def gradient(self):
        return [variational_derivative(self.density, self.vt, i) for i in range(self.vt.n)]

    def __eq__(self, o):
        return functionals_equal(self, o)


def functionals_equal(a: LocalFunctional, b: LocalFunctional) -> bool:
    d = as_expr(a.density) - as_expr(b.density)
    return all(not variational_derivative(d, a.vt, i) for i in range(a.vt.n))


@dataclass
class EvolutionaryVF:
    comps: list
    vt: VarTable

    def apply(self, e: Expr) -> Expr:
        from .jet import apply_vector_field
        return apply_vector_field(self.comps, e, self.vt)

    def is_zero(self):
        return not any(as_expr(c) for c in self.comps)


def frechet(F, vt: VarTable) -> Operator:
    """Fréchet derivative (D_F)^i_j = Σ_m ∂F^i/∂u^{j,m} ∂^m."""
    n = len(F)
    op = Operator(n, vt.n)
    for i in range(n):
        f = as_expr(F[i])
        for a in var_atoms(f):
            ix = vt.index_of(a)
            if ix is None:
                continue
            j, m = ix
            d = f.diff(a)
            if d:
                op.a[i][j][m] = op.a[i][j].get(m, ZERO) + d
    return op


def is_antisymmetric(P: Operator):
    """(bool, residual operator P + P†)."""
    r = P + P.adjoint()
    return r.is_zero(), r


def schouten_pf(P: Operator, I, vt: VarTable | None = None) -> EvolutionaryVF:
    """Hamiltonian vector field ξ = P δI/δu."""
    if isinstance(I, LocalFunctional):
        vt = I.vt
        grad = I.gradient()
    else:
        grad = [variational_derivative(as_expr(I), vt, i) for i in range(vt.n)]
    return EvolutionaryVF(P.apply(grad), vt)


def schouten_pv(P: Operator, xi: EvolutionaryVF) -> Operator:
    """Lie derivative L_ξ P = ξ(P) - D_ξ P - P D_ξ†."""
    vt = xi.vt
    comps = [as_expr(c) for c in xi.comps]
    if not any(comps):
        return Operator(P.n)
    from .jet import apply_vector_field
    lie = P.map_coeffs(lambda c: apply_vector_field(comps, c, vt))
    D = frechet(comps, vt)
    return lie - compose(D, P) - compose(P, D.adjoint())


# --------------------------------------------------------------------------
# Jacobi identity via λ-brackets

def _acc(d, key, v):
    if not v:
        return
    s = d.get(key)
    s = v if s is None else s + v
    if s:
        d[key] = s
    else:
        d.pop(key, None)


def _rbracket(H: Operator, i: int, g: Expr, vt: VarTable):
    """{u_i λ g} as {power of λ: Expr}."""
    out = {}
    for a in var_atoms(g):
        ix = vt.index_of(a)
        if ix is None:
            continue
        l, n = ix
        Hli = H.a[l][i]
        if not Hli:
            continue
        dg = g.diff(a)
        if not dg:
            continue
        for p, A in Hli.items():
            for r in range(n + 1):
                dA = dx(A, r)
                if dA:
                    _acc(out, n - r + p, dg * dA * comb(n, r))
    return out


def _lbracket(H: Operator, f: dict, k: int, vt: VarTable):
    """{f ν u_k} with ν = λ + μ; f given as {power of λ: Expr}; returns {(p, q): Expr}."""
    out = {}
    for lp, fe in f.items():
        for a in var_atoms(fe):
            ix = vt.index_of(a)
            if ix is None:
                continue
            l, m = ix
            Hkl = H.a[k][l]
            if not Hkl:
                continue
            df = fe.diff(a)
            if not df:
                continue
            sgn = -1 if m % 2 else 1
            for q, A in Hkl.items():
                N = q + m
                for r in range(N + 1):
                    d = dx(df, r)
                    if not d:
                        continue
                    base = A * d * (sgn * comb(N, r))
                    s = N - r
                    for t in range(s + 1):
                        _acc(out, (lp + t, s - t), base * comb(s, t))
    return out


def _jac_component(Hout, Hin, i, j, k, vt):
    res = {}
    # {u_i λ {u_j μ u_k}}
    for q, A in Hin.a[k][j].items():
        for p, v in _rbracket(Hout, i, A, vt).items():
            _acc(res, (p, q), v)
    # - {u_j μ {u_i λ u_k}}
    for p, A in Hin.a[k][i].items():
        for q, v in _rbracket(Hout, j, A, vt).items():
            _acc(res, (p, q), -v)
    # - {{u_i λ u_j} λ+μ u_k}
    f = dict(Hin.a[j][i])
    for key, v in _lbracket(Hout, f, k, vt).items():
        _acc(res, key, -v)
    return res


@dataclass
class TrivectorResidual:
    """comps[(i, j, k)][(p, q)] = coefficient of δ^{(p)}(x-y) δ^{(q)}(x-z)."""

    comps: dict = field(default_factory=dict)

    def is_zero(self):
        return not any(self.comps.values())

    def add(self, o, sign=1):
        for key, d in o.comps.items():
            tgt = self.comps.setdefault(key, {})
            for pq, v in d.items():
                _acc(tgt, pq, v if sign == 1 else -v)
            if not tgt:
                del self.comps[key]
        return self

    def nonzero_terms(self):
        out = []
        for key in sorted(self.comps):
            for pq in sorted(self.comps[key]):
                out.append((key, pq, self.comps[key][pq]))
        return out

    def __bool__(self):
        return not self.is_zero()


def jacobi_pair(Hout: Operator, Hin: Operator, vt: VarTable) -> TrivectorResidual:
    out = {}
    n = vt.n
    for i in range(n):
        for j in range(n):
            for k in range(n):
                c = _jac_component(Hout, Hin, i, j, k, vt)
                if c:
                    out[(i, j, k)] = c
    return TrivectorResidual(out)


def _as_graded(P):
    if isinstance(P, dict):
        return P
    if hasattr(P, "orders"):
        return P.orders
    return {0: P}


def jacobi(P, vt: VarTable, order: int | None = None) -> dict:
    """Jacobi residual per ε-order: {m: TrivectorResidual}. P may be an operator or {m: operator}."""
    G = _as_graded(P)
    top = max(G) if order is None else order
    out = {}
    for m in range(top + 1):
        r = TrivectorResidual()
        for a in G:
            b = m - a
            if b in G:
                r.add(jacobi_pair(G[a], G[b], vt))
        out[m] = r
    return out


def compatibility(P1, P2, vt: VarTable, order: int | None = None) -> dict:
    """Mixed residual jac(P1, P2) + jac(P2, P1) per ε-order."""
    G1, G2 = _as_graded(P1), _as_graded(P2)
    top = max(max(G1), max(G2)) if order is None else order
    out = {}
    for m in range(top + 1):
        r = TrivectorResidual()
        for a in G1:
            b = m - a
            if b in G2:
                r.add(jacobi_pair(G1[a], G2[b], vt))
                r.add(jacobi_pair(G2[b], G1[a], vt))
        out[m] = r
    return out


def hamiltonian_pair_check(system, P1, H1, vt: VarTable, P2=None, H2=None, sign: int = -1,
                           order: int | None = None):
    """Check ξ = sign·P1 δH1 (= sign·P2 δH2) order by order.

    ``system``, ``H1``, ``H2``: {ε-order: components / density}.  With the
    default sign the convention is w_t = {H, w} = -P δH.
    Returns (ok, {order: residual list})."""
    S = {m: [as_expr(c) for c in v] for m, v in system.items()}
    top = max(S) if order is None else order
    checks = [(P1, H1)] + ([(P2, H2)] if P2 is not None else [])
    residuals = {}
    ok = True
    for P, H in checks:
        G = _as_graded(P)
        if H is None:
            raise ExprError("missing Hamiltonian")
        grads = {b: [variational_derivative(as_expr(h), vt, i) for i in range(vt.n)]
                 for b, h in H.items()}
        for m in range(top + 1):
            lhs = [ZERO] * vt.n
            for a, Pa in G.items():
                b = m - a
                if b in grads:
                    v = Pa.apply(grads[b])
                    lhs = [x + y for x, y in zip(lhs, v)]
            want = S.get(m, [ZERO] * vt.n)
            res = [w - sign * x for w, x in zip(want, lhs)]
            residuals.setdefault(m, []).append(res)
            if any(res):
                ok = False
    return ok, residuals
