"""Miura-type and quasi-Miura transformations.

A transform ``w^i = Σ_k ε^k F^i_k(v, v_x, ...)`` maps a source jet space (v) to a
target (w).  Objects written in w (pencils, flows) are pulled back to v.
Throughout, ε-series are dicts ``{order: value}``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import factorial

import numpy as np
from gmpy2 import mpq

from .expr import (
    _ATOMS, _FACTORS, Aff, Atom, Expr, ExprError, NotInvertible, ONE, ZERO,
    as_expr, atom_expr, const, declare_invertible, jet, log_atom, param,
)
from ._subs import compile_numeric, log_of
from .jet import apply_vector_field, dx, grade_of, jet_order, var_atoms
from .linsolve import LinearSystem
from .localgeom import LocalBivector, Operator, compose, frechet, schouten_pv
from .parse import VarTable
from .pencil import EpsBivector, PoissonPencil, _inverse

__all__ = [
    "MiuraTransform", "ReductionReport", "series_substitute", "apply_to_pencil",
    "pull_back_bivector", "pencil_residual", "apply_to_solution", "compose_transforms",
    "invert", "exp_vector_field", "flow_transform", "reduce_pencil", "reduce_system",
    "ansatz_basis", "read_transform", "write_transform", "first_nonzero",
]


class MiuraTransform:
    """w^i = Σ_k ε^k F[k][i] with F[k][i] Exprs over ``src`` variables."""

    def __init__(self, src: VarTable, dst: VarTable, F: dict, check: bool = True):
        self.src = src
        self.dst = dst
        self.F = {k: [as_expr(x) for x in comps] for k, comps in F.items()}
        if 0 not in self.F:
            self.F[0] = [src.x(i) for i in range(src.n)]
        if src.n != dst.n or any(len(c) != dst.n for c in self.F.values()):
            raise ExprError("component count mismatch")
        if check:
            self.validate()

    @classmethod
    def identity(cls, src, dst=None):
        return cls(src, dst or src, {0: [src.x(i) for i in range(src.n)]})

    @property
    def top(self):
        return max(self.F)

    def comp(self, k, i):
        return self.F[k][i] if k in self.F else ZERO

    def validate(self):
        for k, comps in self.F.items():
            for i, f in enumerate(comps):
                if not f:
                    continue
                g = grade_of(f)
                if not g.homogeneous or g.degree != k:
                    raise ExprError(f"F[{i}] at eps^{k} has {g}, expected degree {k}")
        J = self.phi0_jacobian()
        return J

    def phi0_jacobian(self):
        n = self.src.n
        return [[self.F[0][i].diff(self.src.var(j)) for j in range(n)] for i in range(n)]

    @property
    def is_polynomial(self):
        """Miura-type (no negative jet powers, no logs) vs quasi-Miura."""
        for comps in self.F.values():
            for f in comps:
                if f.den:
                    return False
                for m in f.t:
                    for a, e in m:
                        at = _ATOMS[a]
                        if at.kind == "log":
                            return False
                        if at.kind == "var" and at.order > 0 and (isinstance(e, Aff) or e < 0):
                            return False
        return True

    def jet_orders(self):
        return {k: max((jet_order(f, self.src) for f in comps), default=-1) for k, comps in self.F.items()}

    def respects_jet_bound(self):
        return all(m <= (3 * k) // 2 for k, m in self.jet_orders().items() if k > 0)

    def truncated(self, order):
        return MiuraTransform(self.src, self.dst, {k: v for k, v in self.F.items() if k <= order}, check=False)

    def is_identity(self):
        if any(any(f for f in c) for k, c in self.F.items() if k > 0):
            return False
        return all(self.F[0][i] == self.src.x(i) for i in range(self.src.n))

    def images(self, order):
        """ε-series images of target jet atoms, cached."""
        return _AtomImages(self, order)

    def __repr__(self):
        rows = [f"F[{i}].eps{k} = {f}" for k in sorted(self.F) for i, f in enumerate(self.F[k]) if f]
        return "MiuraTransform(" + "; ".join(rows) + ")"


# --------------------------------------------------------------------------
# ε-series arithmetic

def _smul(a: dict, b: dict, K: int) -> dict:
    out = {}
    for i, x in a.items():
        for j, y in b.items():
            if i + j <= K:
                v = x * y
                if v:
                    s = out.get(i + j, ZERO) + v
                    if s:
                        out[i + j] = s
                    else:
                        out.pop(i + j, None)
    return out


def _sadd(a: dict, b: dict, c=1):
    out = dict(a)
    for k, v in b.items():
        s = out.get(k, ZERO) + v * c
        if s:
            out[k] = s
        else:
            out.pop(k, None)
    return out


def _spow_int(s: dict, e: int, K: int) -> dict:
    r = {0: ONE}
    base = s
    while e:
        if e & 1:
            r = _smul(r, base, K)
        e >>= 1
        if e:
            base = _smul(base, base, K)
    return r


def _binom(e, j):
    """Generalized binomial coefficient as an Expr (e may be an Aff)."""
    ee = e.as_expr() if isinstance(e, Aff) else const(e)
    r = ONE
    for t in range(j):
        r = r * (ee - t)
    return r * mpq(1, factorial(j))


def _ensure_unit(e: Expr):
    """Mark a leading-order image invertible (it is the image of an invertible atom)."""
    if e.is_const():
        return
    num = e.numerator()
    if num.is_monomial():
        for m in num.t:
            for a, _ in m:
                _ATOMS[a].invertible = True
    else:
        declare_invertible(num)


def _spow(s: dict, e, K: int) -> dict:
    s0 = s.get(0, ZERO)
    if not isinstance(e, Aff) and e >= 0:
        return _spow_int(s, int(e), K)
    if not s0:
        raise ZeroDivisionError("negative power of a series with vanishing leading term")
    _ensure_unit(s0)
    lead = s0.pow_aff(e) if isinstance(e, Aff) else s0 ** e
    rest = {k: v for k, v in s.items() if k > 0}
    if not rest:
        return {0: lead}
    inv0 = 1 / s0
    d = {k: v * inv0 for k, v in rest.items()}
    out = {0: ONE}
    dj = {0: ONE}
    for j in range(1, K + 1):
        dj = _smul(dj, d, K)
        if not dj:
            break
        out = _sadd(out, dj, _binom(e, j))
    return {k: v * lead for k, v in out.items() if v}


def _slog(s: dict, K: int) -> dict:
    s0 = s.get(0, ZERO)
    _ensure_unit(s0)
    out = {0: log_of(s0)}
    rest = {k: v for k, v in s.items() if k > 0}
    if not rest:
        return out
    inv0 = 1 / s0
    d = {k: v * inv0 for k, v in rest.items()}
    dj = {0: ONE}
    for j in range(1, K + 1):
        dj = _smul(dj, d, K)
        if not dj:
            break
        out = _sadd(out, dj, mpq((-1) ** (j + 1), j))
    return out


class _AtomImages:
    def __init__(self, T: MiuraTransform, K: int):
        self.T, self.K = T, K
        self.cache = {}
        self.pcache = {}

    def atom(self, at: Atom) -> dict:
        r = self.cache.get(at.id)
        if r is not None:
            return r
        T = self.T
        if at.kind == "var":
            ix = T.dst.index_of(at)
            if ix is None:
                r = {0: atom_expr(at)}
            else:
                i, m = ix
                r = {}
                for k in range(self.K + 1):
                    f = T.comp(k, i)
                    if f:
                        v = dx(f, m)
                        if v:
                            r[k] = v
            if at.invertible and r.get(0):
                _ensure_unit(r[0])
        elif at.kind == "log":
            base = at.base
            bs = self.atom(base) if isinstance(base, Atom) else series_substitute(base.expr(), T, self.K, self)
            r = _slog(bs, self.K)
        else:
            r = {0: atom_expr(at)}
        self.cache[at.id] = r
        return r

    def power(self, aid, e):
        key = (aid, e)
        r = self.pcache.get(key)
        if r is None:
            r = _spow(self.atom(_ATOMS[aid]), e, self.K)
            self.pcache[key] = r
        return r


def series_substitute(e: Expr, T: MiuraTransform, K: int, images=None) -> dict:
    """ε-series of e(w) at w = T(v), truncated at ε^K."""
    e = as_expr(e)
    images = images or _AtomImages(T, K)
    out = {}
    for m, c in e.t.items():
        s = {0: const(c)}
        for aid, k in m:
            s = _smul(s, images.power(aid, k), K)
            if not s:
                break
        out = _sadd(out, s)
    for fid, k in e.den:
        fs = series_substitute(_FACTORS[fid].expr(), T, K, images)
        out = _smul(out, _spow(fs, -k, K), K)
    return out


# --------------------------------------------------------------------------
# operator series

def _ocomp(A: dict, B: dict, K: int) -> dict:
    out = {}
    for i, x in A.items():
        for j, y in B.items():
            if i + j <= K:
                c = compose(x, y)
                out[i + j] = out[i + j] + c if i + j in out else c
    return out


def _oadd(A: dict, B: dict, c=1) -> dict:
    out = dict(A)
    for k, v in B.items():
        v = v if c == 1 else v.scale(c)
        out[k] = out[k] + v if k in out else v
    return out


def frechet_series(T: MiuraTransform, K: int) -> dict:
    return {k: frechet(T.F[k], T.src) for k in T.F if k <= K}


def _inverse_series(D: dict, K: int) -> dict:
    D0 = D[0]
    if D0.order() > 0:
        raise NotInvertible("the leading map must be a point transformation")
    n = D0.n
    M = [[D0.coeff(i, j, 0) for j in range(n)] for i in range(n)]
    Minv = Operator.multiplication(_inverse(M))
    R = {k: v for k, v in D.items() if k > 0 and not v.is_zero()}
    if not R:
        return {0: Minv}
    X = {k: compose(Minv, v).scale(-1) for k, v in R.items()}   # -D0^{-1} R
    out = {0: Minv}
    term = {0: Minv}
    for _ in range(K):
        term = _ocomp(X, term, K)
        if not term:
            break
        out = _oadd(out, term)
    return out


def _substitute_operator(H: Operator, T, K, images) -> dict:
    out = {}
    for i in range(H.n):
        for j in range(H.m):
            for l, c in H.a[i][j].items():
                for k, v in series_substitute(c, T, K, images).items():
                    op = out.setdefault(k, Operator(H.n, H.m))
                    s = op.a[i][j].get(l, ZERO) + v
                    if s:
                        op.a[i][j][l] = s
                    else:
                        op.a[i][j].pop(l, None)
    return out


def pull_back_bivector(T: MiuraTransform, P: EpsBivector, order: int, _cache=None) -> EpsBivector:
    """D_T^{-1} P(T(v)) D_T^{-†}, truncated at ε^order."""
    cache = _cache if _cache is not None else {}
    images = cache.setdefault("images", _AtomImages(T, order))
    if "Dinv" not in cache:
        Dinv = _inverse_series(frechet_series(T, order), order)
        cache["Dinv"] = Dinv
        cache["DinvT"] = {k: v.adjoint() for k, v in Dinv.items()}
    Dinv, DinvT = cache["Dinv"], cache["DinvT"]
    Hs = {}
    for m, b in P.orders.items():
        if m > order:
            continue
        for k, op in _substitute_operator(b, T, order - m, images).items():
            Hs[m + k] = Hs[m + k] + op if m + k in Hs else op
    res = _ocomp(_ocomp(Dinv, Hs, order), DinvT, order)
    return EpsBivector(T.src, {m: LocalBivector.of(T.src, op) for m, op in res.items()}, check=False)


def _map_basepoint(T: MiuraTransform, bp: dict):
    out = {k: v for k, v in bp.items() if k in T.src.params}
    direct = all(T.F[0][i] == T.src.x(i) for i in range(T.src.n))
    if direct:
        for i in range(T.src.n):
            if T.dst.vars[i] in bp:
                out[T.src.vars[i]] = bp[T.dst.vars[i]]
        return out
    from scipy.optimize import fsolve
    target = np.array([bp[nm] for nm in T.dst.vars], dtype=float)
    pars = {k: v for k, v in bp.items() if k in T.src.params}

    def resid(x):
        pt = dict(pars, **{T.src.vars[i]: x[i] for i in range(T.src.n)})
        return [T.F[0][i].eval(pt) - target[i] for i in range(T.src.n)]
    x = fsolve(resid, target)
    out.update({T.src.vars[i]: float(x[i]) for i in range(T.src.n)})
    return out


def apply_to_pencil(T: MiuraTransform, p: PoissonPencil, order: int | None = None,
                    basepoint: dict | None = None) -> PoissonPencil:
    """Pull a pencil written in the target variables back to the source variables."""
    if order is None:
        order = max(p.order, T.top)
    if p.vt.vars != T.dst.vars:
        raise ExprError("pencil variables do not match the transform target")
    cache = {}
    P1 = pull_back_bivector(T, p.P1, order, cache)
    P2 = pull_back_bivector(T, p.P2, order, cache)
    bp = basepoint or _map_basepoint(T, p.basepoint)
    return PoissonPencil(T.src, P1, P2, bp, name=f"{p.name}*")


def _rename(e: Expr, src: VarTable, dst: VarTable):
    """Rewrite an Expr over dst variables in the src variables (same index)."""
    from ._subs import substitute
    top = max((jet_order(e, dst, i) for i in range(dst.n)), default=-1)
    b = {}
    for i in range(dst.n):
        for m in range(top + 1):
            b[dst.var(i, m)] = src.x(i, m)
            if dst.var(i, m).invertible:
                src.var(i, m).invertible = True
    return substitute(e, b) if b else e


def rename_bivector(P: EpsBivector, src: VarTable) -> EpsBivector:
    out = {}
    for m, b in P.orders.items():
        op = b.map_coeffs(lambda c: _rename(c, src, P.vt))
        out[m] = LocalBivector.of(src, op)
    return EpsBivector(src, out, check=False)


def first_nonzero(orders: dict, upto: int):
    """Smallest ε-order ≤ upto carrying a nonzero entry, else None."""
    for m in range(upto + 1):
        v = orders.get(m)
        if v is not None and not _is_zero(v):
            return m
    return None


def _is_zero(v):
    if isinstance(v, Operator):
        return v.is_zero()
    if isinstance(v, (list, tuple)):
        return not any(as_expr(x) for x in v)
    return not v


def pencil_residual(T: MiuraTransform, p: PoissonPencil, target=None, order=None):
    """Residual (transformed - target) per ε-order for both brackets.

    ``target`` defaults to the leading term of ``p`` written in the source variables."""
    order = order if order is not None else max(p.order, T.top)
    q = apply_to_pencil(T, p, order)
    if target is None:
        t1 = rename_bivector(p.P1.truncated(0), T.src)
        t2 = rename_bivector(p.P2.truncated(0), T.src)
    else:
        t1, t2 = target.P1, target.P2
    r1 = {m: q.P1[m] - t1[m] for m in range(order + 1)}
    r2 = {m: q.P2[m] - t2[m] for m in range(order + 1)}
    return r1, r2, q


# --------------------------------------------------------------------------
# numerics on sampled fields

def _spectral_jets(y, L, mmax, slope=0.0):
    """Derivatives 0..mmax of samples ``slope*x + periodic`` on [0, L)."""
    y = np.asarray(y, dtype=float)
    N = len(y)
    k = 2 * np.pi * np.fft.fftfreq(N, d=L / N)
    base = y - slope * (np.arange(N) * L / N) if slope else y
    yh = np.fft.fft(base)
    out = [y]
    for m in range(1, mmax + 1):
        d = np.real(np.fft.ifft((1j * k) ** m * yh))
        if m == 1:
            d = d + slope
        out.append(d)
    return out


def apply_to_solution(T: MiuraTransform, fields, eps: float, jets=None, L=None, order=None,
                      trends=None, params=None):
    """Evaluate w = Σ ε^k F_k(v) on samples.

    ``fields``: arrays (one per source variable) on a uniform grid of length ``L``,
    each periodic up to a linear trend given in ``trends``; or ``jets``:
    {atom name: array} supplied directly."""
    order = T.top if order is None else order
    need = max(max(T.jet_orders().values()), 0)
    env = dict(params or {})
    if jets is not None:
        env.update(jets)
        shape = np.shape(next(iter(jets.values())))
    else:
        trends = trends or [0.0] * len(fields)
        for i, y in enumerate(fields):
            for m, arr in enumerate(_spectral_jets(y, L, need, trends[i])):
                env[str(T.src.var(i, m))] = arr
        shape = np.shape(fields[0])
    out = []
    for i in range(T.dst.n):
        w = 0.0
        for k in sorted(T.F):
            if k > order or not T.F[k][i]:
                continue
            w = w + (eps ** k) * compile_numeric(T.F[k][i])(env)
        w = np.broadcast_to(w, shape).astype(float)
        # a denominator blow-up shows up as non-finite samples
        if not np.all(np.isfinite(w)):
            bad = np.flatnonzero(~np.isfinite(w))
            raise FloatingPointError(f"denominator vanishes on the grid near index {int(bad[0])}")
        out.append(w)
    return out


# --------------------------------------------------------------------------
# group structure

def compose_transforms(T1: MiuraTransform, T2: MiuraTransform, order: int | None = None) -> MiuraTransform:
    """w = T1(v), v = T2(s)  ->  w = (T1∘T2)(s)."""
    if T1.src.vars != T2.dst.vars:
        raise ExprError("T1 source must be T2 target")
    order = order if order is not None else T1.top + T2.top
    images = _AtomImages(T2, order)
    F = {}
    for k, comps in T1.F.items():
        for i, f in enumerate(comps):
            for j, v in series_substitute(f, T2, order - k, images).items():
                F.setdefault(k + j, [ZERO] * T1.dst.n)
                F[k + j][i] = F[k + j][i] + v
    return MiuraTransform(T2.src, T1.dst, F)


def invert(T: MiuraTransform, order: int | None = None) -> MiuraTransform:
    """Formal inverse v = S(w); the leading map must be affine-linear (or identity)."""
    order = order if order is not None else T.top
    n = T.src.n
    J = T.phi0_jacobian()
    if any(a.kind == "var" for row in J for x in row for a in x.atoms()):
        raise NotInvertible("leading map is not linear; its inverse is outside the ring")
    Ji = _inverse(J)
    shift = [T.F[0][i] - sum((J[i][j] * T.src.x(j) for j in range(n)), ZERO) for i in range(n)]
    # S_0(w) = J^{-1}(w - shift)
    S0 = [sum((Ji[i][j] * (T.dst.x(j) - shift[j]) for j in range(n)), ZERO) for i in range(n)]
    S = MiuraTransform(T.dst, T.src, {0: S0}, check=False)
    for k in range(1, order + 1):
        # order-k part of Σ_{j≥1} ε^j F_j(S(w))
        G = [ZERO] * n
        images = _AtomImages(S, k)
        for j in range(1, k + 1):
            for i in range(n):
                f = T.comp(j, i)
                if f:
                    G[i] = G[i] + series_substitute(f, S, k - j, images).get(k - j, ZERO)
        S.F[k] = [-sum((Ji[i][j] * G[j] for j in range(n)), ZERO) for i in range(n)]
    S.validate()
    return S


def flow_transform(xi, vt_src: VarTable, vt_dst: VarTable, k: int, order: int, sign: int = 1) -> MiuraTransform:
    """w = exp(sign·ε^k ξ) v = Σ_l (sign ε^k)^l/l! ξ^l(v), truncated at ε^order."""
    n = vt_src.n
    comps = [as_expr(c) for c in (xi.comps if hasattr(xi, "comps") else xi)]
    F = {0: [vt_src.x(i) for i in range(n)]}
    cur = [vt_src.x(i) for i in range(n)]
    l = 1
    while l * k <= order:
        cur = [apply_vector_field(comps, c, vt_src) for c in cur]
        F[l * k] = [c * mpq(sign ** l, factorial(l)) for c in cur]
        l += 1
    return MiuraTransform(vt_src, vt_dst, F)


def exp_vector_field(xi, p: PoissonPencil, eps_power: int, order: int) -> PoissonPencil:
    """P ↦ Σ_l (-ε^k)^l/l! (L_ξ)^l P, truncated at ε^order."""
    from .localgeom import EvolutionaryVF
    if not hasattr(xi, "vt"):
        xi = EvolutionaryVF([as_expr(c) for c in xi], p.vt)

    def act(P: EpsBivector):
        out = {}
        for m, b in P.orders.items():
            cur = b
            l = 0
            while m + l * eps_power <= order:
                key = m + l * eps_power
                term = cur.scale(mpq((-1) ** l, factorial(l))) if l else cur
                out[key] = out[key] + term if key in out else term
                if xi.is_zero():
                    break
                cur = schouten_pv(cur, xi)
                l += 1
        return EpsBivector(p.vt, {m: LocalBivector.of(p.vt, op) for m, op in out.items()}, check=False)

    return PoissonPencil(p.vt, act(p.P1), act(p.P2), p.basepoint, name=f"{p.name}~")


# --------------------------------------------------------------------------
# reduction

@dataclass
class AnsatzConfig:
    jet: int | None = None          # jet order bound (default floor(3k/2))
    den: int | None = None          # power of v_x allowed in denominators (default 3*order)
    logs: bool = True
    coord_degree: int = 1           # max total power of undifferentiated coordinates
    coord_negative: bool = False


def _partitions(total, parts_min, parts_max):
    """Multisets of integers in [parts_min, parts_max] summing to total."""
    out = []

    def rec(rem, lo, acc):
        if rem == 0:
            out.append(tuple(acc))
            return
        for p in range(lo, min(rem, parts_max) + 1):
            acc.append(p)
            rec(rem - p, p, acc)
            acc.pop()
    rec(total, parts_min, [])
    return out


def ansatz_basis(vt: VarTable, k: int, cfg: AnsatzConfig, order: int):
    """Degree-k monomials of the extended almost-differential-polynomial ring."""
    n = vt.n
    J = cfg.jet if cfg.jet is not None else (3 * k) // 2
    N = cfg.den if cfg.den is not None else 3 * order
    for i in range(n):
        vt.var(i, 1).invertible = True
    # coordinate monomials
    coords = [ONE]
    for d in range(1, cfg.coord_degree + 1):
        for combo in combinations_with_replacement(range(n), d):
            m = ONE
            for i in combo:
                m = m * vt.x(i)
            coords.append(m)
    if cfg.coord_negative:
        for i in range(n):
            if vt.var(i).invertible:
                coords.append(1 / vt.x(i))
    # higher-jet parts: for each variable a partition; v_x powers distribute the rest
    high = []
    maxdeg = k + N * n
    for s in range(0, maxdeg + 1):
        for parts in _per_variable_partitions(n, s, 2, J):
            high.append((s, parts))
    out = []
    for s, parts in high:
        rest = k - s
        if rest < -N * n:
            continue
        for xp in _first_jet_powers(n, rest, N):
            m = ONE
            for i, ps in enumerate(parts):
                for p in ps:
                    m = m * vt.x(i, p)
            for i, e in enumerate(xp):
                if e:
                    m = m * vt.x(i, 1) ** e
            out.append(m)
    basis = []
    for c in coords:
        for m in out:
            basis.append(c * m)
    if cfg.logs and k >= 0:
        logs = [atom_expr(log_atom(vt.var(i, 1))) for i in range(n)]
        for L in logs:
            for c in coords:
                for m in out:
                    if grade_of(m).degree == k:
                        basis.append(c * m * L)
    # stable, simple-first ordering: fewer atoms, no logs, low denominators
    def key(e):
        (mono, _), = e.t.items()
        haslog = any(_ATOMS[a].kind == "log" for a, _ in mono)
        neg = -sum(x for a, x in mono if not isinstance(x, Aff) and x < 0)
        return (haslog, neg, len(mono), str(e))
    basis = sorted(set(basis), key=key)
    return basis


def _per_variable_partitions(n, total, lo, hi):
    out = []
    for split in _compositions(total, n):
        per = [_partitions(t, lo, hi) for t in split]
        if any(not p for p in per):
            continue
        acc = [[]]
        for p in per:
            acc = [a + [q] for a in acc for q in p]
        out.extend(tuple(a) for a in acc)
    return out


def _compositions(total, n):
    if n == 1:
        return [(total,)]
    return [(a,) + rest for a in range(total + 1) for rest in _compositions(total - a, n - 1)]


def _first_jet_powers(n, total, N):
    """Exponent vectors e_i ≥ -N of first jets summing to total."""
    if n == 1:
        return [(total,)] if total >= -N else []
    out = []
    for a in range(-N, total + N * (n - 1) + 1):
        for rest in _first_jet_powers(n - 1, total - a, N):
            out.append((a,) + rest)
    return out


@dataclass
class StepReport:
    k: int
    nbasis: int
    rank: int
    kernel_dim: int
    consistent: bool
    zero_admissible: bool
    residual: tuple            # (R1_k, R2_k) operators before the step
    solution: list             # F_k components
    system: LinearSystem = field(repr=False, default=None)
    basis: list = field(repr=False, default=None)
    uses_logs: bool = False

    def contains(self, comps, strict=True):
        """True iff the given F_k solves this step's linear equations."""
        coords = _decompose(comps, self.basis, self._n)
        if coords is None:
            return False
        for v, (row, rhs) in self.system.pivots.items():
            s = ZERO
            for j, c in row.items():
                x = coords.get(j)
                if x:
                    s = s + as_expr(c) * x
            if s != rhs:
                return False
        return True


def _decompose(comps, basis, n):
    """Coordinates of (F^1..F^n) in the ansatz basis (unknown index = i*len(basis)+b)."""
    lookup = {}
    for b, e in enumerate(basis):
        (mono, c), = e.t.items()
        lookup[mono] = (b, c)
    out = {}
    for i, f in enumerate(comps):
        f = as_expr(f)
        if f.den:
            return None
        for mono, c in f.t.items():
            key = tuple((a, x) for a, x in mono if _ATOMS[a].kind != "param")
            pm = tuple((a, x) for a, x in mono if _ATOMS[a].kind == "param")
            if key not in lookup:
                return None
            b, bc = lookup[key]
            ix = i * len(basis) + b
            out[ix] = out.get(ix, ZERO) + Expr({pm: c / bc}, ())
    return out


@dataclass
class ReductionReport:
    achieved: int
    transform: MiuraTransform
    steps: list
    residuals: dict            # order -> (R1, R2) of the final transform
    ok: bool

    def step(self, k):
        return next(s for s in self.steps if s.k == k)


def _equations(ops, rhs_ops, nunk):
    """Rows for Σ_u x_u ops[u] = rhs (all Operators), grouped by jet monomial."""
    groups = {}

    def feed(op, u):
        for i in range(op.n):
            for j in range(op.m):
                for l, c in op.a[i][j].items():
                    if c.den:
                        raise ExprError("ansatz produced a non-polynomial coefficient")
                    for mono, v in c.t.items():
                        key = (i, j, l, tuple((a, x) for a, x in mono if _ATOMS[a].kind != "param"))
                        pm = tuple((a, x) for a, x in mono if _ATOMS[a].kind == "param")
                        g = groups.setdefault(key, [{}, ZERO])
                        term = Expr({pm: v}, ())
                        if u is None:
                            g[1] = g[1] + term
                        else:
                            g[0][u] = g[0].get(u, ZERO) + term
    for u, op in ops:
        feed(op, u)
    for op in rhs_ops:
        feed(op, None)
    return groups


def reduce_pencil(p: PoissonPencil, order: int, cfg: AnsatzConfig | None = None,
                  src_names=None) -> ReductionReport:
    """Find w = v + Σ ε^k F_k(v) pulling p back to its leading term, order by order."""
    cfg = cfg or AnsatzConfig()
    src_names = src_names or [nm + "_" for nm in p.vt.vars]
    src = VarTable(src_names, p.vt.params)
    n = src.n
    for i in range(n):
        if p.vt.var(i).invertible:
            src.var(i).invertible = True
    P01 = rename_bivector(p.P1.truncated(0), src)[0]
    P02 = rename_bivector(p.P2.truncated(0), src)[0]
    from .localgeom import EvolutionaryVF
    T = MiuraTransform(src, p.vt, {0: [src.x(i) for i in range(n)]})
    steps = []
    for k in range(1, order + 1):
        q = apply_to_pencil(T, p, k)
        R1, R2 = q.P1[k], q.P2[k]
        zero_ok = R1.is_zero() and R2.is_zero()
        basis = ansatz_basis(src, k, cfg, order)
        nb = len(basis)
        ops = []
        for i in range(n):
            for b, m in enumerate(basis):
                comps = [ZERO] * n
                comps[i] = m
                xi = EvolutionaryVF(comps, src)
                u = i * nb + b
                ops.append((u, _Pair(schouten_pv(P01, xi), schouten_pv(P02, xi))))
        # L_F P0_a = -R_a for a = 1, 2 ; stack both brackets
        ls = LinearSystem(n * nb)
        for a in (0, 1):
            groups = _equations([(u, pr[a]) for u, pr in ops], [(R1, R2)[a].scale(-1)], n * nb)
            for key, (row, rhs) in groups.items():
                ls.add(row, rhs, tag=(a,) + key[:3])
        consistent = ls.consistent
        if not consistent:
            steps.append(StepReport(k, nb, ls.rank, n * nb - ls.rank, False, zero_ok, (R1, R2),
                                    [], ls, basis))
            steps[-1]._n = n
            return ReductionReport(k - 1, T, steps, {}, False)
        if zero_ok:
            sol = [ZERO] * n
        else:
            x = ls.particular()
            sol = [sum((x[i * nb + b] * basis[b] for b in range(nb) if x[i * nb + b]), ZERO)
                   for i in range(n)]
        st = StepReport(k, nb, ls.rank, n * nb - ls.rank, True, zero_ok, (R1, R2), sol, ls, basis,
                        uses_logs=any(a.kind == "log" for f in sol for a in f.atoms()))
        st._n = n
        steps.append(st)
        if any(sol):
            T.F[k] = sol
    q = apply_to_pencil(T, p, order)
    res = {m: (q.P1[m] - (P01 if m == 0 else LocalBivector(src)),
               q.P2[m] - (P02 if m == 0 else LocalBivector(src))) for m in range(order + 1)}
    ok = all(a.is_zero() and b.is_zero() for a, b in res.values())
    if not T.respects_jet_bound():
        raise ExprError("transform violates the jet-order bound")
    return ReductionReport(order if ok else -1, T, steps, res, ok)


class _Pair(tuple):
    def __new__(cls, a, b):
        return super().__new__(cls, (a, b))


def reduce_system(system: dict, T: MiuraTransform, order: int, leading=None):
    """Residual w_t - ξ(w) under w = T(v), v_t = X0(v).

    ``system``: {m: [ξ^i_m(w)]} over T.dst; ``leading``: X0 over T.src (defaults to
    ξ_0 renamed).  Returns {m: [residual components]}."""
    n = T.src.n
    if leading is None:
        leading = [_rename(as_expr(c), T.src, T.dst) for c in system[0]]
    D = frechet_series(T, order)
    lhs = {}
    for k, op in D.items():
        lhs[k] = op.apply(leading)
    images = _AtomImages(T, order)
    rhs = {}
    for m, comps in system.items():
        if m > order:
            continue
        for i, c in enumerate(comps):
            for k, v in series_substitute(as_expr(c), T, order - m, images).items():
                rhs.setdefault(m + k, [ZERO] * n)
                rhs[m + k][i] = rhs[m + k][i] + v
    out = {}
    for m in range(order + 1):
        a = lhs.get(m, [ZERO] * n)
        b = rhs.get(m, [ZERO] * n)
        out[m] = [a[i] - b[i] for i in range(n)]
    return out


# --------------------------------------------------------------------------
# transform files

_LINE = re.compile(r'^\s*F\[(\d+)\]\.eps(\d+)\s*=\s*"(.*)"\s*$')


def write_transform(T: MiuraTransform) -> str:
    lines = ["[source]", "vars = " + ", ".join(T.src.vars)]
    if T.src.params:
        lines.append("params = " + ", ".join(T.src.params))
    lines += ["", "[target]", "vars = " + ", ".join(T.dst.vars), "", "[transform]"]
    for k in sorted(T.F):
        for i, f in enumerate(T.F[k]):
            if f:
                lines.append(f'F[{i}].eps{k} = "{f}"')
    return "\n".join(lines) + "\n"


def read_transform(text: str, src: VarTable | None = None, dst: VarTable | None = None) -> MiuraTransform:
    from .parse import ParseError
    sec = None
    info = {"source": {}, "target": {}}
    entries = []
    for ln_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0] if raw.lstrip().startswith("#") else raw
        line = line.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            sec = line[1:-1].strip()
            continue
        if sec in ("source", "target"):
            key, _, val = line.partition("=")
            info[sec][key.strip()] = [s.strip() for s in val.split(",") if s.strip()]
        elif sec == "transform":
            m = _LINE.match(raw)
            if not m:
                raise ParseError(f"line {ln_no}: malformed transform entry")
            entries.append((int(m.group(1)), int(m.group(2)), m.group(3), ln_no))
        else:
            raise ParseError(f"line {ln_no}: entry outside a known section")
    if src is None:
        src = VarTable(info["source"].get("vars", []), info["source"].get("params", []))
    if dst is None:
        dst = VarTable(info["target"].get("vars", src.vars), src.params)
    for i in range(src.n):
        src.var(i, 1).invertible = True
    F = {}
    for i, k, s, ln_no in entries:
        if i >= src.n:
            raise ParseError(f"line {ln_no}: component index {i} out of range")
        try:
            e = src.parse(s)
        except ParseError as ex:
            raise ParseError(f"line {ln_no}: {ex}") from None
        F.setdefault(k, [ZERO] * src.n)
        F[k][i] = F[k][i] + e
    return MiuraTransform(src, dst, F)
