"""Exact expression kernel.

An ``Expr`` is a Laurent polynomial with exact rational coefficients in a set
of interned atoms (jet variables, parameters, logarithms), divided by a
product of registered irreducible composite factors such as
``u#1^2 - k*pow(rho,k-2)*rho#1^2`` or ``u1 - u2``.  Exponents are integers or
affine expressions ``p*k + q`` in a single parameter; the latter play the
role of symbolic powers ``pow(base, exponent)``.

Normal forms are canonical: numerators are cancelled against the denominator
factors by exact division, so two expressions are equal iff their
``(terms, den)`` pairs are identical.
"""
from __future__ import annotations

import math
from fractions import Fraction

from gmpy2 import mpq

__all__ = [
    "Atom", "Aff", "Factor", "Expr", "ExprError", "NotInvertible",
    "jet", "param", "log_atom", "const", "atom_expr", "declare_invertible",
    "factor_of", "as_expr", "ZERO", "ONE",
]


class ExprError(ValueError):
    pass


class NotInvertible(ExprError):
    pass


# --------------------------------------------------------------------------
# atoms

_ATOMS: list = []
_ATOM_KEYS: dict = {}
_KIND_RANK = {"param": 0, "var": 1, "log": 2}


class Atom:
    """Interned symbol. Compare by identity."""

    __slots__ = ("id", "kind", "name", "order", "base", "invertible", "sortkey")

    def __str__(self):
        if self.kind == "var":
            return self.name if self.order == 0 else f"{self.name}#{self.order}"
        if self.kind == "param":
            return self.name
        return f"log({_base_str(self.base)})"

    __repr__ = __str__

    @property
    def is_jet(self):
        return self.kind == "var"

    def next(self):
        """The jet atom one x-derivative higher."""
        if self.kind != "var":
            raise ExprError(f"{self} is not a jet variable")
        return jet(self.name, self.order + 1)


def _base_str(b):
    return str(b) if isinstance(b, Atom) else f"({b.expr()})"


def _intern(key, kind, name, order, base, sortkey, invertible):
    a = _ATOM_KEYS.get(key)
    if a is not None:
        return a
    a = Atom()
    a.id = len(_ATOMS)
    a.kind, a.name, a.order, a.base = kind, name, order, base
    a.invertible = invertible
    a.sortkey = sortkey
    _ATOMS.append(a)
    _ATOM_KEYS[key] = a
    return a


_RESERVED = {"eps", "epsilon", "log", "pow"}


def jet(name: str, order: int = 0) -> Atom:
    """Coordinate (order 0) or jet variable ``name#order``."""
    if name in _RESERVED:
        raise ExprError(f"'{name}' is reserved")
    if order < 0:
        raise ExprError("negative jet order")
    return _intern(("var", name, order), "var", name, order, None,
                   (1, name, order), order == 1)


def param(name: str) -> Atom:
    if name in _RESERVED:
        raise ExprError(f"'{name}' is reserved")
    return _intern(("param", name), "param", name, 0, None, (0, name, 0), True)


def log_atom(base) -> Atom:
    """log of a jet atom or of a registered factor."""
    if isinstance(base, Atom):
        if base.kind != "var":
            raise ExprError("log base must be a jet variable or a factor")
        key = ("log", "a", base.id)
        sk = (2, "a") + base.sortkey
    elif isinstance(base, Factor):
        key = ("log", "f", base.id)
        sk = (2, "f", base.skey)
    else:
        raise ExprError("bad log base")
    return _intern(key, "log", None, 0, base, sk, False)


# --------------------------------------------------------------------------
# exponents

class Aff:
    """Non-integer exponent ``p*par + q`` (``par`` may be None when p == 0)."""

    __slots__ = ("q", "p", "par")

    def __init__(self, q, p=0, par=None):
        self.q = mpq(q)
        self.p = mpq(p)
        self.par = par if self.p != 0 else None

    @staticmethod
    def make(q, p=0, par=None):
        q, p = mpq(q), mpq(p)
        if p == 0 and q.denominator == 1:
            return int(q)
        return Aff(q, p, par)

    def _parts(self, o):
        if isinstance(o, Aff):
            if self.par is not None and o.par is not None and self.par is not o.par:
                raise ExprError("exponents in two different parameters")
            return o.q, o.p, o.par or self.par
        return mpq(o), mpq(0), self.par

    def __add__(self, o):
        q, p, par = self._parts(o)
        return Aff.make(self.q + q, self.p + p, par)

    __radd__ = __add__

    def __neg__(self):
        return Aff.make(-self.q, -self.p, self.par)

    def __sub__(self, o):
        return self + (-o)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if isinstance(o, Aff):
            if o.p != 0 and self.p != 0:
                raise ExprError("exponent product is not affine")
            if self.p == 0:
                return Aff.make(o.q * self.q, o.p * self.q, o.par)
            return Aff.make(self.q * o.q, self.p * o.q, self.par)
        o = mpq(o)
        return Aff.make(self.q * o, self.p * o, self.par)

    __rmul__ = __mul__

    def __eq__(self, o):
        if isinstance(o, Aff):
            return self.q == o.q and self.p == o.p and self.par is o.par
        return False

    def __hash__(self):
        return hash((self.q, self.p, self.par.id if self.par else -1))

    def __lt__(self, o):
        return _ekey(self) < _ekey(o)

    def as_expr(self):
        e = const(self.q)
        if self.p:
            e = e + const(self.p) * atom_expr(self.par)
        return e

    def __str__(self):
        parts = []
        if self.p:
            if self.p == 1:
                parts.append(str(self.par))
            elif self.p == -1:
                parts.append(f"-{self.par}")
            else:
                parts.append(f"{_qstr(self.p)}*{self.par}")
        if self.q or not parts:
            parts.append(_qstr(self.q))
        s = "+".join(parts).replace("+-", "-")
        return s

    __repr__ = __str__


def _ekey(e):
    if isinstance(e, Aff):
        return (e.p, e.q)
    return (mpq(0), mpq(e))


def _epair(e):
    if isinstance(e, Aff):
        return e.p, e.q, e.par
    return mpq(0), mpq(e), None


def _qstr(q):
    q = mpq(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


# --------------------------------------------------------------------------
# monomials: sorted tuples of (atom_id, exponent)

def _mmul(a, b):
    if not a:
        return b
    if not b:
        return a
    d = dict(a)
    for k, e in b:
        o = d.get(k)
        if o is None:
            d[k] = e
        else:
            s = o + e
            if s == 0 and not isinstance(s, Aff):
                del d[k]
            else:
                d[k] = s
    return tuple(sorted(d.items()))


def _mpow(m, k):
    return tuple((a, e * k) for a, e in m) if k else ()


def _minv(m):
    return tuple((a, -e) for a, e in m)


def _mset(m, aid, e):
    d = dict(m)
    if e == 0 and not isinstance(e, Aff):
        d.pop(aid, None)
    else:
        d[aid] = e
    return tuple(sorted(d.items()))


def _mexp(m, aid):
    for a, e in m:
        if a == aid:
            return e
    return 0


def _mono_sortkey(m):
    return tuple((_ATOMS[a].sortkey, _ekey(e)) for a, e in
                 sorted(m, key=lambda t: _ATOMS[t[0]].sortkey))


# --------------------------------------------------------------------------
# polynomial helpers on dicts mono -> mpq

def _padd_into(r, p, c=1):
    if c == 1:
        for m, v in p.items():
            s = r.get(m)
            if s is None:
                r[m] = v
            else:
                s = s + v
                if s:
                    r[m] = s
                else:
                    del r[m]
    else:
        for m, v in p.items():
            v = v * c
            s = r.get(m)
            if s is None:
                r[m] = v
            else:
                s = s + v
                if s:
                    r[m] = s
                else:
                    del r[m]
    return r


def _pmul(a, b):
    if len(a) > len(b):
        a, b = b, a
    r = {}
    get = r.get
    for ma, ca in a.items():
        for mb, cb in b.items():
            m = _mmul(ma, mb)
            v = ca * cb
            s = get(m)
            if s is None:
                r[m] = v
            else:
                s = s + v
                if s:
                    r[m] = s
                else:
                    del r[m]
    return r


def _pscale(p, c, m=()):
    if m:
        return {_mmul(k, m): v * c for k, v in p.items()}
    return {k: v * c for k, v in p.items()}


def _ppow(p, k):
    r = {(): mpq(1)}
    b = p
    while k:
        if k & 1:
            r = _pmul(r, b)
        k >>= 1
        if k:
            b = _pmul(b, b)
    return r


# --------------------------------------------------------------------------
# composite factors

_FACTORS: list = []
_FACTOR_KEYS: dict = {}
_FACTORIZE_CACHE: dict = {}
_ALLOWED: set = set()


class Factor:
    """Irreducible composite polynomial, monic in its main atom."""

    __slots__ = ("id", "poly", "main", "deg", "skey", "_pows", "_d", "allowed")

    def expr(self):
        return Expr(dict(self.poly), ())

    def power(self, k):
        p = self._pows.get(k)
        if p is None:
            p = _ppow(self.poly, k)
            self._pows[k] = p
        return p

    def diff(self, a):
        d = self._d.get(a.id)
        if d is None:
            d = self.expr().diff(a)
            self._d[a.id] = d
        return d

    def atoms(self):
        s = set()
        for m in self.poly:
            for a, _ in m:
                s.add(_ATOMS[a])
        return s

    def __repr__(self):
        return f"Factor({self.skey})"


def _unit_normalize(p):
    """Strip the monomial content and rational scale; returns (unit_mono, unit_coef, poly)."""
    shift = {}
    atoms = set()
    for m in p:
        for a, _ in m:
            atoms.add(a)
    for a in atoms:
        ps, qs = [], []
        for m in p:
            pp, qq, par = _epair(_mexp(m, a))
            ps.append(pp)
            qs.append(qq)
        pmin, qmin = min(ps), min(qs)
        if pmin or qmin:
            par = None
            for m in p:
                e = _mexp(m, a)
                if isinstance(e, Aff) and e.par is not None:
                    par = e.par
            shift[a] = Aff.make(qmin, pmin, par)
    unit = tuple(sorted(shift.items()))
    if unit:
        inv = _minv(unit)
        p = {_mmul(m, inv): c for m, c in p.items()}
    first = min(p, key=_mono_sortkey)
    c = p[first]
    if c != 1:
        p = {m: v / c for m, v in p.items()}
    return unit, c, p


def _pkey(p):
    return tuple(sorted(((_mono_sortkey(m), v) for m, v in p.items())))


def _register_factor(p):
    """Register an irreducible (already unit-normalized) polynomial; returns (Factor, unit_mono, coef)
    with p == coef * unit_mono * F."""
    key = _pkey(p)
    f = _FACTOR_KEYS.get(key)
    if f is not None:
        lm, lc = _UNITS[f.id]
        return f, lm, lc
    # choose main atom: integer exponents only, single-monomial invertible lead coefficient
    cands = []
    atoms = set()
    for m in p:
        for a, _ in m:
            atoms.add(a)
    for a in atoms:
        ok = True
        deg = 0
        for m in p:
            e = _mexp(m, a)
            if isinstance(e, Aff) or e < 0:
                ok = False
                break
            deg = max(deg, e)
        if not ok or deg == 0:
            continue
        lead = [m for m in p if _mexp(m, a) == deg]
        if len(lead) != 1:
            continue
        lm = _mset(lead[0], a, 0)
        if any(not _ATOMS[b].invertible for b, _ in lm):
            continue
        cands.append(((len(lm), -_KIND_RANK[_ATOMS[a].kind], _ATOMS[a].sortkey), a, deg, lead[0], lm))
    if not cands:
        raise NotInvertible("cannot register denominator: no variable with monomial leading coefficient")
    cands.sort()
    _, main, deg, lead, lm = cands[0]
    lc = p[lead]
    inv = _minv(lm)
    poly = {_mmul(m, inv): v / lc for m, v in p.items()}
    f = Factor()
    f.id = len(_FACTORS)
    f.poly = poly
    f.main = main
    f.deg = deg
    f.skey = str(Expr(dict(poly), ()))
    f._pows = {}
    f._d = {}
    f.allowed = all(_ATOMS[a].kind == "param" for a in atoms)
    # p == lc * lm * poly
    _FACTORS.append(f)
    _FACTOR_KEYS[key] = f
    _UNITS[f.id] = (lm, lc)
    return f, lm, lc


_UNITS: dict = {}


def _factorize(p):
    """Factor a nonzero polynomial dict: returns (coef, mono, [(Factor, k), ...])."""
    key = _pkey(p)
    hit = _FACTORIZE_CACHE.get(key)
    if hit is not None:
        return hit
    if len(p) == 1:
        (m, c), = p.items()
        res = (c, m, [])
        _FACTORIZE_CACHE[key] = res
        return res
    unit, c0, q = _unit_normalize(p)
    pieces = _sympy_factor(q)
    coef = c0
    mono = unit
    facs = {}
    for piece, k in pieces:
        if len(piece) == 1:
            (m, c), = piece.items()
            coef *= c ** k
            mono = _mmul(mono, _mpow(m, k))
            continue
        u2, c2, r = _unit_normalize(piece)
        f, lm, lc = _register_factor(r)
        coef *= (c2 * lc) ** k
        mono = _mmul(mono, _mpow(_mmul(u2, lm), k))
        facs[f] = facs.get(f, 0) + k
    res = (coef, mono, sorted(facs.items(), key=lambda t: t[0].id))
    _FACTORIZE_CACHE[key] = res
    return res


def _sympy_factor(p):
    """Factor a polynomial (nonnegative exponents after unit normalization) with sympy.

    Symbolic exponents are mapped to auxiliary symbols; when that is not
    possible the polynomial is treated as irreducible."""
    import sympy

    atoms = sorted({a for m in p for a, _ in m})
    gens = []
    plan = {}
    for a in atoms:
        qs, ps = set(), set()
        par = None
        for m in p:
            pp, qq, pr = _epair(_mexp(m, a))
            qs.add(qq)
            ps.add(pp)
            par = par or pr
        lq = 1
        for q in qs:
            lq = lq * q.denominator // math.gcd(lq, q.denominator)
        lp = 1
        for q in ps:
            lp = lp * q.denominator // math.gcd(lp, q.denominator)
        sq = sympy.Symbol(f"a{a}_q")
        sp = sympy.Symbol(f"a{a}_p")
        plan[a] = (lq, lp, sq, sp, par)
        gens.append(sq)
        if any(ps):
            gens.append(sp)
    expr = 0
    for m, c in p.items():
        t = sympy.Rational(int(c.numerator), int(c.denominator))
        for a, e in m:
            lq, lp, sq, sp, _ = plan[a]
            pp, qq, _ = _epair(e)
            t *= sq ** int(qq * lq) * sp ** int(pp * lp)
        expr += t
    try:
        c, fl = sympy.factor_list(sympy.expand(expr), *gens)
    except Exception:
        return [(p, 1)]
    out = []
    if c != 1:
        out.append(({(): mpq(int(sympy.numer(c)), int(sympy.denom(c)))}, 1))
    back = {}
    for a, (lq, lp, sq, sp, par) in plan.items():
        back[sq] = (a, lq, "q", par)
        back[sp] = (a, lp, "p", par)
    for fac, k in fl:
        poly = sympy.Poly(fac, *gens)
        d = {}
        for monom, cf in poly.terms():
            mm = {}
            for g, e in zip(gens, monom):
                if not e:
                    continue
                a, l, kind, par = back[g]
                add = Aff.make(mpq(e, l)) if kind == "q" else Aff.make(0, mpq(e, l), par)
                mm[a] = mm.get(a, 0) + add
            mm = {x: y for x, y in mm.items() if isinstance(y, Aff) or y != 0}
            d[tuple(sorted(mm.items()))] = mpq(int(sympy.numer(cf)), int(sympy.denom(cf)))
        out.append((d, int(k)))
    return out


def declare_invertible(e) -> None:
    """Allow every irreducible factor of ``e`` to appear in denominators."""
    e = as_expr(e)
    if e.den:
        raise ExprError("declare the numerator only")
    if not e.t:
        raise ZeroDivisionError("zero is not invertible")
    _, mono, facs = _factorize(e.t)
    for a, _ in mono:
        _ATOMS[a].invertible = True
    for f, _ in facs:
        f.allowed = True


def factor_of(e) -> "Factor":
    """Register ``e`` (irreducible) as an invertible factor and return it."""
    e = as_expr(e)
    declare_invertible(e)
    _, _, facs = _factorize(e.t)
    if len(facs) != 1 or facs[0][1] != 1:
        raise ExprError("expression is not a single irreducible factor")
    return facs[0][0]


# --------------------------------------------------------------------------
# division by a factor

def _divide(t, f):
    """Exact quotient t / f as a dict, or None when f does not divide t."""
    x = f.main
    d = f.deg
    buckets = {}
    for m, c in t.items():
        e = _mexp(m, x)
        if isinstance(e, Aff):
            return None
        buckets.setdefault(e, {})[m] = c
    lo = min(buckets)
    fpoly = f.poly
    q = {}
    while buckets:
        e = max(buckets)
        if e - lo < d:
            return None
        top = buckets.pop(e)
        for m, c in top.items():
            qm = _mset(m, x, e - d)
            q[qm] = c
            for fm, fc in fpoly.items():
                fe = _mexp(fm, x)
                if fe == d:
                    continue
                nm = _mmul(qm, fm)
                ne = e - d + fe
                b = buckets.get(ne)
                if b is None:
                    b = buckets[ne] = {}
                v = -c * fc
                s = b.get(nm)
                if s is None:
                    b[nm] = v
                else:
                    s = s + v
                    if s:
                        b[nm] = s
                    else:
                        del b[nm]
                        if not b:
                            del buckets[ne]
    return q


def _cancel(t, den):
    if not den or not t:
        return t, den
    out = []
    for fid, k in den:
        f = _FACTORS[fid]
        while k:
            r = _divide(t, f)
            if r is None:
                break
            t = r
            k -= 1
        if k:
            out.append((fid, k))
    return t, tuple(out)


# --------------------------------------------------------------------------
# Expr

class Expr:
    """Immutable canonical expression. Use the arithmetic operators."""

    __slots__ = ("t", "den", "_hash")

    def __init__(self, t=None, den=()):
        self.t = t if t is not None else {}
        self.den = den
        self._hash = None

    # construction -------------------------------------------------------
    @staticmethod
    def _make(t, den):
        if den and t:
            t, den = _cancel(t, den)
        if not t:
            return ZERO
        return Expr(t, den)

    # predicates -----------------------------------------------------------
    def is_zero(self):
        return not self.t

    def __bool__(self):
        return bool(self.t)

    def is_const(self):
        return not self.den and (not self.t or (len(self.t) == 1 and () in self.t))

    def const_value(self):
        if not self.t:
            return mpq(0)
        if not self.is_const():
            raise ExprError(f"not a constant: {self}")
        return self.t[()]

    def is_monomial(self):
        return len(self.t) == 1 and not self.den

    def __eq__(self, o):
        if not isinstance(o, Expr):
            try:
                o = as_expr(o)
            except ExprError:
                return NotImplemented
        return self.den == o.den and self.t == o.t

    def __ne__(self, o):
        r = self.__eq__(o)
        return r if r is NotImplemented else not r

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((frozenset(self.t.items()), self.den))
        return self._hash

    # arithmetic -------------------------------------------------------------
    def __add__(self, o):
        if not isinstance(o, Expr):
            o = as_expr(o)
        if not o.t:
            return self
        if not self.t:
            return o
        if self.den == o.den:
            r = _padd_into(dict(self.t), o.t)
            if not r:
                return ZERO
            return Expr._make(r, self.den) if self.den else Expr(r, ())
        den, a, b = _common(self, o)
        r = _padd_into(a, b)
        return Expr._make(r, den)

    __radd__ = __add__

    def __neg__(self):
        return Expr({m: -c for m, c in self.t.items()}, self.den)

    def __sub__(self, o):
        if not isinstance(o, Expr):
            o = as_expr(o)
        return self + (-o)

    def __rsub__(self, o):
        return as_expr(o) - self

    def __mul__(self, o):
        if not isinstance(o, Expr):
            if isinstance(o, (int, mpq, Fraction)):
                o = mpq(o)
                if not o or not self.t:
                    return ZERO
                return Expr({m: c * o for m, c in self.t.items()}, self.den)
            o = as_expr(o)
        if not self.t or not o.t:
            return ZERO
        t = _pmul(self.t, o.t)
        if not t:
            return ZERO
        if not self.den and not o.den:
            return Expr(t, ())
        den = _den_mul(self.den, o.den)
        return Expr._make(t, den)

    __rmul__ = __mul__

    def scale(self, c, mono=()):
        c = mpq(c)
        if not c or not self.t:
            return ZERO
        return Expr(_pscale(self.t, c, mono), self.den) if not self.den else \
            Expr._make(_pscale(self.t, c, mono), self.den)

    def inv(self):
        """Multiplicative inverse; raises NotInvertible / ZeroDivisionError."""
        if not self.t:
            raise ZeroDivisionError("division by zero expression")
        num = {(): mpq(1)}
        for fid, k in self.den:
            num = _pmul(num, _FACTORS[fid].power(k))
        if len(self.t) == 1:
            (m, c), = self.t.items()
            _check_unit(m)
            return Expr._make(_pscale(num, 1 / c, _minv(m)), ())
        c, m, facs = _factorize(self.t)
        _check_unit(m)
        for f, _ in facs:
            if not f.allowed:
                raise NotInvertible(f"denominator {f.skey} is not declared invertible")
        den = tuple(sorted((f.id, k) for f, k in facs))
        return Expr._make(_pscale(num, 1 / c, _minv(m)), den)

    def __truediv__(self, o):
        if isinstance(o, (int, mpq, Fraction)):
            if o == 0:
                raise ZeroDivisionError("division by zero")
            return self * (1 / mpq(o))
        if not isinstance(o, Expr):
            o = as_expr(o)
        if not o.t:
            raise ZeroDivisionError("division by zero")
        if o.is_const():
            return self * (1 / o.const_value())
        return self * o.inv()

    def __rtruediv__(self, o):
        return as_expr(o) * self.inv()

    def __pow__(self, k):
        if isinstance(k, Expr):
            k = k.const_value()
        k = mpq(k)
        if k.denominator != 1:
            return self._fracpow(k)
        k = int(k)
        if k < 0:
            return self.inv() ** (-k)
        if k == 0:
            return ONE
        if len(self.t) == 1 and not self.den:
            (m, c), = self.t.items()
            return Expr({_mpow(m, k): c ** k}, ())
        t = _ppow(self.t, k)
        den = tuple((f, e * k) for f, e in self.den)
        return Expr._make(t, den)

    def _fracpow(self, k):
        return self.pow_aff(Aff.make(k))

    def pow_aff(self, e):
        """Power with an affine exponent; only for monomials with coefficient 1."""
        if not isinstance(e, Aff):
            return self ** e
        if not self.is_monomial():
            raise ExprError("symbolic power of a non-monomial")
        (m, c), = self.t.items()
        if c != 1:
            if e.p == 0 and c > 0:
                # rational power of a rational: only exact roots are allowed
                num, den = _exact_root(c, e.q)
                if num is not None:
                    return Expr({_mpow_aff(m, e): num / den}, ())
            raise ExprError(f"symbolic power of a rational coefficient {c}")
        for a, _ in m:
            if not _ATOMS[a].invertible:
                raise NotInvertible(f"pow of non-invertible atom {_ATOMS[a]}")
        return Expr({_mpow_aff(m, e): mpq(1)}, ())

    # structure ------------------------------------------------------------
    def atoms(self):
        s = set()
        for m in self.t:
            for a, _ in m:
                s.add(_ATOMS[a])
        for fid, _ in self.den:
            s |= _FACTORS[fid].atoms()
        return s

    def terms(self):
        """Deterministically ordered (coef, {atom: exponent}) list of the numerator."""
        out = []
        for m in sorted(self.t, key=_mono_sortkey):
            out.append((self.t[m], {_ATOMS[a]: e for a, e in m}))
        return out

    def numerator(self):
        return Expr(dict(self.t), ())

    def denominator(self):
        r = {(): mpq(1)}
        for fid, k in self.den:
            r = _pmul(r, _FACTORS[fid].power(k))
        return Expr(r, ())

    def split_numer(self):
        """Numerator split into single-term Exprs sharing this denominator."""
        return [Expr({m: c}, self.den) for m, c in self.t.items()]

    def free_of(self, a):
        return a not in self.atoms()

    def coeff_atoms(self, pred):
        """Group terms by the part of the monomial selected by ``pred(atom)``.

        Returns {mono_part (tuple of (Atom, exp)): Expr of the remaining factors}."""
        out = {}
        for m, c in self.t.items():
            sel = tuple((a, e) for a, e in m if pred(_ATOMS[a]))
            rest = tuple((a, e) for a, e in m if not pred(_ATOMS[a]))
            d = out.setdefault(sel, {})
            d[rest] = d.get(rest, 0) + c
        res = {}
        for sel, d in out.items():
            key = tuple((_ATOMS[a], e) for a, e in sel)
            res[key] = Expr._make({k: v for k, v in d.items() if v}, self.den)
        return res

    # calculus -----------------------------------------------------------------
    def diff(self, a: Atom) -> "Expr":
        """Partial derivative w.r.t. a jet or parameter atom."""
        if not isinstance(a, Atom) or a.kind == "log":
            raise ExprError("can only differentiate w.r.t. a jet or parameter atom")
        aid = a.id
        plain = {}
        extra = ZERO
        for m, c in self.t.items():
            for b, e in m:
                if b == aid:
                    nm = _mset(m, b, e - 1)
                    if isinstance(e, Aff):
                        if e.q:
                            _acc(plain, nm, c * e.q)
                        if e.p:
                            _acc(plain, _mmul(nm, ((e.par.id, 1),)), c * e.p)
                    else:
                        _acc(plain, nm, c * e)
                    continue
                at = _ATOMS[b]
                if at.kind == "log":
                    base = at.base
                    nm = _mset(m, b, e - 1)
                    if isinstance(base, Atom):
                        if base.id == aid:
                            _acc(plain, _mmul(nm, ((aid, -1),)), c * e)
                    else:
                        df = base.diff(a)
                        if df:
                            extra = extra + Expr._make(
                                _pscale(df.t, c * e, nm), _den_mul(self.den, ((base.id, 1),)))
                elif isinstance(e, Aff) and e.par is not None and e.par.id == aid:
                    # d/dk x^(p k + q) = p log(x) x^(p k + q)
                    la = log_atom(at)
                    _acc(plain, _mmul(m, ((la.id, 1),)), c * e.p)
        r = Expr._make({k: v for k, v in plain.items() if v}, self.den) if plain else ZERO
        if extra:
            r = r + extra
        if self.den:
            for fid, k in self.den:
                df = _FACTORS[fid].diff(a)
                if df:
                    r = r - Expr._make(_pscale(_pmul(self.t, df.t), k),
                                       _den_mul(self.den, ((fid, 1),)))
        return r

    def subs(self, bindings: dict) -> "Expr":
        """Simultaneous substitution of atoms by Exprs."""
        from ._subs import substitute
        return substitute(self, bindings)

    def eval(self, point: dict) -> float:
        from ._subs import eval_numeric
        return eval_numeric(self, point)

    # printing -----------------------------------------------------------------
    def __str__(self):
        num = _poly_str(self.t)
        if not self.den:
            return num
        dens = []
        for fid, k in sorted(self.den, key=lambda t: _FACTORS[t[0]].skey):
            s = f"({_FACTORS[fid].skey})"
            dens.append(s if k == 1 else f"{s}^{k}")
        n = num if len(self.t) == 1 and "+" not in num[1:] and "-" not in num[1:] else f"({num})"
        return f"{n}/({'*'.join(dens)})" if len(dens) > 1 else f"{n}/{dens[0]}"

    def __repr__(self):
        return f"Expr({self})"


def _exact_root(c, q):
    # c^(q) for rational q: exact when numerator/denominator are perfect powers
    import gmpy2
    n = q.denominator
    p = q.numerator
    a, ea = gmpy2.iroot(gmpy2.mpz(c.numerator), int(n))
    b, eb = gmpy2.iroot(gmpy2.mpz(c.denominator), int(n))
    if not (ea and eb):
        return None, None
    r = mpq(a, b) ** int(p) if p >= 0 else mpq(b, a) ** int(-p)
    return r, mpq(1)


def _mpow_aff(m, e):
    out = []
    for a, x in m:
        y = x * e if not isinstance(x, Aff) else x * e
        if isinstance(y, Aff) or y != 0:
            out.append((a, y))
    return tuple(sorted(out))


def _acc(d, m, v):
    s = d.get(m)
    d[m] = v if s is None else s + v


def _check_unit(m):
    for a, _ in m:
        at = _ATOMS[a]
        if not at.invertible:
            raise NotInvertible(f"{at} is not declared invertible")


def _den_mul(a, b):
    if not a:
        return b
    if not b:
        return a
    d = dict(a)
    for f, k in b:
        d[f] = d.get(f, 0) + k
    return tuple(sorted(d.items()))


def _common(x, y):
    dx, dy = dict(x.den), dict(y.den)
    keys = set(dx) | set(dy)
    den = tuple(sorted((f, max(dx.get(f, 0), dy.get(f, 0))) for f in keys))
    a, b = x.t, y.t
    ma = {(): mpq(1)}
    mb = {(): mpq(1)}
    for f, k in den:
        ka, kb = k - dx.get(f, 0), k - dy.get(f, 0)
        if ka:
            ma = _pmul(ma, _FACTORS[f].power(ka))
        if kb:
            mb = _pmul(mb, _FACTORS[f].power(kb))
    a = _pmul(a, ma) if len(ma) > 1 or () not in ma else dict(a)
    b = _pmul(b, mb) if len(mb) > 1 or () not in mb else b
    return den, a, b


def _poly_str(t):
    if not t:
        return "0"
    parts = []
    for m in sorted(t, key=_mono_sortkey):
        c = t[m]
        fs = []
        for a, e in sorted(m, key=lambda x: _ATOMS[x[0]].sortkey):
            at = _ATOMS[a]
            if isinstance(e, Aff):
                fs.append(f"pow({at},{e})")
            elif e == 1:
                fs.append(str(at))
            elif e < 0:
                fs.append(f"{at}^({e})")
            else:
                fs.append(f"{at}^{e}")
        body = "*".join(fs)
        if not body:
            s = _qstr(c)
        elif c == 1:
            s = body
        elif c == -1:
            s = "-" + body
        else:
            s = f"{_qstr(c)}*{body}"
        parts.append(s)
    out = parts[0]
    for s in parts[1:]:
        out += s if s.startswith("-") else "+" + s
    return out


ZERO = Expr({}, ())
ONE = Expr({(): mpq(1)}, ())


def const(q) -> Expr:
    if isinstance(q, Fraction):
        q = mpq(q.numerator, q.denominator)
    q = mpq(q)
    return Expr({(): q}, ()) if q else ZERO


def atom_expr(a: Atom, e=1) -> Expr:
    return Expr({((a.id, e),): mpq(1)}, ())


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, Atom):
        return atom_expr(x)
    if isinstance(x, (int, Fraction)) or type(x).__name__ == "mpq":
        return const(x)
    raise ExprError(f"cannot convert {x!r} to Expr")
