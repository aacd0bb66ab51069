"""Substitution, logarithms of expressions and numeric evaluation."""
from __future__ import annotations

import math

import numpy as np
from gmpy2 import mpq

from .expr import (
    _ATOMS, _FACTORS, Aff, Atom, Expr, ExprError, NotInvertible, ONE, ZERO,
    _factorize, as_expr, atom_expr, const, log_atom,
)


class SubstitutionError(ExprError):
    pass


def _bound(bindings):
    out = {}
    for k, v in bindings.items():
        if isinstance(k, Atom):
            out[k.id] = as_expr(v)
        else:
            raise ExprError(f"binding key {k!r} is not an atom")
    return out


def log_of(e: Expr, drop_constant: bool = False) -> Expr:
    """log of an expression that factors into atoms and registered factors.

    Constant multipliers other than 1 cannot be represented; with
    ``drop_constant`` they are discarded (the result is then defined up to an
    additive constant)."""
    e = as_expr(e)
    if not e.t:
        raise ZeroDivisionError("log of zero")
    c, mono, facs = _factorize(e.t) if len(e.t) > 1 else (next(iter(e.t.values())), next(iter(e.t)), [])
    if c != 1 and not drop_constant:
        raise ExprError(f"log of constant multiple {c} is not representable")
    r = ZERO
    for aid, k in mono:
        at = _ATOMS[aid]
        if at.kind != "var":
            if drop_constant and at.kind == "param":
                continue
            raise ExprError(f"log of {at} is not representable")
        w = k.as_expr() if isinstance(k, Aff) else const(k)
        r = r + w * atom_expr(log_atom(at))
    for f, k in facs:
        r = r + atom_expr(log_atom(f)) * k
    for fid, k in e.den:
        r = r - atom_expr(log_atom(_FACTORS[fid])) * k
    return r


def substitute(e: Expr, bindings: dict) -> Expr:
    """Simultaneous substitution; raises SubstitutionError on zero/non-invertible images."""
    b = _bound(bindings)
    if not b:
        return e
    cache = {}

    def image_pow(aid, k):
        key = (aid, k)
        r = cache.get(key)
        if r is not None:
            return r
        at = _ATOMS[aid]
        if aid in b:
            img = b[aid]
            try:
                if isinstance(k, Aff):
                    r = img.pow_aff(k)
                else:
                    r = img ** k
            except ZeroDivisionError as ex:
                raise SubstitutionError(f"zero denominator substituting {at}") from ex
            except NotInvertible as ex:
                raise SubstitutionError(f"non-invertible image for {at}: {ex}") from ex
        elif at.kind == "log" and _log_touched(at, b):
            base = at.base
            img = b[base.id] if isinstance(base, Atom) else substitute(base.expr(), bindings)
            try:
                r = log_of(img) ** k
            except ZeroDivisionError as ex:
                raise SubstitutionError(f"log of zero substituting {at}") from ex
        else:
            r = atom_expr(at, k)
        cache[key] = r
        return r

    total = ZERO
    for m, c in e.t.items():
        t = const(c)
        for aid, k in m:
            t = t * image_pow(aid, k)
        total = total + t
    for fid, k in e.den:
        f = _FACTORS[fid]
        fe = f.expr()
        if any(a.id in b for a in f.atoms()):
            img = substitute(fe, bindings)
            try:
                total = total * img ** (-k)
            except ZeroDivisionError as ex:
                raise SubstitutionError("zero denominator after substitution") from ex
            except NotInvertible as ex:
                raise SubstitutionError(str(ex)) from ex
        else:
            total = total * Expr({(): mpq(1)}, ((fid, k),))
    return total


def _log_touched(at, b):
    base = at.base
    if isinstance(base, Atom):
        return base.id in b
    return any(a.id in b for a in base.atoms())


# --------------------------------------------------------------------------
# numerics

def _point_value(point, at):
    if at in point:
        return point[at]
    key = str(at)
    if key in point:
        return point[key]
    raise ExprError(f"no value for {at}")


def eval_numeric(e: Expr, point: dict) -> float:
    """IEEE double evaluation; ``point`` maps atoms or their names to floats."""
    vals = {}

    def val(aid):
        v = vals.get(aid)
        if v is None:
            at = _ATOMS[aid]
            if at.kind == "log":
                base = at.base
                x = val(base.id) if isinstance(base, Atom) else _eval_poly(base.poly, val)
                if x <= 0:
                    raise ValueError(f"log of non-positive value at {at}")
                v = math.log(x)
            else:
                v = float(_point_value(point, at))
            vals[aid] = v
        return v

    num = _eval_poly(e.t, val)
    for fid, k in e.den:
        d = _eval_poly(_FACTORS[fid].poly, val)
        if d == 0:
            raise ZeroDivisionError("denominator vanishes")
        num /= d ** k
    return num


def _pow(x, k, val):
    if isinstance(k, Aff):
        ex = float(k.q) + (float(k.p) * val(k.par.id) if k.p else 0.0)
        if x == 0 and ex < 0:
            raise ZeroDivisionError("0 to a negative power")
        return x ** ex
    if x == 0 and k < 0:
        raise ZeroDivisionError("0 to a negative power")
    return x ** k


def _eval_poly(t, val):
    s = 0.0
    for m, c in t.items():
        v = float(c)
        for aid, k in m:
            v *= _pow(val(aid), k, val)
        s += v
    return s


def compile_numeric(e: Expr):
    """Compile to a numpy function ``f(env)`` where ``env`` maps atom names to arrays/floats."""
    names = {}
    lines = []

    def nm(aid):
        if aid not in names:
            at = _ATOMS[aid]
            v = f"a{aid}"
            names[aid] = v
            if at.kind == "log":
                base = at.base
                if isinstance(base, Atom):
                    lines.append(f"{v} = np.log({nm(base.id)})")
                else:
                    lines.append(f"{v} = np.log({poly_src(base.poly)})")
            else:
                lines.append(f"{v} = env[{str(at)!r}]")
        return names[aid]

    def powsrc(aid, k):
        b = nm(aid)
        if isinstance(k, Aff):
            ex = repr(float(k.q))
            if k.p:
                ex += f" + {float(k.p)!r}*{nm(k.par.id)}"
            return f"{b}**({ex})"
        if k == 1:
            return b
        return f"{b}**{int(k)}"

    def poly_src(t):
        if not t:
            return "0.0"
        parts = []
        for m, c in t.items():
            fs = [repr(float(c))] + [powsrc(a, k) for a, k in m]
            parts.append("*".join(fs))
        return "(" + " + ".join(parts) + ")"

    body = poly_src(e.t)
    for fid, k in e.den:
        body = f"{body}/{poly_src(_FACTORS[fid].poly)}**{k}"
    src = "def _f(env):\n" + "".join(f"    {ln}\n" for ln in lines) + f"    return {body}\n"
    ns = {"np": np}
    exec(compile(src, "<compiled-expr>", "exec"), ns)
    return ns["_f"]
