"""Variable tables and the expression grammar.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := primary ('^' int)?          int may be signed or parenthesized
    primary:= INT | NAME | NAME '#' INT | 'log(' expr ')' | 'pow(' expr ',' expr ')'
            | '(' expr ')'
"""
from __future__ import annotations

import re

from gmpy2 import mpq

from .expr import (
    Aff, Atom, Expr, ExprError, NotInvertible, ZERO, as_expr, atom_expr, const,
    declare_invertible, jet, param,
)


class ParseError(ExprError):
    def __init__(self, msg, pos=None, text=None):
        self.pos = pos
        self.text = text
        where = f" at position {pos}" if pos is not None else ""
        super().__init__(f"{msg}{where}")


class VarTable:
    """Ordered dependent variables, parameters and invertibility declarations."""

    def __init__(self, vars, params=(), invertible=(), invertible_exprs=()):
        vars = list(vars)
        params = list(params)
        if not vars:
            raise ExprError("at least one dependent variable is required")
        names = vars + params
        if len(set(names)) != len(names):
            raise ExprError("variable and parameter names must be unique")
        for nm in names:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", nm):
                raise ExprError(f"bad name {nm!r}")
        self.vars = vars
        self.params = params
        self.invertible = list(invertible)
        self.invertible_exprs = list(invertible_exprs)
        for nm in params:
            param(nm)
        for nm in self.invertible:
            self.atom_by_name(nm).invertible = True
        for s in self.invertible_exprs:
            declare_invertible(parse(s, self))

    @property
    def n(self):
        return len(self.vars)

    def var(self, i: int, m: int = 0) -> Atom:
        return jet(self.vars[i], m)

    def x(self, i: int, m: int = 0) -> Expr:
        return atom_expr(jet(self.vars[i], m))

    def p(self, name: str) -> Expr:
        if name not in self.params:
            raise ExprError(f"undeclared parameter {name!r}")
        return atom_expr(param(name))

    def index_of(self, a: Atom):
        """(i, m) for a jet atom of this table, else None."""
        if a.kind != "var" or a.name not in self.vars:
            return None
        return self.vars.index(a.name), a.order

    def atom_by_name(self, s: str) -> Atom:
        if "#" in s:
            nm, m = s.split("#", 1)
            if nm not in self.vars:
                raise ExprError(f"undeclared variable {nm!r}")
            return jet(nm, int(m))
        if s in self.vars:
            return jet(s, 0)
        if s in self.params:
            return param(s)
        raise ExprError(f"undeclared name {s!r}")

    def parse(self, text: str) -> Expr:
        return parse(text, self)

    def renamed(self, vars):
        return VarTable(vars, self.params, [], [])

    def __repr__(self):
        return f"VarTable(vars={self.vars}, params={self.params})"


_TOK = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z0-9_]*)|(\S))")


def _tokenize(text):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOK.match(text, pos)
        if not m or m.end() == pos:
            break
        if m.group(1) is not None:
            out.append(("int", m.group(1), m.start(1)))
        elif m.group(2) is not None:
            out.append(("name", m.group(2), m.start(2)))
        elif m.group(3) is not None:
            out.append(("op", m.group(3), m.start(3)))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text, vt):
        self.text = text
        self.vt = vt
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, val=None):
        t = self.toks[self.i]
        if val is not None and t[1] != val:
            raise ParseError(f"expected {val!r}, found {t[1] or 'end of input'!r}", t[2], self.text)
        self.i += 1
        return t

    def parse(self):
        e = self.expr()
        t = self.peek()
        if t[0] != "end":
            raise ParseError(f"unexpected {t[1]!r}", t[2], self.text)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            r = self.term()
            e = e + r if op == "+" else e - r
        return e

    def term(self):
        e = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in ("*", "/"):
            t = self.take()
            r = self.unary()
            if t[1] == "*":
                e = e * r
            else:
                try:
                    e = e / r
                except ZeroDivisionError:
                    raise ParseError("division by zero", t[2], self.text) from None
                except NotInvertible as ex:
                    raise ParseError(f"division by a non-invertible expression ({ex})", t[2], self.text) from None
        return e

    def unary(self):
        t = self.peek()
        if t[0] == "op" and t[1] in ("+", "-"):
            self.take()
            e = self.unary()
            return -e if t[1] == "-" else e
        return self.power()

    def _int_exponent(self):
        t = self.peek()
        paren = False
        if t[1] == "(":
            self.take()
            paren = True
        sign = 1
        if self.peek()[1] == "-":
            self.take()
            sign = -1
        t = self.peek()
        if t[0] != "int":
            raise ParseError("'^' takes an integer exponent (use pow for symbolic powers)", t[2], self.text)
        self.take()
        if paren:
            self.take(")")
        return sign * int(t[1])

    def power(self):
        e = self.primary()
        if self.peek()[1] == "^":
            t = self.take()
            k = self._int_exponent()
            try:
                e = e ** k
            except (ZeroDivisionError, NotInvertible) as ex:
                raise ParseError(f"negative power of a non-invertible expression ({ex})", t[2], self.text) from None
        return e

    def primary(self):
        t = self.peek()
        if t[0] == "int":
            self.take()
            return const(int(t[1]))
        if t[0] == "name":
            self.take()
            name = t[1]
            if name in ("eps", "epsilon"):
                raise ParseError("eps is not an expression atom; put eps-orders in separate slots", t[2], self.text)
            if name == "log":
                self.take("(")
                arg = self.expr()
                self.take(")")
                from ._subs import log_of
                try:
                    return log_of(arg)
                except (ExprError, ZeroDivisionError) as ex:
                    raise ParseError(f"log argument not representable ({ex})", t[2], self.text) from None
            if name == "pow":
                self.take("(")
                base = self.expr()
                self.take(",")
                ex_t = self.peek()
                ex = self.expr()
                self.take(")")
                aff = _to_aff(ex, ex_t[2], self.text)
                try:
                    return base.pow_aff(aff) if isinstance(aff, Aff) else base ** aff
                except (ExprError, ZeroDivisionError) as err:
                    raise ParseError(f"bad pow ({err})", t[2], self.text) from None
            if self.peek()[1] == "#":
                self.take()
                k = self.peek()
                if k[0] != "int":
                    raise ParseError("malformed jet index", k[2], self.text)
                self.take()
                if name not in self.vt.vars:
                    raise ParseError(f"undeclared variable {name!r}", t[2], self.text)
                m = int(k[1])
                if m < 1:
                    raise ParseError("jet index must be >= 1", k[2], self.text)
                return atom_expr(jet(name, m))
            if name in self.vt.vars:
                return atom_expr(jet(name, 0))
            if name in self.vt.params:
                return atom_expr(param(name))
            raise ParseError(f"undeclared name {name!r}", t[2], self.text)
        if t[1] == "(":
            self.take()
            e = self.expr()
            self.take(")")
            return e
        raise ParseError(f"unexpected {t[1] or 'end of input'!r}", t[2], self.text)


def _to_aff(e: Expr, pos, text):
    if e.den:
        raise ParseError("exponent must be affine in one parameter", pos, text)
    q = mpq(0)
    p = mpq(0)
    par = None
    for m, c in e.t.items():
        if not m:
            q = c
        elif len(m) == 1 and m[0][1] == 1:
            from .expr import _ATOMS
            at = _ATOMS[m[0][0]]
            if at.kind != "param" or (par is not None and par is not at):
                raise ParseError("exponent must be affine in one parameter", pos, text)
            par = at
            p = c
        else:
            raise ParseError("exponent must be affine in one parameter", pos, text)
    return Aff.make(q, p, par)


def parse(text: str, vt: VarTable) -> Expr:
    """Parse ``text`` into a normalized Expr over the names declared in ``vt``."""
    return _Parser(text, vt).parse()
