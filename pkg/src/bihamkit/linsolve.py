"""Sparse exact Gauss-Jordan elimination.

Matrix entries are rationals or parameter-only Exprs; right-hand sides are
Exprs (they may carry parameters and jet-free symbols).  Pivots are chosen by
smallest unknown index, so the particular solution is the lexicographically
pivoted one with all free unknowns set to zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from gmpy2 import mpq

from .expr import Expr, ZERO, as_expr


def _num(c):
    if isinstance(c, Expr):
        if c.is_const():
            return c.const_value()
        return c
    return mpq(c)


def _iszero(c):
    return (not c) if not isinstance(c, Expr) else c.is_zero()


@dataclass
class LinearSystem:
    nvars: int
    pivots: dict = field(default_factory=dict)   # var -> (row dict, rhs)
    inconsistent: list = field(default_factory=list)
    nrows: int = 0

    def add(self, row: dict, rhs=ZERO, tag=None):
        """Add Σ row[v] x_v = rhs."""
        self.nrows += 1
        r = {v: _num(c) for v, c in row.items() if not _iszero(_num(c))}
        b = as_expr(rhs)
        while r:
            v = min(r)
            piv = self.pivots.get(v)
            if piv is None:
                c = r[v]
                inv = 1 / c
                r = {k: x * inv for k, x in r.items()}
                r[v] = mpq(1)
                b = b * inv
                self.pivots[v] = (r, b)
                return True
            c = r[v]
            prow, pb = piv
            for k, x in prow.items():
                y = r.get(k, 0) - c * x
                y = _num(y)
                if _iszero(y):
                    r.pop(k, None)
                else:
                    r[k] = y
            b = b - pb * c
        if b:
            self.inconsistent.append((tag, b))
            return False
        return True

    @property
    def consistent(self):
        return not self.inconsistent

    @property
    def rank(self):
        return len(self.pivots)

    def free_vars(self):
        return [v for v in range(self.nvars) if v not in self.pivots]

    def _back(self, fixed: dict, use_rhs: bool):
        x = dict(fixed)
        for v in sorted(self.pivots, reverse=True):
            row, b = self.pivots[v]
            s = b if use_rhs else ZERO
            for k, c in row.items():
                if k == v:
                    continue
                xv = x.get(k)
                if xv is not None and not _iszero(xv):
                    s = s - as_expr(xv) * c
            x[v] = s
        return x

    def particular(self):
        if not self.consistent:
            raise ValueError("inconsistent linear system")
        x = self._back({}, True)
        return {v: as_expr(x.get(v, ZERO)) for v in range(self.nvars)}

    def kernel(self):
        basis = []
        for f in self.free_vars():
            x = self._back({f: as_expr(1)}, False)
            basis.append({v: as_expr(c) for v, c in x.items() if not _iszero(c)})
        return basis


def solve(rows, nvars):
    """rows: iterable of (dict, rhs). Returns a LinearSystem."""
    ls = LinearSystem(nvars)
    for row, rhs in rows:
        ls.add(row, rhs)
    return ls
