"""Symbolic-numeric toolkit for epsilon-graded bihamiltonian structures."""
from .expr import Expr, Atom, jet, param, const, atom_expr, ZERO, ONE
from .parse import VarTable, parse, ParseError

__version__ = "0.1.0"
