"""Command-line front end.

Every subcommand builds a :class:`Report` (fixed, versioned layout, no timestamps)
and exits 0 iff all requested verdicts pass, 1 on a failed verdict and 2 on
input errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass, field

import numpy as np

from . import catalog
from .expr import ExprError
from .localgeom import compatibility, jacobi
from .miura import (
    AnsatzConfig, first_nonzero, pencil_residual, read_transform, reduce_pencil, write_transform,
)
from .parse import ParseError
from .pencil import central_invariants, read_pencil, write_pencil

SCHEMA = "bihamkit-report/1"


@dataclass
class Report:
    command: str
    items: list = field(default_factory=list)      # (key, value)
    verdicts: list = field(default_factory=list)   # (name, bool)

    def add(self, key, value):
        self.items.append((key, str(value)))

    def verdict(self, name, ok):
        self.verdicts.append((name, bool(ok)))

    @property
    def ok(self):
        return all(v for _, v in self.verdicts)

    def render(self, fmt="text"):
        if fmt == "csv":
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["kind", "key", "value"])
            w.writerow(["meta", "schema", SCHEMA])
            w.writerow(["meta", "command", self.command])
            for k, v in self.items:
                w.writerow(["item", k, v])
            for k, v in self.verdicts:
                w.writerow(["verdict", k, "pass" if v else "FAIL"])
            return buf.getvalue()
        out = [f"schema: {SCHEMA}", f"command: {self.command}"]
        out += [f"{k}: {v}" for k, v in self.items]
        out += [f"[{'pass' if v else 'FAIL'}] {k}" for k, v in self.verdicts]
        out.append(f"result: {'pass' if self.ok else 'FAIL'}")
        return "\n".join(out) + "\n"


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers

def _read(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as ex:
        raise UsageError(f"{path}: {ex.strerror}") from None


def _parse_point(text):
    out = {}
    for part in filter(None, (s.strip() for s in (text or "").split(","))):
        k, eq, v = part.partition("=")
        if not eq:
            raise UsageError(f"--base-point: expected name=value, got {part!r}")
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise UsageError(f"--base-point: bad number {v.strip()!r}") from None
    return out


def _parse_params(text):
    """name=value pairs with exact rational values, e.g. ``c=1/24``."""
    from gmpy2 import mpq
    out = {}
    for part in filter(None, (s.strip() for s in text.split(","))):
        k, eq, v = part.partition("=")
        if not eq:
            raise UsageError(f"--params: expected name=value, got {part!r}")
        try:
            out[k.strip()] = mpq(v.strip())
        except ValueError:
            raise UsageError(f"--params: bad rational {v.strip()!r}") from None
    return out


def _floats(text, what):
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers") from None


def _load_pencil(args):
    try:
        p = read_pencil(_read(args.pencil))
    except (ParseError, ExprError) as ex:
        raise UsageError(f"{args.pencil}: {ex}") from None
    bp = _parse_point(getattr(args, "base_point", None))
    for k in bp:
        if k not in p.vt.vars and k not in p.vt.params:
            raise UsageError(f"--base-point: unknown name {k!r}")
    p.basepoint.update(bp)
    return p


def _residual_summary(orders):
    bad = [m for m, r in sorted(orders.items()) if not r.is_zero()]
    return "zero" if not bad else "nonzero at eps^" + ",".join(map(str, bad))


# --------------------------------------------------------------------------
# subcommands

def cmd_check(args, rep):
    p = _load_pencil(args)
    order = args.order if args.order is not None else p.order
    P1, P2 = p.P1.truncated(order), p.P2.truncated(order)
    rep.add("pencil", p.name or args.pencil)
    rep.add("order", order)
    rep.verdict("grading", True)          # enforced on load
    rep.verdict("antisymmetry P1", P1.is_antisymmetric())
    rep.verdict("antisymmetry P2", P2.is_antisymmetric())
    for tag, res in (("jacobi P1", jacobi(P1, p.vt, order)), ("jacobi P2", jacobi(P2, p.vt, order)),
                     ("compatibility", compatibility(P1, P2, p.vt, order))):
        rep.add(tag, _residual_summary(res))
        rep.verdict(tag, all(r.is_zero() for r in res.values()))


def cmd_invariants(args, rep):
    p = _load_pencil(args)
    roots = None
    if args.roots:
        roots = [p.vt.parse(s) for s in args.roots.split(";")]
    ci = central_invariants(p, roots)
    rep.add("pencil", p.name or args.pencil)
    for i, (u, c) in enumerate(zip(ci.u, ci.as_functions()), 1):
        rep.add(f"u{i}", u)
        rep.add(f"c{i}(u)", c)
    rep.verdict("central invariants depend on their own coordinate", True)


def cmd_reduce(args, rep):
    p = _load_pencil(args)
    cfg = AnsatzConfig(jet=args.ansatz_jet, den=args.ansatz_den, logs=args.ansatz_logs == "on")
    r = reduce_pencil(p, args.order, cfg)
    rep.add("pencil", p.name or args.pencil)
    rep.add("order", args.order)
    for s in r.steps:
        rep.add(f"step {s.k}", f"basis {s.nbasis} rank {s.rank} kernel {s.kernel_dim} "
                               f"zero-admissible {s.zero_admissible} logs {s.uses_logs}")
    rep.add("achieved", r.achieved)
    rep.verdict(f"reduced through eps^{args.order}", r.ok)
    if args.transform_out:
        with open(args.transform_out, "w", encoding="utf-8") as fh:
            fh.write(write_transform(r.transform))
        rep.add("transform file", args.transform_out)


def cmd_verify_transform(args, rep):
    p = _load_pencil(args)
    try:
        T = read_transform(_read(args.transform))
    except (ParseError, ExprError) as ex:
        raise UsageError(f"{args.transform}: {ex}") from None
    order = args.order if args.order is not None else max(p.order, T.top) + 2
    r1, r2, _ = pencil_residual(T, p, order=order)
    f1, f2 = first_nonzero(r1, order), first_nonzero(r2, order)
    first = min((f for f in (f1, f2) if f is not None), default=None)
    rep.add("order", order)
    rep.add("residual", "zero through eps^%d" % order if first is None
            else f"residual first nonzero at eps^{first}")
    need = args.expect_clean if args.expect_clean is not None else T.top
    rep.verdict(f"no residual through eps^{need}", first is None or first > need)


def cmd_catalog(args, rep):
    if not args.export:
        for nm in catalog.names():
            rep.add("entry", nm)
        return
    params = _parse_params(args.params) if args.params else None
    try:
        e = catalog.get_entry(args.export, params)
    except (KeyError, TypeError, ValueError) as ex:
        raise UsageError(str(ex)) from None
    text = write_pencil(e.pencil)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        rep.add("pencil file", args.out)
    else:
        rep.add("pencil", "\n" + text.rstrip("\n"))
    if args.transform_out and e.transform is not None:
        with open(args.transform_out, "w", encoding="utf-8") as fh:
            fh.write(write_transform(e.transform))
        rep.add("transform file", args.transform_out)
    rep.verdict("export", True)


def cmd_hodograph(args, rep):
    from .hodograph import convergence_study, solve_hodograph, to_csv
    e = catalog.get_entry("kdv")
    a = args.amplitude
    if not 0 <= a < 1:
        raise UsageError("--amplitude must lie in [0, 1) for monotone data")
    W = lambda v: v + a * np.sin(v)
    dW = lambda v: np.atleast_2d(1 + a * np.cos(v))
    order = 2 if args.order is None else args.order
    eps = _floats(args.eps, "--eps")
    study = convergence_study(e.transform, e.system, e.pencil.vt, W, eps, args.time, order,
                              N=args.modes, params={"c": args.c}, dW=dW)
    rep.add("truncation", f"eps^{order}")
    rep.add("time", f"{args.time:g}")
    rep.add("modes", args.modes)
    for ep, err in zip(study.eps, study.errors):
        rep.add(f"max error eps={ep:g}", f"{err:.6e}")
    rep.add("fitted order", f"{study.order:.4f}")
    need = order + 1.5 if args.min_order is None else args.min_order
    rep.verdict(f"fitted order >= {need:g}", study.order >= need)
    if args.csv:
        L = 2 * np.pi
        xs = (1 + args.time) * np.arange(args.modes) * L / args.modes
        from .hodograph import _invert_scalar
        seed = _invert_scalar(W, xs[0], args.time)
        hd = solve_hodograph(lambda u: u, W, xs, np.array([args.time]), (xs[0], args.time, [seed]),
                             dV=lambda u: np.eye(1), dW=dW)
        rep.verdict("hodograph residual < 1e-12", hd.max_residual < 1e-12)
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(to_csv(xs, args.time, hd.u[0], hd.residual[0], names=["w"],
                            header=[f"amplitude: {a!r}", f"c: {args.c!r}", f"time: {args.time!r}"]))
        rep.add("csv", args.csv)


def _fn(text, var):
    import sympy
    try:
        e = sympy.sympify(text)
    except (sympy.SympifyError, SyntaxError):
        raise UsageError(f"cannot parse {text!r}") from None
    free = {s.name for s in e.free_symbols} - {var}
    if free:
        raise UsageError(f"{text!r}: unexpected symbols {sorted(free)}")
    f = sympy.lambdify(sympy.Symbol(var), e, "numpy")
    return lambda x: np.broadcast_to(np.asarray(f(x), dtype=float), np.shape(x)).copy()


def cmd_lame(args, rep):
    from .lame import Grid2, field_csv, reconstruct_and_verify, self_convergence, solve_chi, solve_lame_n2
    box = _floats(args.box, "--box")
    if len(box) != 4:
        raise UsageError("--box needs a1,b1,a2,b2")
    try:
        gam = solve_lame_n2(_fn(args.g12, "u2"), _fn(args.g21, "u1"), box, args.N)
        chi = solve_chi(gam, _fn(args.chi1, "u1"), _fn(args.chi2, "u2"))
    except ValueError as ex:
        raise UsageError(str(ex)) from None
    fine = Grid2.box(box, args.N + 8)
    r2, r3 = gam.residuals(fine)
    rep.add("lame residual", f"{max(r2, r3):.3e}")
    rep.verdict("lame residual < 1e-8", max(r2, r3) < 1e-8)
    rp = reconstruct_and_verify(gam, chi, lams=_floats(args.lams, "--lams"), tol=args.tol)
    rep.add("curvature g1", f"{rp.curvature[0]:.3e}")
    rep.add("curvature g2", f"{rp.curvature[1]:.3e}")
    rep.add("flat coordinate hessian", f"{rp.flat_hessian:.3e}")
    for lam, h in rp.casimir_hessian.items():
        rep.add(f"casimir hessian lambda={lam:g}", f"{h:.3e}")
    for k, v in rp.verdicts.items():
        rep.verdict(k, v)
    c = ((box[0] + box[1]) / 2, (box[2] + box[3]) / 2)
    errs, orders = self_convergence(chi, c)
    rep.add("quadrature self-convergence", " ".join(f"{o:.2f}" for o in orders))
    if args.csv:
        fields = {"gamma12": gam.g12, "gamma21": gam.g21, "chi1": chi.chi1, "chi2": chi.chi2,
                  "v1": rp.flat[0].reshape(gam.grid.shape), "v2": rp.flat[1].reshape(gam.grid.shape)}
        meta = {"box": ",".join(map(repr, box)), "N": args.N, "lame residual": f"{max(r2, r3):.3e}"}
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(field_csv(gam.grid, fields, meta))
        rep.add("csv", args.csv)


# --------------------------------------------------------------------------

def _nonneg(s):
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _pos(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def build_parser():
    ap = argparse.ArgumentParser(prog="bihamkit", description="bihamiltonian pencil toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--order", type=_nonneg, default=None)
    common.add_argument("--base-point", default=None)
    common.add_argument("--tol", type=_pos, default=1e-6)
    common.add_argument("--format", choices=("text", "csv"), default="text")
    common.add_argument("--out", default=None)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("check", parents=[common], help="antisymmetry, Jacobi, compatibility")
    s.add_argument("pencil")
    s.set_defaults(run=cmd_check)

    s = sub.add_parser("invariants", parents=[common], help="canonical coordinates and central invariants")
    s.add_argument("pencil")
    s.add_argument("--roots", default=None, help="canonical coordinates separated by ';'")
    s.set_defaults(run=cmd_invariants)

    s = sub.add_parser("reduce", parents=[common], help="quasi-Miura reduction")
    s.add_argument("pencil")
    s.add_argument("--ansatz-jet", type=_nonneg, default=None)
    s.add_argument("--ansatz-den", type=_nonneg, default=None)
    s.add_argument("--ansatz-logs", choices=("on", "off"), default="on")
    s.add_argument("--transform-out", default=None)
    s.set_defaults(run=cmd_reduce)

    s = sub.add_parser("verify-transform", parents=[common], help="apply a transform file")
    s.add_argument("pencil")
    s.add_argument("transform")
    s.add_argument("--expect-clean", type=_nonneg, default=None,
                   help="order through which the residual must vanish (default: transform order)")
    s.set_defaults(run=cmd_verify_transform)

    s = sub.add_parser("catalog", parents=[common], help="list or export catalog entries")
    s.add_argument("--export", default=None, metavar="NAME")
    s.add_argument("--params", default=None, help="exact values, e.g. c=1/24")
    s.add_argument("--transform-out", default=None)
    s.set_defaults(run=cmd_catalog)

    s = sub.add_parser("hodograph", parents=[common], help="KdV perturbation-order study")
    s.add_argument("--amplitude", type=float, default=0.3)
    s.add_argument("--c", type=float, default=1 / 36)
    s.add_argument("--eps", default="0.1,0.05,0.025")
    s.add_argument("--time", type=float, default=1.0)
    s.add_argument("--modes", type=int, default=128)
    s.add_argument("--min-order", type=float, default=None)
    s.add_argument("--csv", default=None)
    s.set_defaults(run=cmd_hodograph)

    s = sub.add_parser("lame", parents=[common], help="n = 2 pencil from rotation coefficients")
    s.add_argument("--box", default="1.0,1.6,2.2,3.0")
    s.add_argument("--N", type=int, default=24)
    s.add_argument("--g12", default="0.3*sin(u2)", help="γ12 on u1 = a1, in u2")
    s.add_argument("--g21", default="0.2*cos(u1) + 0.1", help="γ21 on u2 = a2, in u1")
    s.add_argument("--chi1", default="1 + 0.1*u1")
    s.add_argument("--chi2", default="2 + 0.05*u2**2")
    s.add_argument("--lams", default="-1,0.5")
    s.add_argument("--csv", default=None)
    s.set_defaults(run=cmd_lame)
    return ap


def run(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as ex:
        return int(ex.code or 0)
    rep = Report(args.command)
    try:
        args.run(args, rep)
    except UsageError as ex:
        print(f"bihamkit {args.command}: error: {ex}", file=sys.stderr)
        return 2
    except (ExprError, ValueError, FloatingPointError) as ex:
        rep.add("error", ex)
        rep.verdict("completed", False)
    text = rep.render(args.format)
    if args.out and args.command != "catalog":
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    return 0 if rep.ok else 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
