"""Hyperbolic systems at ε = 0 and the numerical side of the reduction.

Symbolic part: symmetrizability of conservation laws, characteristic velocities
in canonical coordinates, the Tsarev conditions.  Numerical part: Newton
continuation for the hodograph equations, the perturbed solutions obtained by
pushing a hodograph solution through a truncated reducing transformation, a
pseudospectral reference integrator, and the ε-convergence study that ties them
together.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from ._subs import compile_numeric, log_of
from .expr import Aff, Expr, ExprError, ONE, ZERO, as_expr, atom_expr, param
from .jet import jet_order
from .miura import MiuraTransform, _spectral_jets, apply_to_solution
from .parse import VarTable
from .pencil import _ensure_invertible, _inverse

__all__ = [
    "HyperbolicSystem", "SymmetrizationReport", "HodographData", "StudyReport",
    "symmetrizable_check", "characteristic_velocities", "tsarev_check",
    "solve_hodograph", "pde_residual", "perturbed_solution", "integrate_reference",
    "ReferenceSolution", "convergence_study", "fit_order", "fd_jets", "to_csv",
]


# --------------------------------------------------------------------------
# symbolic layer

@dataclass
class HyperbolicSystem:
    """v^i_t + ∂_x φ^i(v) = 0, or the diagonal form u^i_t + V^i(u) u^i_x = 0."""
    vt: VarTable
    flux: list | None = None
    V: list | None = None
    eta: list | None = None

    @property
    def n(self):
        return self.vt.n

    def jacobian(self):
        if self.flux is None:
            raise ExprError("no flux given")
        return [[as_expr(f).diff(self.vt.var(j)) for j in range(self.n)] for f in self.flux]

    def velocity_matrix(self):
        if self.flux is not None:
            return self.jacobian()
        return [[as_expr(self.V[i]) if i == j else ZERO for j in range(self.n)]
                for i in range(self.n)]

    def strictly_hyperbolic(self, point: dict, margin=1e-9):
        A = np.array([[a.eval(point) for a in row] for row in self.velocity_matrix()])
        ev = np.linalg.eigvals(A)
        if np.max(np.abs(ev.imag)) > margin:
            return False
        ev = np.sort(ev.real)
        return bool(np.all(np.diff(ev) > margin))


@dataclass
class SymmetrizationReport:
    symmetric: bool
    h: Expr | None
    p: Expr
    q: Expr | None
    f: Expr | None
    laws_ok: bool
    asymmetry: list = field(default_factory=list)


def _antiderivative(e: Expr, a):
    """∫ e d a, term by term; logs only for the a^{-1} term."""
    out = ZERO
    for c, mono in e.terms():
        k = mono.get(a, 0)
        rest = ONE
        for b, kb in mono.items():
            if b is a:
                continue
            if b.kind == "log":
                raise ExprError("cannot integrate a term containing a logarithm")
            rest = rest * atom_expr(b, kb)
        rest = rest * c
        if isinstance(k, Aff) and k.p:
            s = (k + 1).as_expr()
            _ensure_invertible(s)
            out = out + rest * atom_expr(a, k + 1) / s
        elif k == -1:
            out = out + rest * log_of(atom_expr(a))
        else:
            out = out + rest * atom_expr(a, k + 1) / (k + 1)
    return out


def _potential(grad, vt):
    """h with ∂h/∂v^s = grad[s], or None when grad is not closed."""
    xs = [vt.var(i) for i in range(vt.n)]
    for i in range(vt.n):
        for j in range(i + 1, vt.n):
            if grad[i].diff(xs[j]) != grad[j].diff(xs[i]):
                return None
    h = ZERO
    for s, x in enumerate(xs):
        h = h + _antiderivative(grad[s] - h.diff(x), x)
    return h


def symmetrizable_check(flux, eta, vt: VarTable) -> SymmetrizationReport:
    """Weak symmetrizability η_is ∂φ^s/∂v^j = η_js ∂φ^s/∂v^i, with the densities
    of the Hamiltonian and of the two extra conservation laws."""
    n = vt.n
    E = np.array([[float(as_expr(x).const_value()) for x in row] for row in eta])
    if E.shape != (n, n) or not np.allclose(E, E.T):
        raise ExprError("η must be a symmetric n×n matrix")
    if abs(np.linalg.det(E)) < 1e-14:
        raise ExprError("η is degenerate")
    eta = [[as_expr(x) for x in row] for row in eta]
    sysm = HyperbolicSystem(vt, flux=[as_expr(f) for f in flux], eta=eta)
    A = sysm.jacobian()
    S = [[sum((eta[i][s] * A[s][j] for s in range(n)), ZERO) for j in range(n)] for i in range(n)]
    bad = [(i, j) for i in range(n) for j in range(i + 1, n) if S[i][j] != S[j][i]]
    xs = [vt.x(i) for i in range(n)]
    p = sum((eta[i][j] * xs[i] * xs[j] for i in range(n) for j in range(n)), ZERO) / 2
    if bad:
        return SymmetrizationReport(False, None, p, None, None, False, bad)
    # ∂h/∂v^s = η_si φ^i
    grad = [sum((eta[s][i] * sysm.flux[i] for i in range(n)), ZERO) for s in range(n)]
    h = _potential(grad, vt)
    if h is None:
        return SymmetrizationReport(True, None, p, None, None, False, [])
    q = sum((xs[i] * grad[i] for i in range(n)), ZERO) - h
    einv = _inverse(eta)
    f = sum((einv[i][j] * grad[i] * grad[j] for i in range(n) for j in range(n)), ZERO) / 2

    def conserved(dens, fl):
        # ∇dens · A = ∇fl on smooth solutions
        return all(
            sum((dens.diff(vt.var(i)) * A[i][j] for i in range(n)), ZERO) == fl.diff(vt.var(j))
            for j in range(n))
    ok = conserved(p, q) and conserved(h, f)
    return SymmetrizationReport(True, h, p, q, f, ok, [])


def characteristic_velocities(system: HyperbolicSystem, roots):
    """V^i with ∇u^i · A = V^i ∇u^i for the given Riemann invariants u^i(v)."""
    vt, n = system.vt, system.n
    A = system.jacobian()
    out = []
    for r in roots:
        grad = [as_expr(r).diff(vt.var(j)) for j in range(n)]
        row = [sum((grad[i] * A[i][j] for i in range(n)), ZERO) for j in range(n)]
        js = sorted((j for j in range(n) if grad[j]),
                    key=lambda j: (not grad[j].is_monomial() and not grad[j].is_const(), j))
        if not js:
            raise ExprError("Riemann invariant with vanishing gradient")
        j = js[0]
        _ensure_invertible(grad[j])
        V = row[j] / grad[j]
        if any(row[k] != V * grad[k] for k in range(n)):
            raise ExprError(f"{r} is not a Riemann invariant of the system")
        out.append(V)
    return out


def tsarev_check(V, g, vt: VarTable, jacobian=None, pencil: bool = True):
    """∂_k V^i = (V^k - V^i) ∂_k log √g_ii for i ≠ k.

    ``V`` and the diagonal ``g`` may be written in other coordinates w; then
    ``jacobian`` is ∂u/∂w and derivatives along u^k are taken through its
    inverse.  With ``pencil`` the check is repeated for g_ii/(u^i - λ), which needs
    the canonical coordinates themselves: pass them as ``pencil=[u^1,...]``.
    Returns (ok, residuals)."""
    n = len(V)
    V = [as_expr(x) for x in V]
    g = [as_expr(x) for x in g]
    if jacobian is None:
        Jinv = [[ONE if a == k else ZERO for k in range(n)] for a in range(n)]
    else:
        Jinv = _inverse([[as_expr(x) for x in row] for row in jacobian])

    def d(k, e):
        return sum((Jinv[a][k] * e.diff(vt.var(a)) for a in range(n) if Jinv[a][k]), ZERO)

    def residuals(gg):
        res = {}
        for i in range(n):
            _ensure_invertible(gg[i])
            for k in range(n):
                if i == k:
                    continue
                r = d(k, V[i]) - (V[k] - V[i]) * d(k, gg[i]) / (2 * gg[i])
                if r:
                    res[(i, k)] = r
        return res
    res = residuals(g)
    ok = not res
    if ok and pencil not in (False, None, True):
        lam = atom_expr(param("lambda_"))
        shifted = []
        for i in range(n):
            s = as_expr(pencil[i]) - lam
            _ensure_invertible(s)
            shifted.append(g[i] / s)
        res = residuals(shifted)
        ok = not res
    return ok, res


# --------------------------------------------------------------------------
# hodograph equations

@dataclass
class HodographData:
    x: np.ndarray
    t: np.ndarray
    u: np.ndarray                # shape (nt, nx, n); NaN outside the valid region
    residual: np.ndarray         # max |x - V t - W| per grid point
    valid: np.ndarray            # bool (nt, nx)
    boundary: list               # [(x, t*)] where the Jacobian degenerates
    V: object = None
    W: object = None

    @property
    def max_residual(self):
        r = self.residual[self.valid]
        return float(r.max()) if r.size else 0.0


def _num_jac(F, u, h=1e-7):
    n = len(u)
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        s = h * max(1.0, abs(u[j]))
        e[j] = s
        J[:, j] = (F(u + e) - F(u - e)) / (2 * s)
    return J


def _newton(x, t, guess, V, W, dV, dW, tol, maxit=50):
    u = np.array(guess, dtype=float)
    for _ in range(maxit):
        r = V(u) * t + W(u) - x
        J = dV(u) * t + dW(u)
        try:
            du = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            return None, np.inf, 0.0
        u = u - du
        if np.max(np.abs(du)) <= 1e-15 * max(1.0, np.max(np.abs(u))):
            break
    r = np.max(np.abs(V(u) * t + W(u) - x))
    J = dV(u) * t + dW(u)
    return u, r, np.linalg.det(J)


def solve_hodograph(V, W, x, t, seed, dV=None, dW=None, tol=1e-12, jac_tol=1e-10,
                    bisect_steps=40) -> HodographData:
    """Solve x = V(u) t + W(u) on the (x, t) grid by Newton continuation.

    ``V``, ``W`` map an array of n values to n values; ``seed`` is (x0, t0, u0)
    with (x0, t0) a grid node and u0 a nearby solution.  Continuation runs along
    x from the seed column and then row by row in |t - t0|.  Points where the
    Jacobian det(t ∂V + ∂W) drops below ``jac_tol`` (or changes sign) are cut off;
    for each affected column the catastrophe time is located by bisection, and the
    marching stops at the first row containing such a point."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    x0, t0, u0 = seed
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    n = len(u0)
    Vf = lambda u: np.atleast_1d(np.asarray(V(u), dtype=float))
    Wf = lambda u: np.atleast_1d(np.asarray(W(u), dtype=float))
    dVf = (lambda u: np.atleast_2d(dV(u))) if dV else (lambda u: _num_jac(Vf, u))
    dWf = (lambda u: np.atleast_2d(dW(u))) if dW else (lambda u: _num_jac(Wf, u))
    ix = int(np.argmin(np.abs(x - x0)))
    it = int(np.argmin(np.abs(t - t0)))
    if abs(x[ix] - x0) > 1e-12 * max(1, abs(x0)) or abs(t[it] - t0) > 1e-12 * max(1, abs(t0)):
        raise ValueError("seed must lie on the grid")
    nt, nx = len(t), len(x)
    U = np.full((nt, nx, n), np.nan)
    R = np.full((nt, nx), np.inf)
    ok = np.zeros((nt, nx), dtype=bool)
    useed, r, det0 = _newton(x0, t0, u0, Vf, Wf, dVf, dWf, tol)
    if useed is None or r > tol or abs(det0) < jac_tol:
        raise ValueError("the Jacobian condition fails at the seed (or Newton diverged)")
    sgn = np.sign(det0)

    def attempt(j, i, guess):
        u, r, det = _newton(x[i], t[j], guess, Vf, Wf, dVf, dWf, tol)
        if u is None or r > tol or abs(det) < jac_tol or np.sign(det) != sgn:
            return False
        U[j, i], R[j, i], ok[j, i] = u, r, True
        return True

    def sweep_row(j, start, guess):
        if not attempt(j, start, guess):
            return
        for step in (1, -1):
            i = start + step
            while 0 <= i < nx and attempt(j, i, U[j, i - step]):
                i += step

    sweep_row(it, ix, useed)
    boundary = []
    for direction in (1, -1):
        j = it + direction
        while 0 <= j < nt:
            prev = j - direction
            cols = np.flatnonzero(ok[prev])
            if not len(cols):
                break
            start = cols[np.argmin(np.abs(cols - ix))]
            sweep_row(j, start, U[prev, start])
            # columns valid in the previous row but lost now: retry from above, else the
            # gradient catastrophe has been reached and the field stops being single valued
            lost = [i for i in cols if not ok[j, i] and not attempt(j, i, U[prev, i])]
            for i in lost:
                boundary.append((x[i], _bisect_time(x[i], t[prev], t[j], U[prev, i], Vf, Wf,
                                                     dVf, dWf, tol, jac_tol, sgn, bisect_steps)))
            if lost:
                break
            j += direction
    res = np.where(ok, R, np.nan)
    return HodographData(x, t, U, res, ok, sorted(set(boundary)), V, W)


def _bisect_time(xi, ta, tb, ua, V, W, dV, dW, tol, jac_tol, sgn, steps):
    for _ in range(steps):
        tm = 0.5 * (ta + tb)
        u, r, det = _newton(xi, tm, ua, V, W, dV, dW, tol)
        if u is not None and r <= tol and abs(det) >= jac_tol and np.sign(det) == sgn:
            ta, ua = tm, u
        else:
            tb = tm
    return 0.5 * (ta + tb)


_C8 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])


def _d8(y, h, axis):
    """Eighth-order centred first derivative; the four outer layers are NaN."""
    y = np.moveaxis(np.asarray(y, dtype=float), axis, 0)
    out = np.full_like(y, np.nan)
    m = y.shape[0]
    out[4:m - 4] = sum(c * y[k:m - 8 + k] for k, c in enumerate(_C8) if c)
    return np.moveaxis(out / h, 0, axis)


def fd_jets(y, h, mmax):
    """x-derivatives 0..mmax of non-periodic samples by repeated 8th-order stencils."""
    out = [np.asarray(y, dtype=float)]
    for _ in range(mmax):
        out.append(_d8(out[-1], h, -1))
    return out


def pde_residual(hd: HodographData, V=None):
    """max |u_t + V(u) u_x| over interior points (finite differences on the grid)."""
    V = V or hd.V
    U = hd.u
    ht = hd.t[1] - hd.t[0]
    hx = hd.x[1] - hd.x[0]
    ut = _d8(U, ht, 0)
    ux = _d8(U, hx, 1)
    nt, nx, n = U.shape
    vel = np.full_like(U, np.nan)
    for j in range(nt):
        for i in range(nx):
            if hd.valid[j, i]:
                vel[j, i] = V(U[j, i])
    r = np.abs(ut + vel * ux)
    r = r[np.isfinite(r)]
    return float(r.max()) if r.size else np.nan


# --------------------------------------------------------------------------
# perturbed solutions

def perturbed_solution(hd: HodographData, T: MiuraTransform, eps: float, q=None,
                       order=None, periodic_L=None, trends=None, params=None, rows=None):
    """w(x, t; ε) = q(T(u)) row by row.

    Jets of the hodograph field are spectral when ``periodic_L`` is given (each
    component periodic up to the linear trend in ``trends``), and 8th-order
    finite differences otherwise (the outer grid layers are then NaN).  At ε = 0 the
    hodograph samples are passed through unchanged."""
    nt, nx, n = hd.u.shape
    rows = range(nt) if rows is None else rows
    order = 0 if eps == 0 else order
    out = np.full((len(rows), nx, T.dst.n), np.nan)
    for r, j in enumerate(rows):
        if not hd.valid[j].all():
            raise ValueError(f"hodograph field not valid on the whole row t={hd.t[j]}")
        fields = [hd.u[j, :, i] for i in range(n)]
        _monotone(fields, hd.x[1] - hd.x[0], periodic_L, trends)
        if eps == 0:
            w = fields
        elif periodic_L is not None:
            w = apply_to_solution(T, fields, eps, L=periodic_L, order=order, trends=trends,
                                  params=params)
        else:
            need = max(T.jet_orders().values())
            jets = dict(params or {})
            for i, y in enumerate(fields):
                for m, arr in enumerate(fd_jets(y, hd.x[1] - hd.x[0], need)):
                    jets[str(T.src.var(i, m))] = arr
            with np.errstate(invalid="ignore"):
                w = apply_to_solution(T, None, eps, jets=jets, order=order)
        if q is not None:
            w = q(w)
        out[r] = np.stack(w, axis=-1)
    return out


def _monotone(fields, h, L, trends):
    for i, y in enumerate(fields):
        if L is not None:
            d = _spectral_jets(y, L, 1, (trends or [0.0] * len(fields))[i])[1]
        else:
            d = np.gradient(y, h)
        if np.any(d == 0) or (np.min(d) < 0 < np.max(d)):
            raise ValueError("the hodograph solution is not monotone on the region")


# --------------------------------------------------------------------------
# reference integrator

@dataclass
class ReferenceSolution:
    y: np.ndarray             # grid in the integration frame
    t: np.ndarray
    w: np.ndarray             # (len(t), N, n) in the physical variables at x = (1 + s t) y
    trend: float
    stats: dict

    def x(self, j):
        return (1 + self.trend * self.t[j]) * self.y


def _compile_system(system, vt, eps, params):
    fs = []
    for i in range(vt.n):
        terms = []
        for m, comps in sorted(system.items()):
            c = as_expr(comps[i])
            if c:
                terms.append((eps ** m, compile_numeric(c)))
        fs.append(terms)
    need = max((jet_order(as_expr(c), vt) for comps in system.values() for c in comps if c),
               default=0)
    return fs, need


def integrate_reference(system, vt: VarTable, w0, L, eps, t_end, params=None, trend=0.0,
                        t_eval=None, rtol=1e-13, atol=1e-15, dealias=False):
    """Pseudospectral method of lines for w_t = Σ ε^m ξ_m(w) on [0, L).

    ``trend`` s ≠ 0 handles scalar data w = s x + periodic for systems whose
    leading term is -w w_x and whose other terms do not contain w undifferentiated:
    in y = x/(1 + s t), w = s y + z the equation becomes
    z_t = -z (s + z_y)/(1 + s t) + Σ_{m>0} ε^m ξ_m evaluated on the jets of w,
    which is periodic in y.  Time stepping: DOP853."""
    params = dict(params or {})
    n = vt.n
    w0 = [np.asarray(a, dtype=float) for a in (w0 if isinstance(w0, (list, tuple)) else [w0])]
    N = len(w0[0])
    y = np.arange(N) * L / N
    k = 2 * np.pi * np.fft.fftfreq(N, d=L / N)
    mask = np.ones(N)
    if dealias:
        mask[np.abs(np.fft.fftfreq(N) * N) > N / 3] = 0.0
    if trend:
        if n != 1:
            raise ValueError("trend frames are scalar only")
        lead = as_expr(system[0][0])
        expected = -(vt.x(0) * vt.x(0, 1))
        if lead != expected:
            raise ValueError("trend frames need the leading term -w w_x")
        rest = {m: c for m, c in system.items() if m}
        for comps in rest.values():
            if vt.var(0) in as_expr(comps[0]).atoms():
                raise ValueError("ε-terms may not contain w undifferentiated in a trend frame")
        fs, need = _compile_system(rest, vt, eps, params)
        z0 = w0[0] - trend * y

        def rhs(t, z):
            a = 1 + trend * t
            zh = np.fft.fft(z) * mask
            env = dict(params)
            zy = None
            for m in range(1, max(need, 1) + 1):
                d = np.real(np.fft.ifft((1j * k) ** m * zh))
                if m == 1:
                    zy = d
                    d = trend + d
                env[str(vt.var(0, m))] = d / a ** m
            out = -z * (trend + zy) / a
            for c, f in fs[0]:
                out = out + c * f(env)
            return out
        state0 = z0
    else:
        fs, need = _compile_system(system, vt, eps, params)

        def rhs(t, s):
            env = dict(params)
            parts = s.reshape(n, N)
            for i in range(n):
                wh = np.fft.fft(parts[i]) * mask
                env[str(vt.var(i, 0))] = parts[i]
                for m in range(1, need + 1):
                    env[str(vt.var(i, m))] = np.real(np.fft.ifft((1j * k) ** m * wh))
            out = np.empty_like(parts)
            for i in range(n):
                acc = np.zeros(N)
                for c, f in fs[i]:
                    acc = acc + c * f(env)
                out[i] = acc
            return out.ravel()
        state0 = np.concatenate(w0)
    t_eval = np.array([t_end]) if t_eval is None else np.asarray(t_eval, dtype=float)
    sol = solve_ivp(rhs, (0.0, float(t_end)), state0, method="DOP853", t_eval=t_eval,
                    rtol=rtol, atol=atol)
    if not sol.success or not np.all(np.isfinite(sol.y)):
        raise FloatingPointError(f"reference integration failed: {sol.message}")
    if trend:
        W = (sol.y.T + trend * y)[:, :, None]
    else:
        W = sol.y.T.reshape(len(sol.t), n, N).transpose(0, 2, 1)
    return ReferenceSolution(y, sol.t, W, trend, {"nfev": sol.nfev})


# --------------------------------------------------------------------------
# ε-convergence

def fit_order(eps, err):
    """Least-squares fit err ≈ C ε^p; returns (p, C)."""
    eps = np.asarray(eps, dtype=float)
    err = np.asarray(err, dtype=float)
    if len(eps) < 2:
        raise ValueError("need at least two ε values to fit an order")
    if np.any(err <= 0):
        raise ValueError("errors must be positive to fit an order")
    p, lc = np.polyfit(np.log(eps), np.log(err), 1)
    return float(p), float(np.exp(lc))


@dataclass
class StudyReport:
    eps: list
    errors: list
    order: float
    C: float
    K: int
    t: float
    N: int

    def text(self):
        lines = [f"truncation  eps^{self.K}", f"time        {self.t:g}", f"modes       {self.N}"]
        for e, r in zip(self.eps, self.errors):
            lines.append(f"eps={e:<8g} max error {r:.6e}")
        lines.append(f"fitted order p = {self.order:.4f}  (C = {self.C:.4e})")
        return "\n".join(lines) + "\n"


def convergence_study(T: MiuraTransform, system, vt: VarTable, W, eps_list, t, K,
                      N=128, L=2 * np.pi, params=None, dW=None, ref_kw=None):
    """Error between the hodograph + reducing-transform pipeline and the reference
    integrator, for scalar systems with leading term -w w_x and data
    x = W(v) at t = 0 with W(v + L) = W(v) + L (monotone, periodic up to a trend).

    The transform is truncated at ε^K.  Returns a StudyReport with the fitted order."""
    eps_list = list(eps_list)
    if len(eps_list) < 2:
        raise ValueError("need at least two ε values to fit an order")
    params = dict(params or {})
    y = np.arange(N) * L / N
    Vf = lambda u: u
    dVf = lambda u: np.eye(1)

    def hodo(tt, xs):
        seed_u = _invert_scalar(W, xs[0], tt)
        return solve_hodograph(Vf, W, xs, np.array([tt]), (xs[0], tt, [seed_u]), dV=dVf, dW=dW)
    h0 = hodo(0.0, y)
    h1 = hodo(float(t), (1 + t) * y)
    errs = []
    for eps in eps_list:
        w0 = perturbed_solution(h0, T, eps, order=K, periodic_L=L, trends=[1.0],
                                params=params)[0, :, 0]
        ref = integrate_reference(system, vt, w0, L, eps, t, params=params, trend=1.0,
                                  **(ref_kw or {}))
        wp = perturbed_solution(h1, T, eps, order=K, periodic_L=(1 + t) * L,
                                trends=[1.0 / (1 + t)], params=params)[0, :, 0]
        errs.append(float(np.max(np.abs(ref.w[-1, :, 0] - wp))))
    p, C = fit_order(eps_list, errs)
    return StudyReport(eps_list, errs, p, C, K, float(t), N)


def _invert_scalar(W, x, t):
    """Solve x = v t + W(v) for scalar v by bracketing + Newton."""
    from scipy.optimize import brentq
    f = lambda v: v * t + float(np.atleast_1d(W(np.array([v])))[0]) - x
    a, b = x - 10.0, x + 10.0
    return brentq(f, a, b, xtol=1e-15)


# --------------------------------------------------------------------------
# CSV

def to_csv(x, t, fields, residuals=None, names=None, header=None) -> str:
    """Rows (x, t, field components..., residual) for one time slice."""
    fields = np.atleast_2d(np.asarray(fields, dtype=float))
    if fields.shape[0] != len(x):
        fields = fields.T
    names = names or [f"w{i + 1}" for i in range(fields.shape[1])]
    buf = io.StringIO()
    for line in header or ():
        buf.write(f"# {line}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["x", "t", *names] + (["residual"] if residuals is not None else []))
    for i, xi in enumerate(x):
        row = [repr(float(xi)), repr(float(t))] + [repr(float(v)) for v in fields[i]]
        if residuals is not None:
            row.append(repr(float(residuals[i])))
        wr.writerow(row)
    return buf.getvalue()
