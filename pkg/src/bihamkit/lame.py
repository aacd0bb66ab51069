"""Semisimple hydrodynamic pencils for n = 2 from their rotation coefficients.

For two components the Lamé system is linear:

    ∂₁γ₁₂ + ∂₂γ₂₁ = 0,   u¹∂₁γ₁₂ + u²∂₂γ₂₁ + ½(γ₁₂ + γ₂₁) = 0,

so γ₁₂ is transported along u¹ and γ₂₁ along u², both driven by
S = (γ₁₂ + γ₂₁) / (2(u¹ - u²)).  All fields live on a tensor Chebyshev grid and every
Goursat-type problem is solved as one dense collocation system.  Quadratures for
flat coordinates use composite Gauss-Legendre panels, so their self-convergence
order is that of the panel rule.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C
from numpy.polynomial.legendre import leggauss

__all__ = [
    "Cheb", "Grid2", "RotationField", "ChiField", "ReconstructedPencil", "solve_lame_n2",
    "solve_chi", "solve_psi", "flat_coordinates", "casimir", "reconstruct_and_verify",
    "curvature", "covariant_hessian", "rotation_from_lame", "self_convergence",
    "field_csv",
]


class Cheb:
    """Chebyshev-Lobatto nodes on [a, b] (ascending) with differentiation and
    indefinite-integration matrices."""

    def __init__(self, a, b, N):
        if not b > a:
            raise ValueError("empty interval")
        self.a, self.b, self.N = float(a), float(b), int(N)
        s = -np.cos(np.pi * np.arange(N + 1) / N)
        self.s = s
        self.x = a + (b - a) * (s + 1) / 2
        V = C.chebvander(s, N)
        Vi = np.linalg.inv(V)
        self._Vi = Vi
        scale = (b - a) / 2
        Dc = np.stack([C.chebder(Vi[:, j]) for j in range(N + 1)], axis=1)
        self.D = C.chebvander(s, N - 1) @ Dc / scale
        Ic = np.stack([C.chebint(Vi[:, j], lbnd=-1) for j in range(N + 1)], axis=1)
        self.Q = C.chebvander(s, N + 1) @ Ic * scale
        w = np.ones(N + 1)
        w[0] = w[-1] = 0.5
        w[1::2] *= -1
        self._bw = w

    def weights(self, x):
        """Barycentric interpolation rows for the points x."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros((len(x), self.N + 1))
        for r, xi in enumerate(x):
            d = xi - self.x
            hit = np.flatnonzero(np.abs(d) < 1e-15 * max(1.0, abs(xi)))
            if len(hit):
                out[r, hit[0]] = 1.0
                continue
            c = self._bw / d
            out[r] = c / c.sum()
        return out

    def integral_from(self, x0):
        """Matrix mapping samples f to ∫_{x0}^{x_j} f."""
        return self.Q - self.weights([x0]) @ self.Q


@dataclass
class Grid2:
    g1: Cheb
    g2: Cheb

    @classmethod
    def box(cls, box, N):
        a1, b1, a2, b2 = box
        n1, n2 = (N, N) if np.isscalar(N) else N
        return cls(Cheb(a1, b1, n1), Cheb(a2, b2, n2))

    @property
    def shape(self):
        return (self.g1.N + 1, self.g2.N + 1)

    def mesh(self):
        return np.meshgrid(self.g1.x, self.g2.x, indexing="ij")

    def d1(self, F):
        return self.g1.D @ F

    def d2(self, F):
        return F @ self.g2.D.T

    def interp(self, F, p1, p2):
        return (self.g1.weights(p1) @ F @ self.g2.weights(p2).T)

    def check_domain(self, tol=1e-12):
        U1, U2 = self.mesh()
        if np.min(np.abs(U1 - U2)) < tol:
            raise ValueError("grid touches the diagonal u1 = u2")
        if np.min(np.abs(U1)) < tol or np.min(np.abs(U2)) < tol:
            raise ValueError("grid touches u^i = 0")


def _kron_ops(grid, base):
    n1, n2 = grid.shape
    I1 = np.kron(grid.g1.integral_from(base[0]), np.eye(n2))    # integrate in u1
    I2 = np.kron(np.eye(n1), grid.g2.integral_from(base[1]))    # integrate in u2
    return I1, I2


def _line(data, xs):
    return np.asarray(data(xs) if callable(data) else data, dtype=float) * np.ones_like(xs)


@dataclass
class RotationField:
    grid: Grid2
    base: tuple
    g12: np.ndarray
    g21: np.ndarray

    def residuals(self, grid: Grid2 | None = None):
        """Max |(lame2)| and |(lame3)|, evaluated after interpolating to ``grid``."""
        G = grid or self.grid
        if grid is not None:
            a = _resample(self.grid, self.g12, G)
            b = _resample(self.grid, self.g21, G)
        else:
            a, b = self.g12, self.g21
        U1, U2 = G.mesh()
        r2 = G.d1(a) + G.d2(b)
        r3 = U1 * G.d1(a) + U2 * G.d2(b) + 0.5 * (a + b)
        return float(np.max(np.abs(r2))), float(np.max(np.abs(r3)))

    def at(self, p1, p2):
        return self.grid.interp(self.g12, p1, p2), self.grid.interp(self.g21, p1, p2)


def _resample(src: Grid2, F, dst: Grid2):
    return src.interp(F, dst.g1.x, dst.g2.x)


def solve_lame_n2(g12_line, g21_line, box, N=24, base=None) -> RotationField:
    """Rotation coefficients from γ₁₂(u¹₀, ·) and γ₂₁(·, u²₀).

    The data are callables (or arrays on the grid lines); ``base`` = (u¹₀, u²₀)
    defaults to the lower-left corner of ``box`` = (a1, b1, a2, b2)."""
    grid = Grid2.box(box, N)
    grid.check_domain()
    base = base or (box[0], box[2])
    if (min(box[0], box[1]) <= 0 <= max(box[0], box[1])) or (min(box[2], box[3]) <= 0 <= max(box[2], box[3])):
        raise ValueError("grid touches u^i = 0")
    n1, n2 = grid.shape
    U1, U2 = grid.mesh()
    B12 = np.tile(_line(g12_line, grid.g2.x), (n1, 1))
    B21 = np.tile(_line(g21_line, grid.g1.x)[:, None], (1, n2))
    I1, I2 = _kron_ops(grid, base)
    s = (1.0 / (2.0 * (U1 - U2))).ravel()
    S = np.hstack([np.diag(s), np.diag(s)])
    m = n1 * n2
    A = np.eye(2 * m) + np.vstack([I1 @ S, -I2 @ S])
    rhs = np.concatenate([B12.ravel(), B21.ravel()])
    sol = np.linalg.solve(A, rhs) if np.any(rhs) else np.zeros(2 * m)
    return RotationField(grid, tuple(base), sol[:m].reshape(n1, n2), sol[m:].reshape(n1, n2))


@dataclass
class ChiField:
    gamma: RotationField
    chi1: np.ndarray
    chi2: np.ndarray

    @property
    def grid(self):
        return self.gamma.grid

    def residuals(self):
        G, g = self.grid, self.gamma
        r1 = G.d2(self.chi1) - g.g21 * self.chi2
        r2 = G.d1(self.chi2) - g.g12 * self.chi1
        mixed = max(float(np.max(np.abs(G.d1(G.d2(c)) - G.d2(G.d1(c))))) for c in (self.chi1, self.chi2))
        return float(np.max(np.abs(r1))), float(np.max(np.abs(r2))), mixed

    def velocities(self, H: "ChiField"):
        """V^i = χ_i / H_i for H the Lamé-coefficient solution."""
        return self.chi1 / H.chi1, self.chi2 / H.chi2


def solve_chi(gamma: RotationField, chi1_line, chi2_line) -> ChiField:
    """∂₂χ₁ = γ₂₁χ₂, ∂₁χ₂ = γ₁₂χ₁ with χ₁(·, u²₀) and χ₂(u¹₀, ·) prescribed."""
    grid = gamma.grid
    n1, n2 = grid.shape
    B1 = np.tile(_line(chi1_line, grid.g1.x)[:, None], (1, n2))
    B2 = np.tile(_line(chi2_line, grid.g2.x), (n1, 1))
    I1, I2 = _kron_ops(grid, gamma.base)
    m = n1 * n2
    A = np.eye(2 * m)
    A[:m, m:] = -I2 @ np.diag(gamma.g21.ravel())
    A[m:, :m] = -I1 @ np.diag(gamma.g12.ravel())
    sol = np.linalg.solve(A, np.concatenate([B1.ravel(), B2.ravel()]))
    c1, c2 = sol[:m].reshape(n1, n2), sol[m:].reshape(n1, n2)
    if np.min(np.abs(c1)) < 1e-12 or np.min(np.abs(c2)) < 1e-12:
        raise ValueError("χ vanishes on the grid")
    return ChiField(gamma, c1, c2)


def _line_ode(cheb: Cheb, A, y0, x0):
    """y' = A(x) y on the nodes of ``cheb`` with y(x0) = y0; A has shape (N+1, 2, 2)."""
    n = cheb.N + 1
    Q = cheb.integral_from(x0)
    M = np.eye(2 * n)
    for i in range(2):
        for j in range(2):
            M[i * n:(i + 1) * n, j * n:(j + 1) * n] -= Q * A[:, i, j][None, :]
    rhs = np.concatenate([np.full(n, y0[0]), np.full(n, y0[1])])
    y = np.linalg.solve(M, rhs)
    return y[:n], y[n:]


def _psi_mats(gamma, lam, u1, u2, g12, g21):
    """Coefficient matrices of ∂₁ψ and ∂₂ψ for (lax1); lam=None means λ = ∞."""
    if lam is None:
        A1 = [[0.0, -g21], [g21, 0.0]]
        A2 = [[0.0, g12], [-g12, 0.0]]
    else:
        A1 = [[-1 / (2 * (u1 - lam)), -g21 * (u2 - lam) / (u1 - lam)], [g21, 0.0]]
        A2 = [[0.0, g12], [-g12 * (u1 - lam) / (u2 - lam), -1 / (2 * (u2 - lam))]]
    return np.array(A1, dtype=float), np.array(A2, dtype=float)


def solve_psi(gamma: RotationField, lam=None, psi0=(1.0, 0.0), order="12"):
    """Solution of (lax1) at λ (λ = None: the flat-coordinate system of g₁) with
    ψ(u₀) = psi0, integrated first along u¹ then along u² (``order="12"``) or the
    other way round.  Returns (ψ₁, ψ₂) on the grid."""
    G = gamma.grid
    n1, n2 = G.shape
    U1, U2 = G.mesh()
    b1, b2 = gamma.base

    def mats(i, j):
        return _psi_mats(gamma, lam, U1[i, j], U2[i, j], gamma.g12[i, j], gamma.g21[i, j])
    # the base point may sit between nodes: interpolate the line coefficients
    w1 = G.g1.weights([b1])[0]
    w2 = G.g2.weights([b2])[0]
    P1 = np.empty((n1, n2))
    P2 = np.empty((n1, n2))
    if order == "12":
        A = np.array([sum(w2[j] * mats(i, j)[0] for j in range(n2)) for i in range(n1)])
        l1, l2 = _line_ode(G.g1, A, psi0, b1)
        for i in range(n1):
            A = np.array([mats(i, j)[1] for j in range(n2)])
            P1[i], P2[i] = _line_ode(G.g2, A, (l1[i], l2[i]), b2)
    else:
        A = np.array([sum(w1[i] * mats(i, j)[1] for i in range(n1)) for j in range(n2)])
        l1, l2 = _line_ode(G.g2, A, psi0, b2)
        for j in range(n2):
            A = np.array([mats(i, j)[0] for i in range(n1)])
            P1[:, j], P2[:, j] = _line_ode(G.g1, A, (l1[j], l2[j]), b1)
    return P1, P2


def _gl_panels(a, b, panels, m):
    xg, wg = leggauss(m)
    edges = np.linspace(a, b, panels + 1)
    xs = []
    ws = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        xs.append((hi - lo) / 2 * xg + (hi + lo) / 2)
        ws.append((hi - lo) / 2 * wg)
    return np.concatenate(xs), np.concatenate(ws)


def _quad_potential(grid: Grid2, a1, a2, base, targets, panels, m):
    """∫ a₁du¹ + a₂du² from ``base`` along u¹ then u², composite Gauss-Legendre."""
    out = []
    for p1, p2 in targets:
        x, w = _gl_panels(base[0], p1, panels, m)
        s = w @ grid.interp(a1, x, [base[1]])[:, 0] if p1 != base[0] else 0.0
        y, v = _gl_panels(base[1], p2, panels, m)
        s += v @ grid.interp(a2, [p1], y)[0] if p2 != base[1] else 0.0
        out.append(s)
    return np.array(out)


def flat_coordinates(chi: ChiField, lam=None, targets=None, panels=8, m=4):
    """Flat coordinates v^α (α = 1, 2) of g₁ (lam=None) or of g₂ - λg₁.

    dv^α = Σ χ_i ψ_i^α du^i with ψ^α the fundamental system normalised at u₀.
    Values at ``targets`` (default: the grid nodes) by composite Gauss-Legendre
    quadrature with ``panels`` panels of ``m`` points."""
    G = chi.grid
    U1, U2 = G.mesh()
    if targets is None:
        targets = list(zip(U1.ravel(), U2.ravel()))
    vs = []
    for psi0 in ((1.0, 0.0), (0.0, 1.0)):
        p1, p2 = solve_psi(chi.gamma, lam, psi0)
        vs.append(_quad_potential(G, chi.chi1 * p1, chi.chi2 * p2, chi.gamma.base, targets,
                                  panels, m))
    return np.array(vs)


def casimir(chi: ChiField, lam, psi0=(1.0, 0.0), targets=None, panels=8, m=4):
    """Density P of a Casimir of g₂ - λg₁: dP = Σ χ_i ψ_i du^i with ψ from (lax1) at λ."""
    G = chi.grid
    p1, p2 = solve_psi(chi.gamma, lam, psi0)
    U1, U2 = G.mesh()
    if targets is None:
        targets = list(zip(U1.ravel(), U2.ravel()))
    return _quad_potential(G, chi.chi1 * p1, chi.chi2 * p2, chi.gamma.base, targets, panels, m)


# --------------------------------------------------------------------------
# geometry checks on the grid

def _christoffel(G: Grid2, E, F):
    """Christoffel symbols Γ^k_ij of the diagonal metric diag(E, F)."""
    g = [E, F]
    d = [[G.d1(E), G.d2(E)], [G.d1(F), G.d2(F)]]     # d[i][k] = ∂_k g_ii
    Gam = np.zeros((2, 2, 2) + E.shape)
    for k in range(2):
        for i in range(2):
            for j in range(2):
                val = 0.0
                # Γ^k_ij = ½ g^kk (∂_i g_kj + ∂_j g_ki - ∂_k g_ij)
                if k == j:
                    val = val + d[k][i]
                if k == i:
                    val = val + d[k][j]
                if i == j:
                    val = val - d[i][k]
                Gam[k, i, j] = 0.5 * val / g[k]
    return Gam


def curvature(G: Grid2, E, F):
    """Max |R_1212| / |E F| for the metric E (du¹)² + F (du²)² sampled on the grid."""
    s = np.sqrt(np.abs(E * F))
    K = (G.d1(G.d1(F) / s) + G.d2(G.d2(E) / s)) / (2 * s)
    return float(np.max(np.abs(K)))


def covariant_hessian(G: Grid2, E, F, v):
    """Max |∇_i∂_j v| for the diagonal metric diag(E, F)."""
    Gam = _christoffel(G, E, F)
    dv = [G.d1(v), G.d2(v)]
    H = [[G.d1(dv[0]), G.d2(dv[0])], [G.d1(dv[1]), G.d2(dv[1])]]
    worst = 0.0
    for i in range(2):
        for j in range(2):
            r = H[i][j] - Gam[0, i, j] * dv[0] - Gam[1, i, j] * dv[1]
            worst = max(worst, float(np.max(np.abs(r))))
    return worst


@dataclass
class ReconstructedPencil:
    chi: ChiField
    g1: tuple            # contravariant diagonal entries χ_i^{-2}
    g2: tuple            # u^i χ_i^{-2}
    curvature: tuple     # (g1, g2)
    flat: np.ndarray | None = None
    flat_hessian: float | None = None
    casimir_hessian: dict = field(default_factory=dict)
    trivial: bool = False
    verdicts: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(self.verdicts.values())


def reconstruct_and_verify(gamma: RotationField, chi: ChiField, lams=(), tol=1e-6,
                           panels=8, m=4) -> ReconstructedPencil:
    """Both metrics of the pencil, their curvature, flat coordinates of g₁ and the
    Casimirs of g₂ - λg₁ for each sampled λ, with pass/fail verdicts."""
    G = gamma.grid
    U1, U2 = G.mesh()
    c1, c2 = chi.chi1, chi.chi2
    if np.min(np.abs(c1)) == 0 or np.min(np.abs(c2)) == 0:
        raise ValueError("χ vanishes on the grid")
    E1, F1 = c1 ** 2, c2 ** 2                      # covariant g₁
    E2, F2 = c1 ** 2 / U1, c2 ** 2 / U2            # covariant g₂
    k1, k2 = curvature(G, E1, F1), curvature(G, E2, F2)
    trivial = not np.any(gamma.g12) and not np.any(gamma.g21)
    flat = flat_coordinates(chi, None, panels=panels, m=m)
    hess = max(covariant_hessian(G, E1, F1, f.reshape(G.shape)) for f in flat)
    cas = {}
    for lam in lams:
        P = casimir(chi, lam, panels=panels, m=m).reshape(G.shape)
        cas[lam] = covariant_hessian(G, E1 / (U1 - lam), F1 / (U2 - lam), P)
    verdicts = {"curvature g1": k1 < tol, "curvature g2": k2 < tol, "flat coordinates": hess < tol}
    for lam, h in cas.items():
        verdicts[f"casimir lambda={lam:g}"] = h < tol
    return ReconstructedPencil(chi, (c1 ** -2, c2 ** -2), (U1 * c1 ** -2, U2 * c2 ** -2),
                               (k1, k2), flat, hess, cas, trivial, verdicts)


def rotation_from_lame(G: Grid2, H1, H2):
    """γ_ij = H_i^{-1} ∂_i H_j from sampled Lamé coefficients."""
    return G.d2(H1) / H2, G.d1(H2) / H1


def self_convergence(chi: ChiField, target, panels=(2, 4, 8, 16), m=2, lam=None):
    """Observed order of the flat-coordinate quadrature at one point."""
    vals = [flat_coordinates(chi, lam, targets=[target], panels=p, m=m)[:, 0] for p in panels]
    errs = [float(np.max(np.abs(vals[i] - vals[i + 1]))) for i in range(len(vals) - 1)]
    orders = [float(np.log2(errs[i] / errs[i + 1])) for i in range(len(errs) - 1)
              if errs[i + 1] > 0]
    return errs, orders


def field_csv(grid: Grid2, fields: dict, meta: dict | None = None) -> str:
    """u1, u2 and the named fields, one row per node; metadata as '#' lines."""
    buf = io.StringIO()
    for k, v in (meta or {}).items():
        buf.write(f"# {k}: {v}\n")
    wr = csv.writer(buf, lineterminator="\n")
    names = list(fields)
    wr.writerow(["u1", "u2", *names])
    U1, U2 = grid.mesh()
    for idx in np.ndindex(U1.shape):
        wr.writerow([repr(float(U1[idx])), repr(float(U2[idx]))] +
                    [repr(float(fields[n][idx])) for n in names])
    return buf.getvalue()
