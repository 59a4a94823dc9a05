"""Three-dimensional energy of thin prestrained plates at explicit deformations.

The energy of a deformation ``u`` of the plate of thickness ``h`` is

    E^h(u) = (1/h) int_{Omega x (-h/2, h/2)} W(grad u A^{-1}),   A = sqrt(G),

computed with tensor-product Gauss-Legendre quadrature.  Recovery
deformations are provided for the conformal and vertical-stretch families
(exact symbolic gradients) and for a general isometric immersion on a grid
(spline-interpolated fields).  ``fit_scaling`` extracts the exponent of
E^h in h.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
import sympy as sp
from scipy.interpolate import RectBivariateSpline

from ._parallel import map_chunks
from .bending import Immersion, cosserat_coefficients
from .density import EffectiveDensityContext, IsotropicModuli, QuadraticForm3
from .metric import (X1, X2, Box, Grid2, MetricField, ScalarField, check_spd,
                     metric_inv_sqrt, metric_sqrt, parse_expr)

log = logging.getLogger(__name__)

X3 = sp.Symbol("x3", real=True)
DEFAULT_HS = tuple(2.0 ** -k for k in range(3, 9))
HARMONIC_TOL = 1e-8


# ---------------------------------------------------------------------------
# energy densities
# ---------------------------------------------------------------------------

class DensityKind(str, Enum):
    GREEN_QUADRATIC = "GREEN_QUADRATIC"
    DIST_SQ_SO3 = "DIST_SQ_SO3"


def _dist_sq_so3(F: np.ndarray) -> np.ndarray:
    U, sig, Vt = np.linalg.svd(F)
    sgn = np.sign(np.linalg.det(U) * np.linalg.det(Vt))
    target = np.ones_like(sig)
    target[..., 2] = np.where(sgn == 0, 1.0, sgn)
    return np.sum((sig - target) ** 2, axis=-1)


@dataclass(frozen=True)
class DensityW:
    """Frame-indifferent densities vanishing on SO(3) with W(Id + tE) = t^2 Q3(E)/2 + O(t^3).

    ``GREEN_QUADRATIC``: (mu/8)|F^T F - Id|^2 + (lam/8)(tr(F^T F - Id))^2, whose
    Q3 is mu|sym E|^2 + lam (tr E)^2.
    ``DIST_SQ_SO3``: (mu/2) dist^2(F, SO(3)), whose Q3 is mu|sym E|^2.
    """

    kind: DensityKind = DensityKind.GREEN_QUADRATIC
    moduli: IsotropicModuli = field(default_factory=IsotropicModuli)

    def __post_init__(self):
        object.__setattr__(self, "kind", DensityKind(self.kind))

    def __call__(self, F) -> np.ndarray:
        F = np.asarray(F, dtype=float)
        mu, lam = self.moduli.mu, self.moduli.lam
        if self.kind is DensityKind.GREEN_QUADRATIC:
            E = np.einsum("...ki,...kj->...ij", F, F) - np.eye(3)
            tr = np.trace(E, axis1=-2, axis2=-1)
            return mu / 8.0 * np.sum(E * E, axis=(-2, -1)) + lam / 8.0 * tr ** 2
        return mu / 2.0 * _dist_sq_so3(F)

    def quadratic_form(self) -> QuadraticForm3:
        if self.kind is DensityKind.GREEN_QUADRATIC:
            return QuadraticForm3.isotropic(self.moduli.mu, self.moduli.lam)
        return QuadraticForm3.isotropic(self.moduli.mu, 0.0)


def density_w(DW: DensityW, F) -> np.ndarray:
    return DW(F)


# ---------------------------------------------------------------------------
# deformations
# ---------------------------------------------------------------------------

@dataclass
class Deformation3:
    """u(x1, x2, x3) with its gradient (..., 3, 3); columns are d/dx1, d/dx2, d/dx3."""

    u: Callable
    grad: Callable
    label: str = "deformation"
    fields: object = None

    def __call__(self, x1, x2, x3):
        return self.u(x1, x2, x3)

    def fd_check(self, points: np.ndarray, step: float = 1e-6) -> float:
        """Max abs difference between ``grad`` and central differences of ``u``."""
        x1, x2, x3 = (np.asarray(points[:, k], float) for k in range(3))
        J = self.grad(x1, x2, x3)
        err = 0.0
        for k in range(3):
            e = [np.zeros_like(x1) for _ in range(3)]
            e[k] = e[k] + step
            up = self.u(x1 + e[0], x2 + e[1], x3 + e[2])
            dn = self.u(x1 - e[0], x2 - e[1], x3 - e[2])
            err = max(err, float(np.max(np.abs((up - dn) / (2 * step) - J[..., :, k]))))
        return err


def _lambdify3(exprs, shape):
    flat = [sp.sympify(e) for e in np.asarray(exprs, dtype=object).ravel()]
    fn = sp.lambdify((X1, X2, X3), flat, modules="numpy", cse=True)

    def evaluate(x1, x2, x3):
        x1, x2, x3 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x1, x2, x3)))
        out = np.empty(x1.shape + (len(flat),))
        for k, v in enumerate(fn(x1, x2, x3)):
            out[..., k] = v
        return out.reshape(x1.shape + tuple(shape))

    return evaluate


def deformation_from_expr(u_exprs, label: str) -> Deformation3:
    u = sp.Matrix(u_exprs)
    J = u.jacobian([X1, X2, X3])
    return Deformation3(_lambdify3(list(u), (3,)), _lambdify3(J.tolist(), (3, 3)), label)


def recovery_koko(lam) -> Deformation3:
    """u = (x1, x2, 0) + (-(x3^2/4) d1 lam, -(x3^2/4) d2 lam, sqrt(lam) x3)."""
    lam = parse_expr(lam)
    if lam.is_number and float(lam) <= 0:
        raise ValueError("lambda must be positive")
    u = [X1 - X3 ** 2 / 4 * sp.diff(lam, X1),
         X2 - X3 ** 2 / 4 * sp.diff(lam, X2),
         sp.sqrt(lam) * X3]
    return deformation_from_expr(u, f"koko[{lam}]")


def conformal_flat_immersion(lam) -> list[sp.Expr] | None:
    """Closed-form planar y with (grad y)^T grad y = lam Id_2 for known cases."""
    lam = sp.simplify(parse_expr(lam))
    if lam.free_symbols == set():
        c = sp.sqrt(lam)
        return [c * X1, c * X2]
    a, b = sp.Wild("a", exclude=[X1, X2]), sp.Wild("b", exclude=[X1, X2])
    m = sp.log(lam).expand(force=True).match(a * X1 + b)
    if m and m[a] != 0:
        # lam = exp(a x1 + b): y = (2/a) e^{(a x1 + b)/2} (cos(a x2/2), sin(a x2/2))
        k = m[a]
        r = 2 / k * sp.exp((k * X1 + m[b]) / 2)
        return [r * sp.cos(k * X2 / 2), r * sp.sin(k * X2 / 2)]
    return None


def recovery_ciag(lam, y=None, samples: int = 7, domain: Box = ((0.0, 1.0), (0.0, 1.0))) -> Deformation3:
    """u = y* + x3 sqrt(lam) e3 - (x3^2/4) ((grad y)^{-T} grad lam)*.

    ``y`` is a pair of expressions with (grad y)^T grad y = lam Id_2; when
    omitted a closed form is used if one is known.  A warning is issued when
    log(lam) is not harmonic, since then the h^4 upper bound is not expected.
    """
    lam = parse_expr(lam)
    lap = ScalarField(sp.log(lam)).laplacian_expr()
    xs = np.linspace(domain[0][0], domain[0][1], samples)
    ys = np.linspace(domain[1][0], domain[1][1], samples)
    P1, P2 = np.meshgrid(xs, ys, indexing="ij")
    lap_vals = ScalarField(lap)(P1, P2)
    if np.max(np.abs(lap_vals)) > HARMONIC_TOL:
        warnings.warn("log(lambda) is not harmonic; the h^4 scaling claim does not apply",
                      RuntimeWarning, stacklevel=2)
    if y is None:
        y = conformal_flat_immersion(lam)
        if y is None:
            raise ValueError("no closed-form flat immersion known for this lambda; pass y")
    y = [parse_expr(e) for e in y]
    Y = sp.Matrix(y).jacobian([X1, X2])
    defect = sp.lambdify((X1, X2), Y.T * Y - lam * sp.eye(2), modules="numpy")
    err = max(np.max(np.abs(np.asarray(defect(a, b), dtype=float))) for a, b in zip(P1.ravel(), P2.ravel()))
    if err > 1e-10 * (1 + max(abs(float(lam.subs({X1: a, X2: b}))) for a, b in zip(P1.ravel(), P2.ravel()))):
        raise ValueError(f"y is not an isometric immersion of lambda Id_2 (defect {err:.3e})")
    glam = sp.Matrix([sp.diff(lam, X1), sp.diff(lam, X2)])
    v = sp.simplify(Y.inv().T * glam)
    u = [y[0] - X3 ** 2 / 4 * v[0], y[1] - X3 ** 2 / 4 * v[1], X3 * sp.sqrt(lam)]
    return deformation_from_expr(u, f"ciag[{lam}]")


@dataclass
class KirchhoffFields:
    grid: Grid2
    y: np.ndarray
    b: np.ndarray
    d: np.ndarray
    c: np.ndarray


def recovery_kirchhoff(M: MetricField, imm: Immersion, QF: QuadraticForm3 | None = None,
                       iso_tol: float = 1e-6) -> Deformation3:
    """u = y + x3 b + (x3^2/2) d with d = Q^{-T}(c - (1/2) grad|b|^2).

    ``y`` and ``b`` are represented by bicubic splines on the immersion grid;
    c is the optimal out-of-plane correction for F = (grad y)^T grad b.
    """
    QF = QF or QuadraticForm3.isotropic()
    grid = imm.grid
    X1n, X2n = grid.mesh()
    G = M(X1n, X2n)
    check_spd(G, what=M.label)
    x1, x2 = grid.x1, grid.x2

    def spl(field3):
        return [RectBivariateSpline(x1, x2, field3[..., k], kx=3, ky=3, s=0) for k in range(3)]

    def ev(splines, a, b, dx=0, dy=0):
        return np.stack([s(a, b, dx=dx, dy=dy, grid=False) for s in splines], axis=-1)

    ys = spl(imm.y)
    t1, t2 = ev(ys, X1n, X2n, 1, 0), ev(ys, X1n, X2n, 0, 1)
    first = np.stack([np.stack([np.sum(t1 * t1, -1), np.sum(t1 * t2, -1)], -1),
                      np.stack([np.sum(t2 * t1, -1), np.sum(t2 * t2, -1)], -1)], -2)
    defect = float(np.max(np.abs(first - G[..., :2, :2])))
    if defect > iso_tol:
        log.warning("immersion is not isometric: max defect %.3e", defect)
    c_ = np.cross(t1, t2)
    nc = np.linalg.norm(c_, axis=-1)
    if np.any(nc < 1e-12):
        raise ValueError("degenerate frame in recovery immersion")
    N = c_ / nc[..., None]

    beta, s = cosserat_coefficients(G)
    b = beta[..., 0:1] * t1 + beta[..., 1:2] * t2 + s[..., None] * N
    bs = spl(b)
    b1, b2 = ev(bs, X1n, X2n, 1, 0), ev(bs, X1n, X2n, 0, 1)
    F = np.stack([np.stack([np.sum(t1 * b1, -1), np.sum(t1 * b2, -1)], -1),
                  np.stack([np.sum(t2 * b1, -1), np.sum(t2 * b2, -1)], -1)], -2)
    ctx = EffectiveDensityContext(metric_sqrt(G), QF)
    cvec = ctx.minimizer_c0(F)
    grad_b2 = np.zeros(grid.shape + (3,))
    grad_b2[..., 0] = 2 * np.sum(b * b1, -1)
    grad_b2[..., 1] = 2 * np.sum(b * b2, -1)
    Q = np.stack([t1, t2, b], axis=-1)
    rhs = cvec - 0.5 * grad_b2
    d = np.linalg.solve(np.swapaxes(Q, -1, -2), rhs[..., None])[..., 0]
    ds = spl(d)

    def u(a, bb, x3):
        a, bb, x3 = np.broadcast_arrays(*(np.asarray(v, float) for v in (a, bb, x3)))
        x3 = x3[..., None]
        return ev(ys, a, bb) + x3 * ev(bs, a, bb) + 0.5 * x3 ** 2 * ev(ds, a, bb)

    def grad(a, bb, x3):
        a, bb, x3 = np.broadcast_arrays(*(np.asarray(v, float) for v in (a, bb, x3)))
        z = x3[..., None]
        cols = []
        for dx, dy in ((1, 0), (0, 1)):
            cols.append(ev(ys, a, bb, dx, dy) + z * ev(bs, a, bb, dx, dy)
                        + 0.5 * z ** 2 * ev(ds, a, bb, dx, dy))
        cols.append(ev(bs, a, bb) + z * ev(ds, a, bb))
        return np.stack(cols, axis=-1)

    return Deformation3(u, grad, f"kirchhoff[{M.label}]", KirchhoffFields(grid, imm.y, b, d, cvec))


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureSpec:
    cells: int = 8
    q1: int = 4
    q3: int = 6


def _inplane_points(domain: Box, cells: int, q: int):
    xg, wg = np.polynomial.legendre.leggauss(q)
    pts, wts = [], []
    for lo, hi in domain:
        edges = np.linspace(lo, hi, cells + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        pts.append((mid[:, None] + half[:, None] * xg[None, :]).ravel())
        wts.append((half[:, None] * wg[None, :]).ravel())
    P1, P2 = np.meshgrid(pts[0], pts[1], indexing="ij")
    W = np.outer(wts[0], wts[1])
    return P1.ravel(), P2.ravel(), W.ravel()


def energy_3d(M: MetricField, DW: DensityW, u: Deformation3, h: float,
              quad: QuadratureSpec | None = None, domain: Box | None = None,
              threads: int | None = None) -> float:
    """(1/h) int_{Omega x (-h/2, h/2)} W(grad u A^{-1})."""
    if not h > 0:
        raise ValueError("thickness h must be positive")
    quad = quad or QuadratureSpec()
    domain = domain or M.domain
    P1, P2, W2 = _inplane_points(domain, quad.cells, quad.q1)
    Ainv = metric_inv_sqrt(M(P1, P2))
    z, wz = np.polynomial.legendre.leggauss(quad.q3)
    z, wz = 0.5 * h * z, 0.5 * h * wz

    def kernel(p1, p2, ai):
        acc = np.zeros(len(p1))
        for zk, wk in zip(z, wz):
            F = u.grad(p1, p2, np.full_like(p1, zk)) @ ai
            acc += wk * DW(F)
        return acc

    vals = map_chunks(kernel, P1, P2, Ainv, threads=threads)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("non-finite energy density in quadrature")
    return float(np.sum(W2 * vals) / h)


# ---------------------------------------------------------------------------
# scaling fits
# ---------------------------------------------------------------------------

@dataclass
class ScalingReport:
    h: list
    E: list
    slope: float
    intercept: float
    residual: float
    exact: bool = False
    flagged: bool = False

    def as_dict(self) -> dict:
        return {"samples": [{"h": a, "E_h": b} for a, b in zip(self.h, self.E)],
                "slope": self.slope, "intercept": self.intercept, "residual": self.residual,
                "exact": self.exact, "flagged": self.flagged}


def fit_scaling(samples) -> ScalingReport:
    """Least-squares slope of log E^h against log h.

    All-zero energies give ``exact``; a mix of zero and positive energies is
    fitted on the positive entries and ``flagged``.
    """
    samples = sorted(((float(a), float(b)) for a, b in samples), key=lambda p: -p[0])
    hs = np.array([p[0] for p in samples])
    Es = np.array([p[1] for p in samples])
    if len(hs) < 4:
        raise ValueError("need at least 4 samples")
    if np.any(hs <= 0) or len(np.unique(hs)) != len(hs):
        raise ValueError("thicknesses must be positive and distinct")
    if np.any(Es < 0):
        raise ValueError("energies must be nonnegative")
    pos = Es > 0
    if not pos.any():
        return ScalingReport(hs.tolist(), Es.tolist(), float("nan"), float("nan"), 0.0, exact=True)
    flagged = not pos.all()
    if pos.sum() < 2:
        raise ValueError("fewer than two positive energies")
    lx, ly = np.log(hs[pos]), np.log(Es[pos])
    (slope, icpt), res, *_ = np.polyfit(lx, ly, 1, full=True)
    resid = float(np.sqrt(res[0] / pos.sum())) if len(res) else 0.0
    return ScalingReport(hs.tolist(), Es.tolist(), float(slope), float(icpt), resid, flagged=flagged)


def scaling_sweep(M: MetricField, DW: DensityW, u: Deformation3, hs=DEFAULT_HS,
                  quad: QuadratureSpec | None = None, threads: int | None = None) -> ScalingReport:
    samples = [(h, energy_3d(M, DW, u, h, quad, threads=threads)) for h in hs]
    return fit_scaling(samples)
