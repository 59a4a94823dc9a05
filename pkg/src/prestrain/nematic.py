"""Director-field metrics of nematic glass sheets.

A unit director n_hat = (n1, n2, n3), a stretch ratio r and an exponent delta
generate

    G = r^(2 delta) (Id_3 + (r^2 - 1) n_hat (x) n_hat),
    A = sqrt(G) = r^delta (Id_3 + (r - 1) n_hat (x) n_hat).

For planar directors (n3 = 0) immersibility of G, flatness of G_2x2,
vanishing of curl^T curl(n (x) n) and vanishing of the bending curvatures
all coincide; ``nematic_classify`` evaluates all four.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
import sympy as sp

from .bending import DegenerateFrameError, Immersion, cosserat
from .density import (ConsistencyError, IsotropicModuli, QuadraticForm3,
                      EffectiveDensityContext, q2_iso0, q2_isotropic_closed, sym)
from .diffgeo import gaussian_curvature_2d, riemann, vanishing_threshold
from .metric import (X1, X2, Box, Grid2, MetricField, lambdify_array,
                     metric_from_expr, metric_sqrt, parse_expr)

log = logging.getLogger(__name__)

DISCLINATION_DOMAIN: Box = ((0.5, 1.5), (0.5, 1.5))
BRANCH_TOL = 1e-10
DEFAULT_R = 1.2
DEFAULT_NU = 1.0


def delta_from_nu(nu: float) -> float:
    return -nu / (nu + 1.0)


class PatternKind(str, Enum):
    RADIAL = "RADIAL"
    AZIMUTHAL = "AZIMUTHAL"
    SPIRAL = "SPIRAL"
    CUSTOM = "CUSTOM"
    UNIFORM = "UNIFORM"


@dataclass(frozen=True)
class PatternSpec:
    """In-plane angle field of the director.

    Disclination kinds use n = (cos(theta + psi), sin(theta + psi)) with
    theta the polar angle; ``CUSTOM`` takes the angle expression directly.
    ``tilt`` is an optional expression for the angle between n_hat and e3
    (pi/2, the default, gives a planar director).
    """

    kind: PatternKind = PatternKind.RADIAL
    psi: float = 0.0
    theta: str | None = None
    tilt: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PatternKind(str(self.kind).upper()))
        if self.kind is PatternKind.CUSTOM and self.theta is None:
            raise ValueError("custom pattern needs a theta expression")

    @property
    def is_disclination(self) -> bool:
        return self.kind in (PatternKind.RADIAL, PatternKind.AZIMUTHAL, PatternKind.SPIRAL)

    def director_exprs(self) -> list[sp.Expr]:
        if self.is_disclination:
            psi = {PatternKind.RADIAL: sp.Integer(0), PatternKind.AZIMUTHAL: sp.pi / 2}.get(
                self.kind, sp.nsimplify(self.psi) if self.psi == 0 else sp.Float(self.psi))
            rho = sp.sqrt(X1 ** 2 + X2 ** 2)
            c, s = sp.cos(psi), sp.sin(psi)
            planar = [(c * X1 - s * X2) / rho, (s * X1 + c * X2) / rho]
        elif self.kind is PatternKind.UNIFORM:
            th = parse_expr(self.theta if self.theta is not None else 0)
            planar = [sp.cos(th), sp.sin(th)]
        else:
            th = parse_expr(self.theta)
            planar = [sp.cos(th), sp.sin(th)]
        if self.tilt is None:
            return planar + [sp.Integer(0)]
        t = parse_expr(self.tilt)
        return [sp.sin(t) * planar[0], sp.sin(t) * planar[1], sp.cos(t)]


@dataclass
class DirectorField:
    """Unit director field with stretch ratio r and exponent delta."""

    exprs: list
    r: float = DEFAULT_R
    delta: float = field(default_factory=lambda: delta_from_nu(DEFAULT_NU))
    domain: Box = DISCLINATION_DOMAIN
    label: str = "director"
    nu: float | None = None
    singular_at_origin: bool = False

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("r must be positive")
        if abs(self.r - 1.0) < 1e-14:
            raise ValueError("r = 1 gives an isotropic metric; need r != 1")
        if self.r < 1.0:
            warnings.warn("r < 1 (oblate case) is outside the prolate setting the formulas were "
                          "derived for", RuntimeWarning, stacklevel=2)
        self.exprs = [parse_expr(e) for e in self.exprs]
        (a, b), (c, d) = self.domain
        if self.singular_at_origin and a <= 0 <= b and c <= 0 <= d:
            raise ValueError("domain must exclude the origin")
        self._n = lambdify_array(self.exprs, (3,))
        probe = self(*np.meshgrid(np.linspace(a, b, 9), np.linspace(c, d, 9), indexing="ij"))
        if np.max(np.abs(np.linalg.norm(probe, axis=-1) - 1.0)) > 1e-12:
            raise ValueError("director is not a unit vector field")

    def __call__(self, x1, x2) -> np.ndarray:
        return self._n(x1, x2)

    @property
    def planar(self) -> bool:
        return self.exprs[2] == 0

    def gamma(self, x1, x2):
        n = self(x1, x2)
        return 1.0 / (n[..., 2] ** 2 + np.sum(n[..., :2] ** 2, -1) * self.r ** 2)

    @property
    def alpha(self) -> float:
        return (self.r - 1.0) / self.r


def director_from_params(pattern: str = "radial", psi: float = 0.0, theta=None, tilt=None,
                         n=None, r: float = DEFAULT_R, nu: float | None = None,
                         delta: float | None = None, domain=None) -> DirectorField:
    """Build a director field from config-style parameters.

    Either ``n`` (three expressions) or a pattern is used; ``delta`` overrides
    ``nu`` and the default is nu = 1.
    """
    if delta is None:
        nu = DEFAULT_NU if nu is None else float(nu)
        delta = delta_from_nu(nu)
    domain = tuple(tuple(map(float, x)) for x in domain) if domain is not None else DISCLINATION_DOMAIN
    if n is not None:
        exprs = [parse_expr(e) for e in n]
        norm = sp.sqrt(sum(e ** 2 for e in exprs))
        if sp.simplify(norm - 1) != 0:
            exprs = [e / norm for e in exprs]
        label = "custom"
        singular = False
    else:
        spec = PatternSpec(pattern, psi, theta, tilt)
        exprs = spec.director_exprs()
        label = spec.kind.value.lower()
        singular = spec.is_disclination
    return DirectorField(exprs, float(r), float(delta), domain, label, nu, singular)


def nematic_metric(DF: DirectorField) -> MetricField:
    n = sp.Matrix(DF.exprs)
    r = sp.nsimplify(DF.r) if float(DF.r).is_integer() else sp.Float(DF.r)
    scale = sp.Float(DF.r ** (2 * DF.delta))
    G = scale * (sp.eye(3) + (r ** 2 - 1) * n * n.T)
    return metric_from_expr(G, f"nematic[{DF.label}]", DF.domain,
                            {"r": DF.r, "delta": DF.delta})


def nematic_sqrt(DF: DirectorField, x1, x2) -> np.ndarray:
    """r^delta (Id + (r - 1) n (x) n)."""
    n = DF(x1, x2)
    return DF.r ** DF.delta * (np.eye(3) + (DF.r - 1.0) * np.einsum("...i,...j->...ij", n, n))


# ---------------------------------------------------------------------------
# curl^T curl
# ---------------------------------------------------------------------------

_D2C = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_D1C = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_OFF = np.arange(-2, 3)


def curl_t_curl(F: Callable, x1, x2, h: float = 2e-3) -> np.ndarray:
    """F11,22 - 2 F12,12 + F22,11 for a symmetric 2x2 field, by fourth-order
    central differences of step ``h``."""
    x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
    f11_22 = sum(c * F(x1, x2 + k * h)[..., 0, 0] for c, k in zip(_D2C, _OFF)) / h ** 2
    f22_11 = sum(c * F(x1 + k * h, x2)[..., 1, 1] for c, k in zip(_D2C, _OFF)) / h ** 2
    f12_12 = 0.0
    for ci, ki in zip(_D1C, _OFF):
        if ci == 0:
            continue
        for cj, kj in zip(_D1C, _OFF):
            if cj == 0:
                continue
            f12_12 = f12_12 + ci * cj * F(x1 + ki * h, x2 + kj * h)[..., 0, 1]
    f12_12 = f12_12 / h ** 2
    return f11_22 - 2.0 * f12_12 + f22_11


def director_tensor(DF: DirectorField) -> Callable:
    """x' -> n (x) n for the in-plane part n of the director."""
    def F(x1, x2):
        n = DF(x1, x2)[..., :2]
        return np.einsum("...i,...j->...ij", n, n)
    return F


def kappa_identity_residual(DF: DirectorField, x1, x2) -> np.ndarray:
    """r^(2 delta) kappa(G_2x2) + (1/2)(g/(g + 1)) curl^T curl(n (x) n), g = r^2 - 1."""
    M = nematic_metric(DF)
    kappa = gaussian_curvature_2d(M, x1, x2) * DF.r ** (2 * DF.delta)
    g = DF.r ** 2 - 1.0
    return kappa + 0.5 * g / (g + 1.0) * curl_t_curl(director_tensor(DF), x1, x2)


@dataclass
class NematicVerdict:
    immersible: bool
    residuals: dict
    threshold: float
    consistent: bool

    def as_dict(self) -> dict:
        return {"verdict": "IMMERSIBLE" if self.immersible else "BENDING",
                "residuals": self.residuals, "threshold": self.threshold,
                "consistent": self.consistent}


def nematic_classify(DF: DirectorField, grid: Grid2 | None = None,
                     threshold: float | None = None, strict: bool = True):
    """Evaluate the four equivalent flatness conditions for a planar director.

    Returns the verdict and the per-node fields (curl^T curl, kappa, triple).
    Raises ``ConsistencyError`` when the conditions disagree and ``strict``.
    """
    M = nematic_metric(DF)
    grid = grid or M.grid(33)
    X1n, X2n = grid.mesh()
    n = DF(X1n, X2n)
    if np.max(np.abs(n[..., 2])) > 1e-12:
        raise ValueError("nematic_classify needs a planar director (n3 = 0)")
    rep = riemann(M, X1n, X2n)
    ctc = curl_t_curl(director_tensor(DF), X1n, X2n)
    tau = threshold if threshold is not None else vanishing_threshold(M, X1n, X2n)
    sups = rep.sup()
    res = {"riemann": sups["riemann_sup"], "kappa": sups["kappa2d_sup"],
           "curl_t_curl": float(np.max(np.abs(ctc))), "triple": sups["triple_sup"]}
    below = {k: v < tau for k, v in res.items()}
    consistent = len(set(below.values())) == 1
    if not consistent:
        msg = f"flatness conditions disagree at threshold {tau:.3e}: {res}"
        if strict:
            raise ConsistencyError(msg)
        log.warning(msg)
    verdict = NematicVerdict(all(below.values()), res, tau, consistent)
    fields = {"curl_t_curl": ctc, "kappa": rep.kappa2d, "triple": rep.triple}
    return verdict, fields


# ---------------------------------------------------------------------------
# reduced density and Cosserat vector
# ---------------------------------------------------------------------------

def lc_q1(n_hat, r: float, delta: float, moduli: IsotropicModuli, F22) -> float:
    n_hat = np.asarray(n_hat, float)
    n, n3 = n_hat[:2], n_hat[2]
    F = sym(F22)
    gam = 1.0 / (n3 ** 2 + (n @ n) * r ** 2)
    k = (r ** 2 - 1.0) * gam
    Fn = F @ n
    Fnn = Fn @ n
    s = r ** (-4.0 * delta)
    return float(s * moduli.mu * (np.sum(F * F) - 2 * k * (Fn @ Fn) + k ** 2 * Fnn ** 2)
                 + s * moduli.reduced_lambda * (np.trace(F) - k * Fnn) ** 2)


def lc_q2(n_hat, r: float, delta: float, moduli: IsotropicModuli, F22) -> float:
    n_hat = np.asarray(n_hat, float)
    n, n3 = n_hat[:2], n_hat[2]
    s = r ** (-4.0 * delta)
    nn = n @ n
    if nn < BRANCH_TOL:
        return float(s * q2_iso0(moduli, F22))
    gam = 1.0 / (n3 ** 2 + nn * r ** 2)
    gt = (1.0 - np.sqrt(gam)) / nn
    S = np.eye(2) - gt * np.outer(n, n)
    return float(s * q2_iso0(moduli, S @ sym(F22) @ S))


@dataclass
class NematicQ2:
    lcq1: float
    lcq2: float
    closed: float
    general: float

    def spread(self) -> float:
        v = np.array([self.lcq1, self.lcq2, self.closed, self.general])
        return float((v.max() - v.min()) / max(1.0, np.abs(v).max()))


def nematic_q2_at(n_hat, r: float, delta: float, moduli: IsotropicModuli, F22,
                  rtol: float = 1e-9) -> NematicQ2:
    """All routes to the reduced density at one director value."""
    n_hat = np.asarray(n_hat, float)
    if n_hat[2] ** 2 > 1 + 1e-12:
        raise ValueError("n3^2 must be at most 1")
    nn = np.outer(n_hat, n_hat)
    G = r ** (2 * delta) * (np.eye(3) + (r ** 2 - 1) * nn)
    A = r ** delta * (np.eye(3) + (r - 1) * nn)
    q1 = lc_q1(n_hat, r, delta, moduli, F22)
    q2 = lc_q2(n_hat, r, delta, moduli, F22)
    closed = q2_isotropic_closed(G, moduli, F22).value
    general = float(EffectiveDensityContext(A, QuadraticForm3.isotropic(moduli.mu, moduli.lam)).q2(F22))
    out = NematicQ2(q1, q2, closed, general)
    if out.spread() > rtol:
        raise ConsistencyError(f"nematic reduced densities disagree: {out}")
    return out


def nematic_q2(DF: DirectorField, moduli: IsotropicModuli, x1: float, x2: float, F22) -> NematicQ2:
    return nematic_q2_at(DF(x1, x2), DF.r, DF.delta, moduli, F22)


def nematic_cosserat(DF: DirectorField, imm: Immersion, node: tuple[int, int] | None = None,
                     rtol: float = 1e-10) -> np.ndarray:
    """b = (r^2 - 1) n3 gamma d_n y + r sqrt(gamma) r^delta N, checked against
    the general Cosserat formula on the nematic metric."""
    X1n, X2n = imm.grid.mesh()
    nh = DF(X1n, X2n)
    gam = DF.gamma(X1n, X2n)
    t1, t2 = imm.tangents()
    N, bad = imm.normal()
    dny = nh[..., 0:1] * t1 + nh[..., 1:2] * t2
    r = DF.r
    b = (r ** 2 - 1) * (nh[..., 2] * gam)[..., None] * dny + (r * np.sqrt(gam) * r ** DF.delta)[..., None] * N
    ref = cosserat(nematic_metric(DF), imm)
    good = ~bad
    err = np.max(np.abs(b[good] - ref[good])) / max(1.0, np.max(np.abs(ref[good])))
    if err > rtol:
        raise ConsistencyError(f"nematic Cosserat vector disagrees with the general formula ({err:.3e})")
    if node is not None:
        if bad[node]:
            raise DegenerateFrameError(f"degenerate tangent plane at node {node}")
        return b[node]
    return b
