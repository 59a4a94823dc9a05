"""Christoffel symbols, curvature tensors and the bending-regime classifier.

Index conventions (0-based in code, 1-based in names):

* ``Gamma[..., i, k, l]`` is the symbol with upper index ``i``;
* ``R[..., s, i, j, k] = d_j Gamma^s_ik - d_k Gamma^s_ij
  + Gamma^s_jm Gamma^m_ik - Gamma^s_km Gamma^m_ij``;
* ``R_low[..., s, i, j, k] = G_sm R^m_ijk``.

Derivatives in the thickness direction vanish identically because the metric
does not depend on x3.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ._parallel import map_chunks
from .metric import (Grid2, MetricField, check_spd, metric_derivatives,
                     metric_second_derivatives)

VANISH_RTOL = 1e-6


# ---------------------------------------------------------------------------
# pointwise kernels on (G, dG, d2G) arrays
# ---------------------------------------------------------------------------

def _pad_d1(dG2: np.ndarray) -> np.ndarray:
    """(..., 2, 3, 3) -> (..., 3, 3, 3) with a zero x3-derivative."""
    out = np.zeros(dG2.shape[:-3] + (3, 3, 3))
    out[..., :2, :, :] = dG2
    return out


def _pad_d2(d2G2: np.ndarray) -> np.ndarray:
    out = np.zeros(d2G2.shape[:-4] + (3, 3, 3, 3))
    out[..., :2, :2, :, :] = d2G2
    return out


def christoffel_from(G: np.ndarray, dG: np.ndarray) -> np.ndarray:
    """Gamma^i_kl = 1/2 G^im (d_l G_mk + d_k G_ml - d_m G_kl)."""
    P = np.linalg.inv(G)
    D = _pad_d1(dG)
    T = (np.einsum("...lmk->...mkl", D) + np.einsum("...kml->...mkl", D) - D)
    return 0.5 * np.einsum("...im,...mkl->...ikl", P, T)


def christoffel_derivative_from(G, dG, d2G) -> np.ndarray:
    """``dGamma[..., j, i, k, l] = d_j Gamma^i_kl`` from exact metric derivatives."""
    P = np.linalg.inv(G)
    D = _pad_d1(dG)
    DD = _pad_d2(d2G)
    T = (np.einsum("...lmk->...mkl", D) + np.einsum("...kml->...mkl", D) - D)
    dT = (np.einsum("...jlmk->...jmkl", DD) + np.einsum("...jkml->...jmkl", DD) - DD)
    dP = -np.einsum("...ia,...jab,...bm->...jim", P, D, P)
    return 0.5 * (np.einsum("...jim,...mkl->...jikl", dP, T)
                  + np.einsum("...im,...jmkl->...jikl", P, dT))


def riemann_from(Gam: np.ndarray, dGam: np.ndarray) -> np.ndarray:
    # T[s,i,j,k] = d_j G^s_ik + G^s_jm G^m_ik; R = T - T^(j<->k) is exactly antisymmetric
    T = np.einsum("...jsik->...sijk", dGam) + np.einsum("...sjm,...mik->...sijk", Gam, Gam)
    return T - np.swapaxes(T, -1, -2)


def ricci_from(Gam: np.ndarray, dGam: np.ndarray) -> np.ndarray:
    """R_ij = sum_l (d_l G^l_ij - d_j G^l_il) + sum_lm (G^l_ij G^m_lm - G^m_il G^l_jm)."""
    return (np.einsum("...llij->...ij", dGam) - np.einsum("...jlil->...ij", dGam)
            + np.einsum("...lij,...mlm->...ij", Gam, Gam)
            - np.einsum("...mil,...ljm->...ij", Gam, Gam))


def brioschi_curvature(g: np.ndarray, dg: np.ndarray, d2g: np.ndarray) -> np.ndarray:
    """Gaussian curvature of a 2D metric from the two-determinant formula.

    ``g``: (..., 2, 2); ``dg``: (..., 2, 2, 2) with [a] = d_a g;
    ``d2g``: (..., 2, 2, 2, 2) with [a, b] = d_a d_b g.
    """
    E, F, Gg = g[..., 0, 0], g[..., 0, 1], g[..., 1, 1]
    Eu, Fu, Gu = dg[..., 0, 0, 0], dg[..., 0, 0, 1], dg[..., 0, 1, 1]
    Ev, Fv, Gv = dg[..., 1, 0, 0], dg[..., 1, 0, 1], dg[..., 1, 1, 1]
    Evv = d2g[..., 1, 1, 0, 0]
    Fuv = d2g[..., 0, 1, 0, 1]
    Guu = d2g[..., 0, 0, 1, 1]
    q = -0.5 * Evv + Fuv - 0.5 * Guu
    A = np.stack([
        np.stack([q, 0.5 * Eu, Fu - 0.5 * Ev], -1),
        np.stack([Fv - 0.5 * Gu, E, F], -1),
        np.stack([0.5 * Gv, F, Gg], -1)], -2)
    zero = np.zeros_like(E)
    B = np.stack([
        np.stack([zero, 0.5 * Ev, 0.5 * Gu], -1),
        np.stack([0.5 * Ev, E, F], -1),
        np.stack([0.5 * Gu, F, Gg], -1)], -2)
    det = E * Gg - F ** 2
    return (np.linalg.det(A) - np.linalg.det(B)) / det ** 2


# ---------------------------------------------------------------------------
# field-level operations
# ---------------------------------------------------------------------------

def christoffel(M: MetricField, x1, x2) -> np.ndarray:
    """All Christoffel symbols at the given points, shape (..., 3, 3, 3)."""
    G = M(x1, x2)
    check_spd(G, what=M.label)
    return christoffel_from(G, metric_derivatives(M, x1, x2))


def christoffel_derivative(M: MetricField, x1, x2) -> np.ndarray:
    G = M(x1, x2)
    return christoffel_derivative_from(G, metric_derivatives(M, x1, x2),
                                       metric_second_derivatives(M, x1, x2))


@dataclass
class CurvatureReport:
    """Curvature quantities at a set of points (leading axes = point axes)."""

    G: np.ndarray
    Gamma: np.ndarray
    R: np.ndarray
    R_low: np.ndarray
    Ric: np.ndarray
    S: np.ndarray
    kappa2d: np.ndarray

    @property
    def R3_112(self):
        return self.R[..., 2, 0, 0, 1]

    @property
    def R3_221(self):
        return self.R[..., 2, 1, 1, 0]

    @property
    def R3_121(self):
        return self.R[..., 2, 0, 1, 0]

    @property
    def R_1212(self):
        return self.R_low[..., 0, 1, 0, 1]

    @property
    def triple(self) -> np.ndarray:
        """(R^3_112, R^3_221, R_1212) stacked on the last axis."""
        return np.stack([self.R3_112, self.R3_221, self.R_1212], axis=-1)

    def sup(self) -> dict:
        return {
            "riemann_sup": float(max(np.max(np.abs(self.R)), np.max(np.abs(self.R_low)))),
            "triple_sup": float(np.max(np.abs(self.triple))),
            "kappa2d_sup": float(np.max(np.abs(self.kappa2d))),
            "scalar_sup": float(np.max(np.abs(self.S))),
        }


def _curvature_kernel(G, dG, d2G):
    Gam = christoffel_from(G, dG)
    dGam = christoffel_derivative_from(G, dG, d2G)
    R = riemann_from(Gam, dGam)
    R_low = np.einsum("...sm,...mijk->...sijk", G, R)
    Ric = ricci_from(Gam, dGam)
    S = np.einsum("...ij,...ij->...", np.linalg.inv(G), Ric)
    kappa = brioschi_curvature(G[..., :2, :2], dG[..., :2, :2], d2G[..., :2, :2])
    return Gam, R, R_low, Ric, S, kappa


def riemann(M: MetricField, x1, x2, threads: int | None = None) -> CurvatureReport:
    """Christoffel symbols, Riemann (mixed and covariant), Ricci, scalar and
    2D Gaussian curvature at the points ``(x1, x2)``."""
    x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
    shape = x1.shape
    G = M(x1, x2)
    check_spd(G, what=M.label)
    dG = metric_derivatives(M, x1, x2)
    d2G = metric_second_derivatives(M, x1, x2)
    n = x1.size
    out = map_chunks(_curvature_kernel, G.reshape(n, 3, 3), dG.reshape(n, 2, 3, 3),
                     d2G.reshape(n, 2, 2, 3, 3), threads=threads)
    Gam, R, R_low, Ric, S, kappa = (a.reshape(shape + a.shape[1:]) for a in out)
    return CurvatureReport(G, Gam, R, R_low, Ric, S, kappa)


def gaussian_curvature_2d(M: MetricField, x1, x2) -> np.ndarray:
    """Gaussian curvature of the midplate metric G_2x2 (Brioschi formula)."""
    G = M(x1, x2)
    check_spd(G[..., :2, :2], what=f"{M.label} 2x2 minor")
    dG = metric_derivatives(M, x1, x2)
    d2G = metric_second_derivatives(M, x1, x2)
    return brioschi_curvature(G[..., :2, :2], dG[..., :2, :2], d2G[..., :2, :2])


def gaussian_curvature_2d_christoffel(M: MetricField, x1, x2) -> np.ndarray:
    """Independent route: kappa = r_1212 / det g from the 2D Riemann tensor."""
    from .metric import embed_star

    G = M(x1, x2)
    g = G[..., :2, :2]
    G2 = embed_star(g)
    G2[..., 2, 2] = 1.0
    dG = metric_derivatives(M, x1, x2)
    d2G = metric_second_derivatives(M, x1, x2)
    dG2 = np.zeros_like(dG)
    dG2[..., :2, :2] = dG[..., :2, :2]
    d2G2 = np.zeros_like(d2G)
    d2G2[..., :2, :2] = d2G[..., :2, :2]
    Gam = christoffel_from(G2, dG2)
    dGam = christoffel_derivative_from(G2, dG2, d2G2)
    R = riemann_from(Gam, dGam)
    r1212 = np.einsum("...m,...m->...", G2[..., 0, :], R[..., :, 1, 0, 1])
    return r1212 / np.linalg.det(g)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

class Regime(str, Enum):
    IMMERSIBLE = "IMMERSIBLE"
    ZERO_BENDING_NONIMMERSIBLE = "ZERO_BENDING_NONIMMERSIBLE"
    BENDING = "BENDING"


@dataclass
class ClassificationVerdict:
    regime: Regime
    riemann_sup: float
    triple_sup: float
    kappa2d_sup: float
    threshold: float
    report: CurvatureReport | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {
            "verdict": self.regime.value,
            "riemann_sup": self.riemann_sup,
            "triple_sup": self.triple_sup,
            "kappa2d_sup": self.kappa2d_sup,
            "thresholds": {"tau": self.threshold, "rtol": VANISH_RTOL},
        }


def vanishing_threshold(M: MetricField, x1, x2, rtol: float = VANISH_RTOL) -> float:
    """tau = rtol * sup over nodes of (1 + |dG|^2 + |d2G|)."""
    dG = metric_derivatives(M, x1, x2)
    d2G = metric_second_derivatives(M, x1, x2)
    n1 = np.sqrt(np.sum(dG ** 2, axis=(-3, -2, -1)))
    n2 = np.sqrt(np.sum(d2G ** 2, axis=(-4, -3, -2, -1)))
    return float(rtol * np.max(1.0 + n1 ** 2 + n2))


def classify(M: MetricField, grid: Grid2 | None = None, threshold: float | None = None,
             threads: int | None = None) -> ClassificationVerdict:
    """IMMERSIBLE if the full Riemann tensor vanishes on the grid, else
    ZERO_BENDING_NONIMMERSIBLE if the three curvatures (R^3_112, R^3_221,
    R_1212) vanish, else BENDING."""
    grid = grid if grid is not None else M.grid(33)
    X1, X2 = grid.mesh()
    rep = riemann(M, X1, X2, threads=threads)
    tau = threshold if threshold is not None else vanishing_threshold(M, X1, X2)
    sups = rep.sup()
    if sups["riemann_sup"] < tau:
        regime = Regime.IMMERSIBLE
    elif sups["triple_sup"] < tau:
        regime = Regime.ZERO_BENDING_NONIMMERSIBLE
    else:
        regime = Regime.BENDING
    return ClassificationVerdict(regime, sups["riemann_sup"], sups["triple_sup"],
                                 sups["kappa2d_sup"], tau, rep)


# ---------------------------------------------------------------------------
# second fundamental form compatibility
# ---------------------------------------------------------------------------

def target_second_form(M: MetricField, x1, x2) -> np.ndarray:
    """Pi_ij = -Gamma^3_ij / sqrt(G^33): the only second fundamental form an
    immersion with zero bending energy can have."""
    G = M(x1, x2)
    Gam = christoffel(M, x1, x2)
    G33 = np.linalg.inv(G)[..., 2, 2]
    return -Gam[..., 2, :2, :2] / np.sqrt(G33)[..., None, None]


def christoffel_2d(M: MetricField, x1, x2) -> np.ndarray:
    """Symbols of G_2x2 via gamma^s_kl = Gamma^s_kl - (G^3s / G^33) Gamma^3_kl."""
    G = M(x1, x2)
    Gam = christoffel(M, x1, x2)
    P = np.linalg.inv(G)
    ratio = P[..., 2, :2] / P[..., 2, 2][..., None]
    return Gam[..., :2, :2, :2] - ratio[..., :, None, None] * Gam[..., 2, None, :2, :2]


def christoffel_2d_direct(M: MetricField, x1, x2) -> np.ndarray:
    """Symbols of G_2x2 computed from the 2x2 block alone."""
    G = M(x1, x2)
    g = G[..., :2, :2]
    dg = metric_derivatives(M, x1, x2)[..., :2, :2]
    p = np.linalg.inv(g)
    T = (np.einsum("...lmk->...mkl", dg) + np.einsum("...kml->...mkl", dg) - dg)
    return 0.5 * np.einsum("...im,...mkl->...ikl", p, T)


@dataclass
class CompatibilityResidual:
    cm1: float
    cm2: float
    gauss: float
    fields: dict = field(default_factory=dict, repr=False)

    def max(self) -> float:
        return max(self.cm1, self.cm2, self.gauss)


def codazzi_gauss_residual(M: MetricField, Pi: np.ndarray, grid: Grid2) -> CompatibilityResidual:
    """Sup-norm residuals of the Codazzi-Mainardi and Gauss equations for a
    candidate second fundamental form ``Pi`` given at the grid nodes."""
    Pi = np.asarray(Pi, dtype=float)
    if Pi.shape != grid.shape + (2, 2):
        raise ValueError(f"Pi must have shape {grid.shape + (2, 2)}")
    X1, X2 = grid.mesh()
    gam = christoffel_2d(M, X1, X2)
    g = M(X1, X2)[..., :2, :2]
    kappa = gaussian_curvature_2d(M, X1, X2)
    d1Pi = np.gradient(Pi, grid.h1, axis=0, edge_order=2)
    d2Pi = np.gradient(Pi, grid.h2, axis=1, edge_order=2)
    # sum_m Pi_am gamma^m_bc
    Pg = np.einsum("...am,...mbc->...abc", Pi, gam)
    cm1 = d2Pi[..., 0, 0] - d1Pi[..., 0, 1] - (Pg[..., 0, 0, 1] - Pg[..., 1, 0, 0])
    cm2 = d2Pi[..., 0, 1] - d1Pi[..., 1, 1] - (Pg[..., 0, 1, 1] - Pg[..., 1, 0, 1])
    gauss = np.linalg.det(Pi) - kappa * np.linalg.det(g)
    return CompatibilityResidual(
        float(np.max(np.abs(cm1))), float(np.max(np.abs(cm2))), float(np.max(np.abs(gauss))),
        {"cm1": cm1, "cm2": cm2, "gauss": gauss})
