"""Elastic quadratic forms and the effective two-dimensional bending density.

``Q3`` is stored as a 6x6 SPD matrix acting on the orthonormal coordinates of
symmetric 3x3 matrices,

    v(F) = (F11, F22, F33, sqrt2 F12, sqrt2 F13, sqrt2 F23),

so ``Q3(F) = v(sym F) . C v(sym F)`` and ``L3(F) = mat(C v(sym F))``.  The
isotropic case is ``C = mu I + lam t t^T`` with ``t = (1, 1, 1, 0, 0, 0)``.
All functions broadcast over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metric import check_spd, embed_star, metric_inv_sqrt

SQ2 = np.sqrt(2.0)
_IDX = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
_W = np.array([1.0, 1.0, 1.0, SQ2, SQ2, SQ2])
CONSISTENCY_RTOL = 1e-10


class ConsistencyError(RuntimeError):
    """Two formulas that must agree disagree beyond tolerance."""


def sym(F):
    F = np.asarray(F, dtype=float)
    return 0.5 * (F + np.swapaxes(F, -1, -2))


def to_voigt(F) -> np.ndarray:
    """Orthonormal 6-vector of ``sym F``."""
    S = sym(F)
    return np.stack([S[..., i, j] for i, j in _IDX], axis=-1) * _W


def from_voigt(v) -> np.ndarray:
    v = np.asarray(v, dtype=float) / _W
    out = np.zeros(v.shape[:-1] + (3, 3))
    for k, (i, j) in enumerate(_IDX):
        out[..., i, j] = v[..., k]
        out[..., j, i] = v[..., k]
    return out


@dataclass(frozen=True)
class IsotropicModuli:
    """Lame pair; ``Q3(F) = mu |sym F|^2 + lam (tr F)^2``."""

    mu: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")

    @property
    def reduced_lambda(self) -> float:
        """lam mu / (lam + mu), the in-plane relaxed second modulus."""
        return self.lam * self.mu / (self.lam + self.mu)


@dataclass(frozen=True)
class QuadraticForm3:
    C: np.ndarray
    moduli: IsotropicModuli | None = None

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        if C.shape != (6, 6):
            raise ValueError("Q3 matrix must be 6x6")
        if not np.allclose(C, C.T, rtol=0, atol=1e-12 * max(1.0, np.abs(C).max())):
            raise ValueError("Q3 matrix must be symmetric")
        ev = np.linalg.eigvalsh(C)
        if ev[0] <= 1e-12 * ev[-1]:
            raise ValueError("Q3 matrix must be positive definite")
        object.__setattr__(self, "C", C)

    @classmethod
    def isotropic(cls, mu: float = 1.0, lam: float = 1.0) -> "QuadraticForm3":
        mod = IsotropicModuli(mu, lam)
        t = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
        return cls(mu * np.eye(6) + lam * np.outer(t, t), mod)

    @classmethod
    def from_matrix(cls, C) -> "QuadraticForm3":
        return cls(np.asarray(C, dtype=float))

    @property
    def is_isotropic(self) -> bool:
        return self.moduli is not None

    def L3(self, F) -> np.ndarray:
        return from_voigt(to_voigt(F) @ self.C)

    def q3(self, F) -> np.ndarray:
        v = to_voigt(F)
        return np.einsum("...i,ij,...j->...", v, self.C, v)


def q3(QF: QuadraticForm3, F):
    return QF.q3(F)


# ---------------------------------------------------------------------------
# reduction over the out-of-plane column
# ---------------------------------------------------------------------------

E3 = np.array([0.0, 0.0, 1.0])


@dataclass
class EffectiveDensityContext:
    """Pointwise data for the reduction at ``A = sqrt(G)`` (leading axes allowed)."""

    A: np.ndarray
    QF: QuadraticForm3
    Ainv: np.ndarray = field(init=False)
    d: np.ndarray = field(init=False)
    M_A: np.ndarray = field(init=False)
    cond: np.ndarray = field(init=False)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.Ainv = np.linalg.inv(self.A)
        self.d = self.Ainv[..., :, 2]
        cols = []
        for i in range(3):
            ei = np.zeros(3)
            ei[i] = 1.0
            Fi = np.einsum("i,...j->...ij", ei, self.d)
            cols.append(np.einsum("...ij,...j->...i", self.QF.L3(Fi), self.d))
        self.M_A = np.stack(cols, axis=-1)
        self.cond = np.linalg.cond(self.M_A)
        if np.any(~np.isfinite(self.cond)) or np.any(self.cond > 1e14):
            raise np.linalg.LinAlgError("M_A is singular: degenerate Q3 or A")

    @classmethod
    def from_metric(cls, G, QF: QuadraticForm3) -> "EffectiveDensityContext":
        from .metric import metric_sqrt

        return cls(metric_sqrt(G), QF)

    def D(self, F22) -> np.ndarray:
        return self.Ainv @ embed_star(sym(F22)) @ self.Ainv

    def _rhs(self, F22):
        D = self.D(F22)
        return D, np.einsum("...ij,...j->...i", self.QF.L3(D), self.d)

    def minimizer_c0(self, F22) -> np.ndarray:
        """c0 minimizing Q3(A^-1 (F* + sym(c x e3)) A^-1) over c in R^3."""
        _, Ld = self._rhs(F22)
        w = -np.linalg.solve(self.M_A, Ld[..., None])[..., 0]
        return np.einsum("...ij,...j->...i", self.A, w)

    def q2(self, F22) -> np.ndarray:
        D, Ld = self._rhs(F22)
        z = np.linalg.solve(self.M_A, Ld[..., None])[..., 0]
        return self.QF.q3(D) - np.einsum("...i,...i->...", z, Ld)

    def kernel(self) -> np.ndarray:
        """3x3 matrix K with Q2(F) = f.K f for f = (F11, F22, sqrt2 F12)."""
        basis = np.array([[[1.0, 0.0], [0.0, 0.0]],
                          [[0.0, 0.0], [0.0, 1.0]],
                          [[0.0, 1 / SQ2], [1 / SQ2, 0.0]]])
        lead = self.A.shape[:-2]
        diag = [self.q2(np.broadcast_to(b, lead + (2, 2))) for b in basis]
        K = np.zeros(lead + (3, 3))
        for a in range(3):
            K[..., a, a] = diag[a]
            for b in range(a + 1, 3):
                s = self.q2(np.broadcast_to(basis[a] + basis[b], lead + (2, 2)))
                K[..., a, b] = K[..., b, a] = 0.5 * (s - diag[a] - diag[b])
        return K


def minimizer_c0(ctx: EffectiveDensityContext, F22) -> np.ndarray:
    return ctx.minimizer_c0(F22)


def q2_general(ctx: EffectiveDensityContext, F22) -> np.ndarray:
    return ctx.q2(F22)


def q2_oracle(A, QF: QuadraticForm3, F22) -> tuple[float, np.ndarray]:
    """Direct minimisation over c of Q3(A^-1 (F* + sym(c x e3)) A^-1) by a
    dense least-squares solve in the 6-vector representation.

    Returns the minimum value and the minimising c."""
    A = np.asarray(A, dtype=float)
    Ainv = np.linalg.inv(A)
    v0 = to_voigt(Ainv @ embed_star(sym(F22)) @ Ainv)
    B = np.stack([to_voigt(Ainv @ np.outer(np.eye(3)[i], E3) @ Ainv) for i in range(3)], axis=1)
    Lc = np.linalg.cholesky(QF.C).T
    c, *_ = np.linalg.lstsq(Lc @ B, -Lc @ v0, rcond=None)
    r = v0 + B @ c
    return float(r @ QF.C @ r), c


# ---------------------------------------------------------------------------
# isotropic closed forms
# ---------------------------------------------------------------------------

def q2_iso0(moduli: IsotropicModuli, F22) -> np.ndarray:
    """mu |sym F|^2 + lam mu/(lam + mu) (tr F)^2."""
    S = sym(F22)
    return (moduli.mu * np.sum(S * S, axis=(-2, -1))
            + moduli.reduced_lambda * np.trace(S, axis1=-2, axis2=-1) ** 2)


def q2_iso_d(G, moduli: IsotropicModuli, F22) -> np.ndarray:
    """Closed form through D = A^-1 F* A^-1 and d = A^-1 e3."""
    Ainv = metric_inv_sqrt(G)
    D = Ainv @ embed_star(sym(F22)) @ Ainv
    d = Ainv[..., :, 2]
    Dd = np.einsum("...ij,...j->...i", D, d)
    dd = np.sum(d * d, axis=-1)
    Ddd = np.sum(Dd * d, axis=-1)
    mu, lr = moduli.mu, moduli.reduced_lambda
    return (mu * (np.sum(D * D, axis=(-2, -1)) - 2 * np.sum(Dd * Dd, axis=-1) / dd + Ddd ** 2 / dd ** 2)
            + lr * (np.trace(D, axis1=-2, axis2=-1) - Ddd / dd) ** 2)


def q2_iso_tan(G, moduli: IsotropicModuli, F22) -> np.ndarray:
    """Closed form through the inverse square root of the 2x2 minor."""
    g = np.asarray(G, dtype=float)[..., :2, :2]
    w, V = np.linalg.eigh(g)
    S = np.einsum("...ik,...k,...jk->...ij", V, 1.0 / np.sqrt(w), V)
    return q2_iso0(moduli, S @ sym(F22) @ S)


def q2_iso_c(G, moduli: IsotropicModuli, F22) -> np.ndarray:
    """Closed form through C = G^-1 F*."""
    P = np.linalg.inv(G)
    C = P @ embed_star(sym(F22))
    C2 = C @ C
    p = P[..., :, 2]
    pp = p[..., 2]
    c2 = np.einsum("...ij,...j->...i", C2, p)[..., 2]
    c1 = np.einsum("...ij,...j->...i", C, p)[..., 2]
    mu, lr = moduli.mu, moduli.reduced_lambda
    return (mu * (np.trace(C2, axis1=-2, axis2=-1) - 2 * c2 / pp + c1 ** 2 / pp ** 2)
            + lr * (np.trace(C, axis1=-2, axis2=-1) - c1 / pp) ** 2)


@dataclass
class IsotropicQ2:
    value: float
    via_d: float
    via_tan: float
    via_c: float

    def spread(self) -> float:
        vals = np.array([self.via_d, self.via_tan, self.via_c])
        return float((vals.max() - vals.min()) / max(1.0, np.abs(vals).max()))


def q2_isotropic_closed(G, moduli: IsotropicModuli, F22, rtol: float = CONSISTENCY_RTOL) -> IsotropicQ2:
    """Evaluate the three isotropic closed forms at one point and check they agree."""
    G = np.asarray(G, dtype=float)
    check_spd(G)
    vd = float(q2_iso_d(G, moduli, F22))
    vt = float(q2_iso_tan(G, moduli, F22))
    vc = float(q2_iso_c(G, moduli, F22))
    res = IsotropicQ2(vd, vd, vt, vc)
    if res.spread() > rtol:
        raise ConsistencyError(f"isotropic closed forms disagree: {vd!r}, {vt!r}, {vc!r}")
    return res
