"""Discrete immersions, the Cosserat vector and the Kirchhoff bending functional.

Immersions live on the nodes of a ``Grid2`` as arrays of shape (nx, ny, 3).
Derivatives use second-order finite differences (central in the interior,
one-sided at the boundary, identical to ``np.gradient(..., edge_order=2)``),
and integrals use the trapezoid rule.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import factorized

from .density import EffectiveDensityContext, QuadraticForm3, SQ2
from .metric import Grid2, MetricField, check_spd, metric_sqrt
from .optim import LBFGSOptions, lbfgs

log = logging.getLogger(__name__)

DEGENERATE_TOL = 1e-12
DEFAULT_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)


class DegenerateFrameError(ValueError):
    pass


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def diff_matrix_1d(n: int, h: float) -> sps.csr_matrix:
    """Second-order first-derivative matrix on n uniform nodes."""
    if n < 3:
        raise ValueError("need at least 3 nodes")
    rows, cols, vals = [], [], []
    for i in range(1, n - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-0.5, 0.5]
    rows += [0, 0, 0, n - 1, n - 1, n - 1]
    cols += [0, 1, 2, n - 1, n - 2, n - 3]
    vals += [-1.5, 2.0, -0.5, 1.5, -2.0, 0.5]
    return sps.csr_matrix((np.array(vals) / h, (rows, cols)), shape=(n, n))


def grid_diff_matrices(grid: Grid2) -> tuple[sps.csr_matrix, sps.csr_matrix]:
    """(D1, D2) acting on node values flattened in C order (x1 slowest)."""
    nx, ny = grid.shape
    D1 = sps.kron(diff_matrix_1d(nx, grid.h1), sps.identity(ny), format="csr")
    D2 = sps.kron(sps.identity(nx), diff_matrix_1d(ny, grid.h2), format="csr")
    return D1, D2


def trapezoid_integral(grid: Grid2, values) -> float:
    return float(np.sum(grid.trapezoid_weights() * values))


# ---------------------------------------------------------------------------
# immersions
# ---------------------------------------------------------------------------

@dataclass
class Immersion:
    grid: Grid2
    y: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if self.y.shape != self.grid.shape + (3,):
            raise ValueError(f"immersion must have shape {self.grid.shape + (3,)}")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("immersion has non-finite entries")

    @classmethod
    def from_function(cls, grid: Grid2, f) -> "Immersion":
        X1, X2 = grid.mesh()
        return cls(grid, np.stack(np.broadcast_arrays(*f(X1, X2)), axis=-1).astype(float))

    def tangents(self):
        t1 = np.gradient(self.y, self.grid.h1, axis=0, edge_order=2)
        t2 = np.gradient(self.y, self.grid.h2, axis=1, edge_order=2)
        return t1, t2

    def first_form(self) -> np.ndarray:
        t1, t2 = self.tangents()
        T = np.stack([t1, t2], axis=-1)
        return np.einsum("...ka,...kb->...ab", T, T)

    def normal(self):
        """Unit normal and the mask of degenerate nodes (normal set to 0)."""
        t1, t2 = self.tangents()
        c = np.cross(t1, t2)
        nc = np.linalg.norm(c, axis=-1)
        bad = nc < DEGENERATE_TOL
        N = np.where(bad[..., None], 0.0, c / np.where(bad, 1.0, nc)[..., None])
        return N, bad

    def second_form(self) -> np.ndarray:
        """(grad y)^T grad N, shape (nx, ny, 2, 2)."""
        t1, t2 = self.tangents()
        N, _ = self.normal()
        n1 = np.gradient(N, self.grid.h1, axis=0, edge_order=2)
        n2 = np.gradient(N, self.grid.h2, axis=1, edge_order=2)
        T = np.stack([t1, t2], axis=-1)
        dN = np.stack([n1, n2], axis=-1)
        return np.einsum("...ka,...kb->...ab", T, dN)

    def isometry_defect(self, M: MetricField) -> np.ndarray:
        X1, X2 = self.grid.mesh()
        return self.first_form() - M(X1, X2)[..., :2, :2]


def cosserat_coefficients(G: np.ndarray):
    """beta = G_2x2^-1 (G13, G23) and s = sqrt(det G / det G_2x2)."""
    g = G[..., :2, :2]
    beta = np.linalg.solve(g, G[..., :2, 2][..., None])[..., 0]
    s = np.sqrt(np.linalg.det(G) / np.linalg.det(g))
    return beta, s


def cosserat(M: MetricField, imm: Immersion, node: tuple[int, int] | None = None) -> np.ndarray:
    """b = (grad y) G_2x2^-1 (G13, G23) + sqrt(det G / det G_2x2) N.

    Returns the whole field, or a single vector when ``node`` is given.
    """
    X1, X2 = imm.grid.mesh()
    G = M(X1, X2)
    check_spd(G, what=M.label)
    beta, s = cosserat_coefficients(G)
    t1, t2 = imm.tangents()
    N, bad = imm.normal()
    if node is not None:
        if bad[node]:
            raise DegenerateFrameError(f"degenerate tangent plane at node {node}")
        i, j = node
        return beta[i, j, 0] * t1[i, j] + beta[i, j, 1] * t2[i, j] + s[i, j] * N[i, j]
    return beta[..., 0:1] * t1 + beta[..., 1:2] * t2 + s[..., None] * N


def frame(M: MetricField, imm: Immersion) -> np.ndarray:
    """Q = [d1 y, d2 y, b] at every node, shape (nx, ny, 3, 3)."""
    t1, t2 = imm.tangents()
    return np.stack([t1, t2, cosserat(M, imm)], axis=-1)


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------

@dataclass
class BendingResult:
    energy: float
    isometry_residual: float
    iterations: int = 0
    converged: bool = True
    degenerate_nodes: int = 0
    penalty_energy: float = 0.0
    history: list = field(default_factory=list)
    message: str = ""

    def as_dict(self) -> dict:
        return {
            "energy": self.energy,
            "isometry_residual": self.isometry_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "degenerate_nodes": self.degenerate_nodes,
            "message": self.message,
        }


class BendingProblem:
    """Precomputed per-node data for evaluating and differentiating

        J(y) = (1/24) sum_w Q2((grad y)^T grad b) + (1/eps) sum_w |(grad y)^T grad y - g|^2.
    """

    def __init__(self, M: MetricField, QF: QuadraticForm3, grid: Grid2):
        self.M, self.QF, self.grid = M, QF, grid
        X1, X2 = grid.mesh()
        G = M(X1, X2).reshape(-1, 3, 3)
        check_spd(G, what=M.label)
        self.n = G.shape[0]
        self.g = G[:, :2, :2].copy()
        self.beta, self.s = cosserat_coefficients(G)
        self.K = EffectiveDensityContext(metric_sqrt(G), QF).kernel()
        self.w = grid.trapezoid_weights().ravel()
        self.D = grid_diff_matrices(grid)
        self.DT = tuple(Dk.T.tocsr() for Dk in self.D)

    def _forward(self, y):
        t = [Dk @ y for Dk in self.D]
        c = np.cross(t[0], t[1])
        nc = np.linalg.norm(c, axis=1)
        bad = nc < DEGENERATE_TOL
        ncs = np.where(bad, 1.0, nc)
        N = np.where(bad[:, None], 0.0, c / ncs[:, None])
        b = self.beta[:, 0:1] * t[0] + self.beta[:, 1:2] * t[1] + self.s[:, None] * N
        B = [Dk @ b for Dk in self.D]
        F = np.empty((self.n, 2, 2))
        for a in range(2):
            for bb in range(2):
                F[:, a, bb] = np.einsum("ij,ij->i", t[a], B[bb])
        f = np.stack([F[:, 0, 0], F[:, 1, 1], (F[:, 0, 1] + F[:, 1, 0]) / SQ2], axis=1)
        return t, c, ncs, N, bad, B, f

    def bending_density(self, y) -> tuple[np.ndarray, np.ndarray]:
        """Nodal Q2 values (0 at degenerate nodes) and the degenerate mask."""
        y = np.asarray(y, dtype=float).reshape(self.n, 3)
        *_, bad, _, f = self._forward(y)
        q = np.einsum("ni,nij,nj->n", f, self.K, f)
        return np.where(bad, 0.0, q), bad

    def energy(self, y) -> float:
        q, _ = self.bending_density(y)
        return float(np.sum(self.w * q) / 24.0)

    def isometry(self, y):
        y = np.asarray(y, dtype=float).reshape(self.n, 3)
        t = [Dk @ y for Dk in self.D]
        Mx = np.empty((self.n, 2, 2))
        for a in range(2):
            for b in range(2):
                Mx[:, a, b] = np.einsum("ij,ij->i", t[a], t[b]) - self.g[:, a, b]
        return t, Mx

    def isometry_residual(self, y) -> float:
        _, Mx = self.isometry(y)
        return float(np.sqrt(np.sum(self.w * np.sum(Mx ** 2, axis=(1, 2)))))

    def preconditioner(self, eps: float | None, y=None):
        """Inverse of a sparse SPD model Hessian.

        The model is a biharmonic term scaled by the bending kernel (acting on
        each component), the Gauss-Newton Hessian of the penalty at ``y`` and
        a small mass term for rigid modes.  Without ``y`` the penalty block is
        replaced by a componentwise Laplacian.
        """
        W = sps.diags(self.w)
        D1, D2 = self.D
        kbar = float(np.mean(np.trace(self.K, axis1=1, axis2=2))) / 3.0
        Hb = sps.csr_matrix((self.n, self.n))
        for Da in (D1, D2):
            for Db in (D1, D2):
                DD = Db @ Da
                Hb = Hb + (2.0 * kbar / 24.0) * (DD.T @ W @ DD)
        H = sps.block_diag([Hb] * 3, format="csr")
        if eps is not None and y is None:
            gbar = float(np.mean(np.trace(self.g, axis1=1, axis2=2))) / 2.0
            L = (8.0 * gbar / eps) * (D1.T @ W @ D1 + D2.T @ W @ D2)
            H = H + sps.block_diag([L] * 3, format="csr")
        elif eps is not None:
            t = [Dk @ np.asarray(y, dtype=float).reshape(self.n, 3) for Dk in self.D]
            rows, wts = [], []
            for a, b, m in ((0, 0, 1.0), (1, 1, 1.0), (0, 1, 2.0)):
                rows.append(sps.hstack([sps.diags(t[a][:, k]) @ self.D[b]
                                        + sps.diags(t[b][:, k]) @ self.D[a] for k in range(3)]))
                wts.append(m * self.w)
            Jm = sps.vstack(rows).tocsr()
            H = H + (2.0 / eps) * (Jm.T @ sps.diags(np.concatenate(wts)) @ Jm)
        H = H + 1e-8 * H.diagonal().max() * sps.identity(3 * self.n)
        solve = factorized(H.tocsc())
        n = self.n

        def apply(v):
            return solve(v.reshape(n, 3).T.ravel()).reshape(3, n).T.ravel()

        return apply

    def value_and_grad(self, yflat, eps: float | None = None):
        y = yflat.reshape(self.n, 3)
        t, c, ncs, N, bad, B, f = self._forward(y)
        good = ~bad
        wk = np.where(good, self.w, 0.0) / 24.0
        Kf = np.einsum("nij,nj->ni", self.K, f)
        Eb = float(np.sum(wk * np.einsum("ni,ni->n", f, Kf)))
        fbar = 2.0 * wk[:, None] * Kf
        Fbar = np.empty((self.n, 2, 2))
        Fbar[:, 0, 0] = fbar[:, 0]
        Fbar[:, 1, 1] = fbar[:, 1]
        Fbar[:, 0, 1] = Fbar[:, 1, 0] = fbar[:, 2] / SQ2
        tbar = [Fbar[:, a, 0:1] * B[0] + Fbar[:, a, 1:2] * B[1] for a in range(2)]
        Bbar = [Fbar[:, 0, b:b + 1] * t[0] + Fbar[:, 1, b:b + 1] * t[1] for b in range(2)]
        bbar = self.DT[0] @ Bbar[0] + self.DT[1] @ Bbar[1]
        tbar[0] += self.beta[:, 0:1] * bbar
        tbar[1] += self.beta[:, 1:2] * bbar
        Nbar = self.s[:, None] * bbar
        cbar = (Nbar - N * np.einsum("ij,ij->i", N, Nbar)[:, None]) / ncs[:, None]
        cbar[bad] = 0.0
        tbar[0] += np.cross(t[1], cbar)
        tbar[1] += np.cross(cbar, t[0])
        J = Eb
        if eps is not None:
            Mx = np.empty((self.n, 2, 2))
            for a in range(2):
                for b in range(2):
                    Mx[:, a, b] = np.einsum("ij,ij->i", t[a], t[b]) - self.g[:, a, b]
            J += float(np.sum(self.w * np.sum(Mx ** 2, axis=(1, 2)))) / eps
            Mbar = (2.0 / eps) * self.w[:, None, None] * Mx
            for a in range(2):
                tbar[a] += 2.0 * (Mbar[:, a, 0:1] * t[0] + Mbar[:, a, 1:2] * t[1])
        ybar = self.DT[0] @ tbar[0] + self.DT[1] @ tbar[1]
        return J, ybar.ravel()


def bending_energy(M: MetricField, QF: QuadraticForm3, imm: Immersion,
                   grid: Grid2 | None = None) -> BendingResult:
    """Trapezoid quadrature of (1/24) Q2((grad y)^T grad b); degenerate nodes are
    excluded and counted."""
    grid = grid or imm.grid
    prob = BendingProblem(M, QF, grid)
    q, bad = prob.bending_density(imm.y)
    if bad.any():
        log.warning("%d degenerate nodes excluded from the bending energy", int(bad.sum()))
    return BendingResult(float(np.sum(prob.w * q) / 24.0), prob.isometry_residual(imm.y),
                         degenerate_nodes=int(bad.sum()))


# ---------------------------------------------------------------------------
# seeds and minimisation
# ---------------------------------------------------------------------------

def flat_seed(grid: Grid2) -> Immersion:
    return Immersion.from_function(grid, lambda x1, x2: (x1, x2, 0.0 * x1))


def cylinder_seed(grid: Grid2) -> Immersion:
    return Immersion.from_function(grid, lambda x1, x2: (x1, np.sin(x2), np.cos(x2)))


def paraboloid_seed(grid: Grid2) -> Immersion:
    return Immersion.from_function(grid, lambda x1, x2: (x1, x2, 0.5 * (x1 ** 2 + x2 ** 2)))


SEEDS = {"flat": flat_seed, "cylinder": cylinder_seed, "paraboloid": paraboloid_seed}
CATALOG_SEEDS = {"ex63iii": "cylinder", "ex64": "paraboloid"}


def add_noise(imm: Immersion, amplitude: float, rng: np.random.Generator,
              kind: str = "smooth", modes: int = 3) -> Immersion:
    """Perturb an immersion by ``amplitude`` in sup norm.

    ``smooth`` sums a few low Fourier modes per component; ``white`` draws
    independent uniform values per node.
    """
    if amplitude == 0:
        return Immersion(imm.grid, imm.y.copy())
    if kind == "white":
        z = rng.uniform(-1.0, 1.0, size=imm.y.shape)
    elif kind == "smooth":
        (a, b), (c, d) = imm.grid.domain
        X1, X2 = imm.grid.mesh()
        u, v = (X1 - a) / (b - a), (X2 - c) / (d - c)
        z = np.zeros(imm.y.shape)
        for k in range(3):
            coef = rng.normal(size=(modes + 1, modes + 1))
            ph = rng.uniform(0, 2 * np.pi, size=(modes + 1, modes + 1, 2))
            for p in range(modes + 1):
                for q in range(modes + 1):
                    z[..., k] += coef[p, q] * np.cos(np.pi * p * u + ph[p, q, 0]) * np.cos(np.pi * q * v + ph[p, q, 1])
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    z *= amplitude / np.max(np.abs(z))
    return Immersion(imm.grid, imm.y + z)


@dataclass
class MinimizeOptions:
    schedule: tuple = DEFAULT_SCHEDULE
    gtol: float = 1e-8
    ftol: float = 1e-12
    max_iter: int = 500
    memory: int = 20
    precondition: bool = True
    refresh: int = 100


def minimize_bending(M: MetricField, QF: QuadraticForm3, grid: Grid2, y_init: Immersion,
                     penalty_schedule=None, opts: MinimizeOptions | None = None):
    """Penalised minimisation of the discrete bending energy.

    Each penalty stage is warm-started from the previous one and the total
    iteration count across stages is capped by ``opts.max_iter``.  Returns the
    final immersion and a ``BendingResult`` whose history concatenates the
    per-stage objective values.
    """
    opts = opts or MinimizeOptions()
    schedule = tuple(penalty_schedule or opts.schedule)
    if not schedule or any(e <= 0 for e in schedule):
        raise ValueError("penalty schedule must be a nonempty list of positive numbers")
    prob = BendingProblem(M, QF, grid)
    x = y_init.y.reshape(-1).copy()
    if not np.all(np.isfinite(x)):
        raise ValueError("initial immersion is not finite")
    budget = opts.max_iter
    nit, history, converged, msg = 0, [], False, ""
    for k, eps in enumerate(schedule):
        if budget <= 0:
            break
        last = k == len(schedule) - 1
        done = False
        while budget > 0 and not done:
            # the preconditioner is rebuilt at the current iterate every
            # ``opts.refresh`` iterations
            chunk = min(budget, opts.refresh) if opts.precondition else budget
            lo = LBFGSOptions(memory=opts.memory, gtol=opts.gtol, ftol=opts.ftol, max_iter=chunk)
            pc = prob.preconditioner(eps, x) if opts.precondition else None
            res = lbfgs(lambda z: prob.value_and_grad(z, eps), x, lo, precond=pc)
            x = res.x
            nit += res.nit
            budget -= res.nit
            history.append({"eps": eps, "J": res.history})
            msg = res.message
            done = res.converged or res.nit < chunk
            converged = res.converged and last
        log.info("eps=%g: J=%.6e |g|=%.2e", eps, res.f, res.grad_norm)
    imm = Immersion(grid, x.reshape(grid.shape + (3,)))
    q, bad = prob.bending_density(x)
    E = float(np.sum(prob.w * q) / 24.0)
    res_iso = prob.isometry_residual(x)
    pen = res_iso ** 2 / schedule[-1]
    return imm, BendingResult(E, res_iso, nit, converged, int(bad.sum()), pen, history, msg)
