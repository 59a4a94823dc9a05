"""Shared fixtures and random generators for the test suite."""

import numpy as np

from prestrain.metric import catalog_metric

CATALOG = {
    "euclidean": catalog_metric("euclidean"),
    "ex61": catalog_metric("ex61"),
    "ex62": catalog_metric("ex62"),
    "ex63ii": catalog_metric("ex63ii"),
    "ex63iii": catalog_metric("ex63iii"),
    "ex64": catalog_metric("ex64"),
    "nematic_radial": catalog_metric("nematic", pattern="radial"),
    "nematic_tilted": catalog_metric("nematic", n=["cos(x1)*cos(x2)", "sin(x1)*cos(x2)", "sin(x2)"],
                                     domain=((0.0, 1.0), (0.0, 1.0))),
}


def random_spd(rng, n=3, spread=3.0):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    ev = np.exp(rng.uniform(-np.log(spread), np.log(spread), size=n))
    return (Q * ev) @ Q.T


def random_sym2(rng):
    F = rng.normal(size=(2, 2))
    return 0.5 * (F + F.T)


def random_rotation(rng):
    Q, R = np.linalg.qr(rng.normal(size=(3, 3)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def symbolic_curvature(Gexpr):
    """Independent sympy oracle: callables for Gamma^i_kl, R^s_ijk and S."""
    import sympy as sp

    from prestrain.metric import X1 as x1, X2 as x2

    x3 = sp.Symbol("x3", real=True)
    X = (x1, x2, x3)
    G = sp.Matrix(Gexpr)
    P = G.inv()
    Gam = [[[sum(P[i, m] * (sp.diff(G[m, k], X[l]) + sp.diff(G[m, l], X[k]) - sp.diff(G[k, l], X[m]))
                 for m in range(3)) / 2 for l in range(3)] for k in range(3)] for i in range(3)]
    R = [[[[sp.diff(Gam[s][i][k], X[j]) - sp.diff(Gam[s][i][j], X[k])
            + sum(Gam[s][j][m] * Gam[m][i][k] - Gam[s][k][m] * Gam[m][i][j] for m in range(3))
            for k in range(3)] for j in range(3)] for i in range(3)] for s in range(3)]
    Ric = [[sum(R[s][i][s][k] for s in range(3)) for k in range(3)] for i in range(3)]
    S = sum(P[i, k] * Ric[i][k] for i in range(3) for k in range(3))
    lam = lambda e: sp.lambdify((x1, x2), e, "numpy")
    return lam(Gam), lam(R), lam(S)
