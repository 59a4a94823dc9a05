import numpy as np
import pytest
import sympy as sp

from prestrain.diffgeo import (Regime, christoffel, christoffel_2d, christoffel_2d_direct,
                               classify, codazzi_gauss_residual, gaussian_curvature_2d,
                               gaussian_curvature_2d_christoffel, riemann, target_second_form)
from prestrain.metric import X1, Grid2, catalog_metric, metric_derivatives, metric_from_expr
from prestrain.nematic import DISCLINATION_DOMAIN, director_from_params, nematic_metric

from helpers import CATALOG, symbolic_curvature

PTS = (np.array([0.2, 0.5, 0.8, 0.35]), np.array([0.3, 0.5, 0.9, 0.15]))


def pts_for(M):
    (a, b), (c, d) = M.domain
    return a + (b - a) * PTS[0], c + (d - c) * PTS[1]


# --- Christoffel symbols ---------------------------------------------------

def test_ex61_christoffel():
    M = CATALOG["ex61"]
    x1, x2 = PTS
    Gam = christoffel(M, x1, x2)
    lam, d1 = 1 + x1 ** 2, 2 * x1
    assert np.allclose(Gam[:, 0, 2, 2], -0.5 * d1)
    assert np.allclose(Gam[:, 1, 2, 2], 0.0)
    assert np.allclose(Gam[:, 2, 0, 2], d1 / (2 * lam))
    assert np.allclose(Gam[:, 2, 1, 2], 0.0)
    assert np.allclose(Gam[:, 2, :2, :2], 0.0)


def test_ex63ii_christoffel():
    M = CATALOG["ex63ii"]
    x1, x2 = PTS
    Gam = christoffel(M, x1, x2)
    assert np.allclose(Gam[:, 2, 0, 1], x1)        # (1/2) d1 lam2
    assert np.allclose(Gam[:, 2, 1, 1], 0.0)       # d2 lam2
    assert np.allclose(Gam[:, 2, 0, 0], 0.0)


def test_constant_metric_christoffel_zero():
    M = metric_from_expr(sp.Matrix([[2, 0.3, 0], [0.3, 1, 0.1], [0, 0.1, 3]]), "const")
    assert np.allclose(christoffel(M, *PTS), 0.0)


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_christoffel_symmetric(name):
    Gam = christoffel(CATALOG[name], *pts_for(CATALOG[name]))
    assert np.allclose(Gam, np.swapaxes(Gam, -1, -2), atol=1e-14)


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_metric_compatibility(name):
    M = CATALOG[name]
    x1, x2 = pts_for(M)
    G, P = M(x1, x2), np.linalg.inv(M(x1, x2))
    Gam = christoffel(M, x1, x2)
    dG = metric_derivatives(M, x1, x2)
    lhs = np.einsum("nmk,nmij->nijk", G, Gam[:, :, :2]) + np.einsum("nmj,nmik->nijk", G, Gam[:, :, :2])
    assert np.allclose(lhs, dG, atol=1e-10)
    dP = -np.einsum("nja,niab,nbk->nijk", P, dG, P)
    rhs = -(np.einsum("nmk,njmi->nijk", P, Gam[..., :2]) + np.einsum("nmj,nkmi->nijk", P, Gam[..., :2]))
    assert np.allclose(rhs, dP, atol=1e-10)


@pytest.mark.parametrize("name", ["ex61", "ex64", "nematic_tilted"])
def test_fd_path_matches_analytic(name):
    M = CATALOG[name]
    x1, x2 = pts_for(M)
    rep_a = riemann(M, x1, x2)
    rep_f = riemann(M.with_fd(h_fd=1e-3), x1, x2)
    assert np.allclose(rep_f.Gamma, rep_a.Gamma, atol=1e-6)
    assert np.allclose(rep_f.R, rep_a.R, atol=1e-4)


# --- Riemann ---------------------------------------------------------------

@pytest.mark.parametrize("name", ["ex61", "ex62", "ex63ii", "ex63iii", "ex64"])
def test_riemann_against_symbolic_oracle(name):
    M = CATALOG[name]
    Gam_s, R_s, S_s = symbolic_curvature(M.expr)
    x1, x2 = pts_for(M)
    rep = riemann(M, x1, x2)
    for k in range(len(x1)):
        assert np.allclose(rep.Gamma[k], np.array(Gam_s(x1[k], x2[k]), float), atol=1e-12)
        assert np.allclose(rep.R[k], np.array(R_s(x1[k], x2[k]), float), atol=1e-10)
        assert np.isclose(rep.S[k], float(S_s(x1[k], x2[k])), atol=1e-10)


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_riemann_antisymmetry_exact(name):
    rep = riemann(CATALOG[name], *pts_for(CATALOG[name]))
    assert np.array_equal(rep.R, -np.swapaxes(rep.R, -1, -2))
    assert np.allclose(rep.R_low, np.einsum("...sm,...mijk->...sijk", rep.G, rep.R))
    assert np.allclose(rep.Ric, np.einsum("...sisk->...ik", rep.R), atol=1e-10)
    assert np.allclose(rep.R3_121, -rep.R3_112)


def test_euclidean_all_zero():
    rep = riemann(CATALOG["euclidean"], *PTS)
    for a in (rep.R, rep.Ric, rep.S, rep.kappa2d):
        assert np.all(a == 0)


def test_ex63iii_triple_and_scalar():
    M = CATALOG["ex63iii"]
    X1, X2 = M.grid(33).mesh()
    rep = riemann(M, X1, X2)
    assert np.max(np.abs(rep.triple)) <= 1e-12
    assert np.max(np.abs(rep.R)) > 0.5
    # the independent symbolic oracle gives S = -2 everywhere
    assert np.allclose(rep.S, -2.0, atol=1e-12)


def test_ex64_scalar_and_kappa():
    M = CATALOG["ex64"]
    x1, x2 = pts_for(M)
    rep = riemann(M, x1, x2)
    assert np.allclose(rep.S, 12 / (2 * x1 ** 2 + 2 * x2 ** 2 + 3), atol=1e-10)
    assert np.allclose(rep.kappa2d, (1 + x1 ** 2 + x2 ** 2) ** -2.0, atol=1e-12)
    p = riemann(M, np.array([1.5]), np.array([0.5]))
    assert abs(p.S[0] - 1.5) < 1e-10 and abs(p.kappa2d[0] - 3.5 ** -2) < 1e-12


def test_ex63ii_r3112():
    M = CATALOG["ex63ii"]
    rep = riemann(M, *M.grid(17).mesh())
    assert np.allclose(rep.R3_112, 1.0, atol=1e-12)
    M2 = catalog_metric("ex63ii", lam2="x1**3")
    x1, x2 = PTS
    assert np.allclose(riemann(M2, x1, x2).R3_112, 3 * x1, atol=1e-12)   # (1/2) d11 lam2


def test_threads_deterministic():
    M = CATALOG["ex64"]
    X1, X2 = M.grid(21).mesh()
    a, b = riemann(M, X1, X2, threads=1), riemann(M, X1, X2, threads=4)
    assert np.array_equal(a.R, b.R) and np.array_equal(a.S, b.S)


# --- Gaussian curvature ----------------------------------------------------

@pytest.mark.parametrize("name", sorted(CATALOG))
def test_kappa_two_routes(name):
    M = CATALOG[name]
    x1, x2 = pts_for(M)
    assert np.allclose(gaussian_curvature_2d(M, x1, x2),
                       gaussian_curvature_2d_christoffel(M, x1, x2), atol=1e-10)


def test_kappa_identity_metric_zero():
    M = metric_from_expr(sp.eye(3), "id")
    assert np.all(gaussian_curvature_2d(M, *PTS) == 0)


def test_kappa_sphere_patch():
    # round sphere of radius 2 in spherical coordinates has kappa = 1/4
    M = metric_from_expr(sp.diag(4, 4 * sp.sin(X1) ** 2, 1), "sphere", ((0.5, 1.5), (0.0, 1.0)))
    assert np.allclose(gaussian_curvature_2d(M, 0.5 + PTS[0], PTS[1]), 0.25, atol=1e-12)


def test_kappa_radial_nematic_zero():
    M = nematic_metric(director_from_params("radial"))
    X1, X2 = Grid2.on(DISCLINATION_DOMAIN, 9).mesh()
    assert np.max(np.abs(gaussian_curvature_2d(M, X1, X2))) < 1e-10


def test_christoffel_2d_routes_agree():
    for name in ("ex63ii", "ex63iii", "ex64", "nematic_tilted"):
        M = CATALOG[name]
        x1, x2 = pts_for(M)
        assert np.allclose(christoffel_2d(M, x1, x2), christoffel_2d_direct(M, x1, x2), atol=1e-12)


# --- classification --------------------------------------------------------

@pytest.mark.parametrize("name, regime", [
    ("euclidean", Regime.IMMERSIBLE),
    ("ex61", Regime.ZERO_BENDING_NONIMMERSIBLE),
    ("ex62", Regime.ZERO_BENDING_NONIMMERSIBLE),
    ("ex63ii", Regime.BENDING),
    ("ex63iii", Regime.ZERO_BENDING_NONIMMERSIBLE),
    ("ex64", Regime.ZERO_BENDING_NONIMMERSIBLE),
    ("nematic_radial", Regime.IMMERSIBLE),
])
def test_classify_catalog(name, regime):
    v = classify(CATALOG[name], CATALOG[name].grid(17))
    assert v.regime is regime
    if v.regime is Regime.IMMERSIBLE:
        assert v.triple_sup < v.threshold
    d = v.as_dict()
    assert d["verdict"] == regime.value and d["thresholds"]["tau"] == v.threshold


def test_classify_constant_lambda_immersible():
    assert classify(catalog_metric("ex62", lam="3")).regime is Regime.IMMERSIBLE


def test_classify_threshold_override():
    v = classify(CATALOG["ex63ii"], CATALOG["ex63ii"].grid(9), threshold=10.0)
    assert v.regime is Regime.IMMERSIBLE and v.threshold == 10.0


# --- target second fundamental form and compatibility ----------------------

def test_target_second_form_examples():
    x1, x2 = PTS
    assert np.allclose(target_second_form(CATALOG["ex63iii"], x1, x2), np.diag([0.0, 1.0]))
    assert np.allclose(target_second_form(CATALOG["ex61"], x1, x2), 0.0)
    Pi = target_second_form(CATALOG["ex63ii"], x1, x2)
    assert np.allclose(Pi[:, 0, 1], -x1) and np.allclose(Pi[:, 1, 0], -x1)
    assert np.allclose(Pi[:, 0, 0], 0) and np.allclose(Pi[:, 1, 1], 0)


@pytest.mark.parametrize("name", ["ex63iii", "ex64", "ex61", "euclidean"])
def test_codazzi_gauss_zero_bending(name):
    M = CATALOG[name]
    g = M.grid(33)
    Pi = target_second_form(M, *g.mesh())
    assert codazzi_gauss_residual(M, Pi, g).max() < 1e-3


def test_codazzi_fd_convergence():
    M = CATALOG["ex64"]
    errs = []
    for n in (17, 33):
        g = M.grid(n)
        errs.append(codazzi_gauss_residual(M, target_second_form(M, *g.mesh()), g).max())
    assert errs[1] < errs[0] / 3


def test_codazzi_gauss_obstruction_ex63ii():
    M = CATALOG["ex63ii"]
    g = M.grid(33)
    res = codazzi_gauss_residual(M, target_second_form(M, *g.mesh()), g)
    assert res.max() > 0.5


def test_codazzi_shape_check():
    M = CATALOG["ex61"]
    with pytest.raises(ValueError):
        codazzi_gauss_residual(M, np.zeros((3, 3, 2, 2)), M.grid(9))
