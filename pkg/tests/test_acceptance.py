"""Acceptance gate: one PASS/FAIL line per criterion, printed to the terminal."""

import time

import numpy as np
import pytest

from prestrain.bending import (BendingProblem, MinimizeOptions, add_noise, bending_energy,
                               cylinder_seed, flat_seed, minimize_bending)
from prestrain.density import (IsotropicModuli, QuadraticForm3, q2_general,
                               EffectiveDensityContext, q2_iso_c, q2_iso_d, q2_iso_tan,
                               q2_oracle)
from prestrain.diffgeo import (christoffel, classify, riemann, gaussian_curvature_2d)
from prestrain.metric import (Grid2, catalog_metric, metric_derivatives, metric_sqrt)
from prestrain.nematic import (DISCLINATION_DOMAIN, director_from_params, kappa_identity_residual,
                               lc_q1, lc_q2, nematic_classify)
from prestrain.scaling import (DensityKind, DensityW, recovery_ciag, recovery_kirchhoff,
                               recovery_koko, scaling_sweep)

from helpers import CATALOG, random_rotation, random_spd, random_sym2

QF = QuadraticForm3.isotropic(1.0, 1.0)


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, f"criterion {n}: {detail}"
    return emit


def test_criterion_1_curvature_golden_values(verdict):
    msgs, ok = [], True

    t0 = time.perf_counter()
    M = catalog_metric("ex63iii")
    g = M.grid(65)
    X1, X2 = g.mesh()
    rep = riemann(M, X1, X2)
    trip = float(np.max(np.abs(rep.triple)))
    j = int(np.argmin(np.abs(g.x2 - 0.5)))
    S_half = rep.S[:, j]
    dt = time.perf_counter() - t0
    a_ok = trip <= 1e-6 and np.all(np.abs(S_half + 1.5) <= 1e-5) and dt < 10
    msgs.append(f"(a) ex63iii triple sup {trip:.2e}, S(x2=0.5) = {S_half.mean():.6f} "
                f"(target -1.5), {dt:.2f}s")
    ok &= bool(a_ok)

    t0 = time.perf_counter()
    M = catalog_metric("ex64")
    g = M.grid(65)
    X1, X2 = g.mesh()
    riemann(M, X1, X2)
    rep = riemann(M, np.array([1.5]), np.array([0.5]))
    kap = float(gaussian_curvature_2d(M, np.array([1.5]), np.array([0.5]))[0])
    S = float(rep.S[0])
    dt = time.perf_counter() - t0
    b_ok = abs(S - 1.5) <= 1e-4 and abs(kap - 3.5 ** -2) <= 1e-6 and dt < 10
    msgs.append(f"(b) ex64 S = {S:.6f}, kappa = {kap:.7f}, {dt:.2f}s")
    ok &= bool(b_ok)

    t0 = time.perf_counter()
    M = catalog_metric("ex63ii")
    g = M.grid(65)
    X1, X2 = g.mesh()
    rep = riemann(M, X1, X2)
    err = float(np.max(np.abs(rep.R3_112 - 1.0)))
    dt = time.perf_counter() - t0
    c_ok = err <= 1e-5 and dt < 10
    msgs.append(f"(c) ex63ii max |R3_112 - 1| = {err:.2e}, {dt:.2f}s")
    ok &= bool(c_ok)
    verdict(1, ok, "; ".join(msgs))


def test_criterion_2_q2_oracle_equivalence(verdict):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        G = random_spd(rng)
        F = random_sym2(rng)
        mod = IsotropicModuli(mu=rng.uniform(0.2, 5.0), lam=rng.uniform(0.0, 5.0))
        QFi = QuadraticForm3.isotropic(mod.mu, mod.lam)
        A = metric_sqrt(G)
        vals = [float(q2_general(EffectiveDensityContext(A, QFi), F)),
                float(q2_iso_d(G, mod, F)), float(q2_iso_tan(G, mod, F)),
                float(q2_iso_c(G, mod, F)), q2_oracle(A, QFi, F)[0]]
        scale = max(abs(v) for v in vals)
        worst = max(worst, (max(vals) - min(vals)) / scale)
    dt = time.perf_counter() - t0
    verdict(2, worst <= 1e-10 and dt < 5, f"max relative spread {worst:.2e} over 200 cases, {dt:.2f}s")


def test_criterion_3_bending_golden_value(verdict):
    M = catalog_metric("ex63ii")
    t0 = time.perf_counter()
    E = {}
    for n in (33, 65, 129):
        g = M.grid(n)
        E[n] = bending_energy(M, QF, flat_seed(g), g).energy
    dt = time.perf_counter() - t0
    target = 1.0 / 36.0
    rel = abs(E[129] - target) / target
    ratio = (E[33] - E[65]) / (E[65] - E[129])
    ok = rel <= 0.02 and 3.5 <= ratio <= 4.5 and dt < 30
    verdict(3, ok, f"I_G(129) = {E[129]:.7f} vs 1/36 (rel err {rel:.2e}), "
                   f"Richardson ratio {ratio:.3f}, {dt:.2f}s")


def test_criterion_4_zero_energy_immersions(verdict):
    M1 = catalog_metric("ex61")
    g = M1.grid(129)
    e1 = bending_energy(M1, QF, flat_seed(g), g).energy
    M3 = catalog_metric("ex63iii")
    g = M3.grid(129)
    e3 = bending_energy(M3, QF, cylinder_seed(g), g).energy
    verdict(4, e1 <= 1e-8 and e3 <= 1e-6,
            f"ex61 flat I_G = {e1:.2e} (<= 1e-8), ex63iii cylinder I_G = {e3:.2e} (<= 1e-6)")


def test_criterion_5_scaling_exponents(verdict):
    DW = DensityW(DensityKind.GREEN_QUADRATIC, IsotropicModuli(1.0, 1.0))
    msgs, ok = [], True

    t0 = time.perf_counter()
    M = catalog_metric("ex61")
    rep = scaling_sweep(M, DW, recovery_koko(M.params["lam"]))
    dt = time.perf_counter() - t0
    ok &= 3.9 <= rep.slope <= 4.1 and dt < 60
    msgs.append(f"(a) koko slope {rep.slope:.4f}, {dt:.2f}s")

    t0 = time.perf_counter()
    M = catalog_metric("ex62")
    rep = scaling_sweep(M, DW, recovery_ciag(M.params["lam"]))
    dt = time.perf_counter() - t0
    ok &= 3.9 <= rep.slope <= 4.1 and dt < 60
    msgs.append(f"(b) ciag slope {rep.slope:.4f}, {dt:.2f}s")

    t0 = time.perf_counter()
    M = catalog_metric("ex63ii")
    g = M.grid(65)
    u = recovery_kirchhoff(M, flat_seed(g), QF)
    rep = scaling_sweep(M, DW, u)
    dt = time.perf_counter() - t0
    i6 = int(np.argmin(np.abs(np.array(rep.h) - 2.0 ** -6)))
    ratio = rep.E[i6] / rep.h[i6] ** 2
    rel = abs(ratio - 1 / 36) / (1 / 36)
    ok &= rel <= 0.10 and 1.9 <= rep.slope <= 2.1 and dt < 60
    msgs.append(f"(c) Kirchhoff E/h^2 at 2^-6 = {ratio:.6f} (rel {rel:.2e}), "
                f"slope {rep.slope:.4f}, {dt:.2f}s")
    verdict(5, bool(ok), "; ".join(msgs))


def test_criterion_6_nematic_equivalence(verdict):
    t0 = time.perf_counter()
    msgs, ok = [], True
    g = Grid2.on(DISCLINATION_DOMAIN, 17)
    worst = 0.0
    for pattern, psi in (("radial", 0.0), ("azimuthal", 0.0), ("spiral", 0.7)):
        DF = director_from_params(pattern, psi=psi, r=1.2)
        v, _ = nematic_classify(DF, g)
        worst = max(worst, max(v.residuals.values()))
        ok &= v.immersible and v.consistent
    ok &= worst <= 1e-6
    msgs.append(f"(a) disclination residual sup {worst:.2e}")

    rng = np.random.default_rng(6)
    worst_k = 0.0
    for _ in range(20):
        a = rng.uniform(-1.5, 1.5, size=5)
        theta = (f"{a[0]}*x1 + {a[1]}*x2 + {a[2]}*x1*x2 + {a[3]}*sin(2*x1) "
                 f"+ {a[4]}*cos(x1 + x2)")
        DF = director_from_params("custom", theta=theta, r=rng.uniform(1.1, 2.0),
                                  delta=rng.uniform(-0.6, 0.0), domain=((0.0, 1.0), (0.0, 1.0)))
        P = rng.uniform(0.1, 0.9, size=(2, 25))
        worst_k = max(worst_k, float(np.max(np.abs(kappa_identity_residual(DF, P[0], P[1])))))
    ok &= worst_k <= 1e-6
    msgs.append(f"(b) kappa identity residual {worst_k:.2e} on 20 fields")

    mod = IsotropicModuli(1.0, 1.0)
    worst_q = 0.0
    r, delta = 1.3, -1.0 / 3.0
    for _ in range(100):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        F = random_sym2(rng)
        G = r ** (2 * delta) * (np.eye(3) + (r ** 2 - 1) * np.outer(n, n))
        ref = float(q2_general(EffectiveDensityContext(metric_sqrt(G), QF), F))
        vals = [lc_q1(n, r, delta, mod, F), lc_q2(n, r, delta, mod, F), ref]
        worst_q = max(worst_q, (max(vals) - min(vals)) / max(abs(ref), 1e-300))
    ok &= worst_q <= 1e-9
    dt = time.perf_counter() - t0
    ok &= dt < 20
    msgs.append(f"(c) lcQ1/lcQ2/general relative spread {worst_q:.2e}; {dt:.2f}s")
    verdict(6, bool(ok), "; ".join(msgs))


def test_criterion_7_optimizer_sanity(verdict):
    t0 = time.perf_counter()
    M = catalog_metric("ex61")
    g = M.grid(33)
    y0 = add_noise(flat_seed(g), 1e-2, np.random.default_rng(7))
    _, res = minimize_bending(M, QF, g, y0, opts=MinimizeOptions(max_iter=500))

    g5 = M.grid(5)
    prob = BendingProblem(M, QF, g5)
    rng = np.random.default_rng(8)
    y = add_noise(flat_seed(g5), 0.1, rng, kind="white").y.ravel()
    _, grad = prob.value_and_grad(y, 1e-2)
    fd = np.empty_like(y)
    step = 1e-6
    for k in range(y.size):
        e = np.zeros_like(y)
        e[k] = step
        fd[k] = (prob.value_and_grad(y + e, 1e-2)[0] - prob.value_and_grad(y - e, 1e-2)[0]) / (2 * step)
    gerr = float(np.linalg.norm(grad - fd) / np.linalg.norm(fd))
    dt = time.perf_counter() - t0
    ok = (res.energy <= 1e-6 and res.isometry_residual <= 1e-6 and res.iterations <= 500
          and gerr <= 1e-6 and dt < 60)
    verdict(7, ok, f"energy {res.energy:.2e}, isometry residual {res.isometry_residual:.2e}, "
                   f"{res.iterations} iterations; gradient rel err {gerr:.2e}; {dt:.2f}s")


def test_criterion_8_identity_suites(verdict):
    rng = np.random.default_rng(88)
    worst = {"chris": 0.0, "chris2": 0.0, "antisym": 0.0}
    for name, M in CATALOG.items():
        g = M.grid(9)
        X1, X2 = g.mesh()
        X1, X2 = X1.ravel(), X2.ravel()
        G = M(X1, X2)
        P = np.linalg.inv(G)
        Gam = christoffel(M, X1, X2)
        dG = metric_derivatives(M, X1, X2)
        scale = 1.0 + float(np.max(np.abs(dG)))
        comp = (np.einsum("nmk,nmij->nijk", G, Gam[:, :, :2, :])
                + np.einsum("nmj,nmik->nijk", G, Gam[:, :, :2, :]))
        worst["chris"] = max(worst["chris"], float(np.max(np.abs(comp - dG))) / scale)
        dP = -np.einsum("nja,niab,nbk->nijk", P, dG, P)
        comp2 = -(np.einsum("nmk,njmi->nijk", P, Gam[:, :, :, :2])
                  + np.einsum("nmj,nkmi->nijk", P, Gam[:, :, :, :2]))
        worst["chris2"] = max(worst["chris2"], float(np.max(np.abs(comp2 - dP))) / scale)
        rep = riemann(M, X1, X2)
        worst["antisym"] = max(worst["antisym"],
                               float(np.max(np.abs(rep.R + np.swapaxes(rep.R, -1, -2)))))
    ok = worst["chris"] <= 1e-8 and worst["chris2"] <= 1e-8 and worst["antisym"] == 0.0

    fi, qe = 0.0, True
    for kind in DensityKind:
        DW = DensityW(kind, IsotropicModuli(1.3, 0.7))
        for _ in range(50):
            F = np.eye(3) + 0.3 * rng.normal(size=(3, 3))
            R = random_rotation(rng)
            fi = max(fi, abs(DW(R @ F) - DW(F)) / max(DW(F), 1e-300))
        Q = DW.quadratic_form()
        for _ in range(5):
            E = rng.normal(size=(3, 3))
            errs = [abs((DW(np.eye(3) + t * E) - 0.5 * t * t * Q.q3(E)) / t ** 2)
                    for t in (1e-2, 1e-3, 1e-4)]
            qe &= errs[0] > errs[1] > errs[2] or max(errs) < 1e-10
    ok = ok and fi <= 1e-12 and qe
    verdict(8, bool(ok), f"(chris) {worst['chris']:.1e}, (chris2) {worst['chris2']:.1e}, "
                         f"antisymmetry {worst['antisym']:.1e} on {len(CATALOG)} metrics; "
                         f"frame indifference {fi:.1e}; quadratic expansion decreasing: {qe}")
