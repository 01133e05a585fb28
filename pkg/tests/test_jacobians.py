import numpy as np
import pytest

from mfeit.forward import CemSystem, adjacent_patterns, forward_map_phi, solve_forward
from mfeit.fractions import SpectraSet, vec
from mfeit.jacobians import (build_state, conductivity_jacobian, gradient_step,
                             linearize_phi, phi_jacobian)
from mfeit.mesh import build_disk_mesh

from conftest import random_feasible

# FD oracle step: 1e-4 relative. The nominal 1e-6 relative step sits below the
# central-difference cancellation floor of the double-precision solver and
# returns noise for weakly sensitive triangles.
FD_REL_STEP = 1e-4


def jac_at(mesh, electrodes, sigma, pats):
    system = CemSystem(mesh, electrodes)
    fact = system.factorize(sigma)
    sol = solve_forward(mesh, electrodes, sigma, pats, factorization=fact)
    return conductivity_jacobian(mesh, electrodes, sigma, pats, sol, fact)


def test_columns_match_finite_differences(small_setup, patterns8, rng):
    mesh, electrodes = small_setup
    sigma = 0.13 * (1 + 0.3 * rng.random(mesh.num_triangles))
    jac = jac_at(mesh, electrodes, sigma, patterns8)
    cols = rng.choice(mesh.num_triangles, size=25, replace=False)
    for n in cols:
        h = FD_REL_STEP * sigma[n]
        sp = sigma.copy(); sp[n] += h
        sm = sigma.copy(); sm[n] -= h
        vp = solve_forward(mesh, electrodes, sp, patterns8).measurements
        vm = solve_forward(mesh, electrodes, sm, patterns8).measurements
        fd = (vp - vm) / (2 * h)
        err = np.linalg.norm(jac[:, n] - fd) / np.linalg.norm(fd)
        assert err < 1e-5, f"column {n}: rel err {err:.2e}"


def test_rotational_symmetry_of_columns():
    # exact 8-fold symmetric mesh: the column of a rotated triangle is the
    # measurement-rotated column of the original
    mesh, electrodes = build_disk_mesh(1.0, 25, 8, 0.5)
    pats = adjacent_patterns(8, 1.0)
    sigma = 0.13 * np.ones(mesh.num_triangles)
    jac = jac_at(mesh, electrodes, sigma, pats)
    # outer band has 24 triangles (8 + 16); rotation by one electrode shifts
    # boundary triangle index by 3 within the band ordering
    cents = mesh.nodes[mesh.triangles].mean(axis=1)
    ang = np.arctan2(cents[:, 1], cents[:, 0])
    rad = np.hypot(cents[:, 0], cents[:, 1])
    rot = 2 * np.pi / 8
    # map each triangle to its rotated partner
    partner = np.full(mesh.num_triangles, -1)
    for n in range(mesh.num_triangles):
        target = (np.abs(rad - rad[n]) < 1e-9) & \
                 (np.abs((ang - ang[n] - rot + np.pi) % (2 * np.pi) - np.pi) < 1e-9)
        idx = np.flatnonzero(target)
        assert len(idx) == 1
        partner[n] = idx[0]
    P = 8
    v = jac.reshape(P, P - 1, mesh.num_triangles)
    # rotating injection and measurement electrode indices by one maps the
    # sensitivity of triangle n onto its rotated partner
    rolled = np.roll(np.roll(
        jac.reshape(P, P - 1, -1)[:, :, :], 0, axis=0), 0, axis=1)
    for h in range(P - 1):
        for m in range(P - 2):
            lhs = v[h, m, :]
            rhs = v[h + 1, m + 1, partner]
            np.testing.assert_allclose(lhs, rhs, atol=1e-9 * np.abs(jac).max())


def test_sigma_scaling_power_law(small_setup, patterns8):
    # u(c sigma, z/c) = u(sigma, z)/c identically, so the Jacobian scales as
    # 1/c^2 when impedances co-scale; with z fixed the law holds to the size
    # of the contact drops. Two-point evaluation oracle for both readings.
    from mfeit.mesh import ElectrodeSetup
    mesh, electrodes = small_setup
    sigma = 0.13 * np.ones(mesh.num_triangles)
    c = 2.0
    j1 = jac_at(mesh, electrodes, sigma, patterns8)
    scaled = ElectrodeSetup(electrode_edges=electrodes.electrode_edges,
                            contact_impedances=electrodes.contact_impedances / c,
                            coverage_fraction=electrodes.coverage_fraction)
    j2 = jac_at(mesh, scaled, c * sigma, patterns8)
    np.testing.assert_allclose(j2, j1 / c**2, rtol=1e-9)
    j3 = jac_at(mesh, electrodes, c * sigma, patterns8)
    rel = np.linalg.norm(j3 - j1 / c**2) / np.linalg.norm(j1 / c**2)
    assert rel < 0.01


def test_phi_jacobian_zero_for_flat_spectra(small_setup, rng):
    mesh, electrodes = small_setup
    flat = SpectraSet(E=np.array([[0.13, 0.13], [0.05, 0.05], [0.07, 0.07]]),
                      eps0=np.array([0.13, 0.05, 0.07]),
                      frequencies=np.array([1e3, 5e3, 50e3]))
    pats = adjacent_patterns(8, 1.0)
    F = random_feasible(rng, mesh.num_triangles, 3)
    jac = phi_jacobian(F, flat, mesh, electrodes, pats)
    assert np.abs(jac.full_matrix()).max() < 1e-10


def test_phi_jacobian_one_sided_block(small_setup, rng):
    mesh, electrodes = small_setup
    spectra = SpectraSet(E=np.array([[0.13, 0.14], [0.05, 0.06], [0.07, 0.08]]),
                         eps0=np.array([1e-9, 0.05, 0.07]),
                         frequencies=np.array([1e3, 5e3, 50e3]))
    # background eps0 ~ 0: block (i, 0) reduces to Jv_i * E[0, i-1]
    pats = adjacent_patterns(8, 1.0)
    F = random_feasible(rng, mesh.num_triangles, 3)
    jac = phi_jacobian(F, spectra, mesh, electrodes, pats)
    blk = jac.block(1, 0)
    expected = jac.conductivity_jacobians[1] * spectra.E[0, 0]
    np.testing.assert_allclose(blk, expected, atol=1e-9 * np.abs(expected).max())


def test_phi_jacobian_linear_in_spectra(small_setup, spectra, rng):
    mesh, electrodes = small_setup
    pats = adjacent_patterns(8, 1.0)
    F = random_feasible(rng, mesh.num_triangles, 3)
    jac = phi_jacobian(F, spectra, mesh, electrodes, pats)
    scaled = SpectraSet(E=2 * spectra.E, eps0=2 * spectra.eps0,
                        frequencies=spectra.frequencies)
    # same conductivity Jacobians, doubled spectra: blocks double
    from mfeit.jacobians import PhiJacobian
    jac2 = PhiJacobian(conductivity_jacobians=jac.conductivity_jacobians,
                       spectra=scaled)
    np.testing.assert_allclose(jac2.full_matrix(), 2 * jac.full_matrix(),
                               rtol=1e-12)


def test_phi_jacobian_directional_fd(small_setup, spectra, rng):
    mesh, electrodes = small_setup
    pats = adjacent_patterns(8, 1.0)
    F = random_feasible(rng, mesh.num_triangles, 3, concentration=5.0)
    phi, jac = linearize_phi(F, spectra, mesh, electrodes, pats)
    jfull = jac.full_matrix()
    n, t = F.shape
    for _ in range(5):
        d = rng.standard_normal((n, t))
        d -= d.mean(axis=1, keepdims=True)  # stay on the simplex tangent
        h = FD_REL_STEP
        fp, fm = F + h * d, F - h * d
        vp = forward_map_phi(fp, spectra, mesh, electrodes, pats, gamma_tol=1.0)
        vm = forward_map_phi(fm, spectra, mesh, electrodes, pats, gamma_tol=1.0)
        fd = (vp - vm) / (2 * h)
        an = jfull @ vec(d)
        assert np.linalg.norm(an - fd) / np.linalg.norm(fd) < 1e-5


def test_matvec_rmatvec_match_dense(small_setup, spectra, rng):
    mesh, electrodes = small_setup
    pats = adjacent_patterns(8, 1.0)
    F = random_feasible(rng, mesh.num_triangles, 3)
    jac = phi_jacobian(F, spectra, mesh, electrodes, pats)
    full = jac.full_matrix()
    x = rng.standard_normal(full.shape[1])
    r = rng.standard_normal(full.shape[0])
    np.testing.assert_allclose(jac.matvec(x), full @ x, rtol=1e-11)
    np.testing.assert_allclose(jac.rmatvec(r), full.T @ r, rtol=1e-11)
    np.testing.assert_allclose(jac.normal_matrix(), full.T @ full,
                               rtol=1e-9, atol=1e-12)


def test_gradient_step_fixed_point(small_setup, spectra, rng):
    mesh, electrodes = small_setup
    pats = adjacent_patterns(8, 1.0)
    F = random_feasible(rng, mesh.num_triangles, 3)
    y = forward_map_phi(F, spectra, mesh, electrodes, pats)
    state = build_state(F, y, spectra, mesh, electrodes, pats, F_ref=F,
                        alpha=1e-9, beta=0.3)
    z = gradient_step(state)
    np.testing.assert_allclose(z, vec(F), atol=1e-8)


def test_gradient_step_pure_tikhonov(rng):
    # J = 0 (flat spectra): H = alpha I, step pulls beta of the way to F_ref
    from mfeit.mesh import build_disk_mesh
    mesh, electrodes = build_disk_mesh(1.0, 40, 4, 0.5)
    flat = SpectraSet(E=np.array([[0.13, 0.13], [0.05, 0.05], [0.07, 0.07]]),
                      eps0=np.array([0.13, 0.05, 0.07]),
                      frequencies=np.array([1e3, 5e3, 50e3]))
    pats = adjacent_patterns(4, 1.0)
    F = random_feasible(rng, mesh.num_triangles, 3)
    F_ref = random_feasible(rng, mesh.num_triangles, 3)
    y = np.zeros((4 - 1) * 4 * 2)
    state = build_state(F, y, flat, mesh, electrodes, pats, F_ref=F_ref,
                        alpha=1e-3, beta=0.4)
    z = gradient_step(state)
    np.testing.assert_allclose(z, vec(F) - 0.4 * (vec(F) - vec(F_ref)),
                               atol=1e-10)


def test_gradient_step_beta_zero_identity(small_setup, spectra, rng):
    mesh, electrodes = small_setup
    pats = adjacent_patterns(8, 1.0)
    F = random_feasible(rng, mesh.num_triangles, 3)
    y = rng.standard_normal((8 - 1) * 8 * 2)
    state = build_state(F, y, spectra, mesh, electrodes, pats,
                        F_ref=F, alpha=1e-9, beta=0.0)
    np.testing.assert_array_equal(gradient_step(state), vec(F))


def test_metric_solve_against_dense_oracle(rng):
    # H^{-1} g via the held factorization vs an independent dense solve
    import scipy.linalg as sla
    a = rng.standard_normal((10, 6))
    h = a.T @ a + 1e-3 * np.eye(6)
    g = rng.standard_normal(6)
    chol = np.linalg.cholesky(h)
    x1 = sla.cho_solve((chol, True), g)
    x2 = np.linalg.solve(h, g)
    np.testing.assert_allclose(x1, x2, atol=1e-10)


def test_metric_positive_definite_floor(small_setup, spectra, rng):
    mesh, electrodes = small_setup
    pats = adjacent_patterns(8, 1.0)
    F = random_feasible(rng, mesh.num_triangles, 3)
    y = np.zeros((8 - 1) * 8 * 2)
    alpha = 1e-6
    state = build_state(F, y, spectra, mesh, electrodes, pats, F_ref=F,
                        alpha=alpha, beta=0.3)
    for _ in range(5):
        x = rng.standard_normal(state.metric.shape[0])
        assert x @ (state.metric @ x) >= alpha * (x @ x) * (1 - 1e-9)
