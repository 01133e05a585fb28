import numpy as np
import pytest

from mfeit.forward import (CemSystem, ForwardError, adjacent_patterns,
                           forward_map_phi, solve_forward)
from mfeit.fractions import SpectraSet, overlap_spectra
from mfeit.mesh import ElectrodeSetup, Mesh, build_disk_mesh

from conftest import random_feasible


def two_triangle_square():
    """Unit square split along its diagonal; electrode on the bottom edge."""
    mesh = Mesh(nodes=np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
                triangles=np.array([[0, 1, 2], [0, 2, 3]]),
                boundary_edges=np.array([[0, 1], [1, 2], [2, 3], [3, 0]]))
    setup = ElectrodeSetup(electrode_edges=[np.array([0]), np.array([2])],
                           contact_impedances=np.array([1.0, 1.0]),
                           coverage_fraction=0.5)
    return mesh, setup


def test_adjacent_pattern_definition():
    pats = adjacent_patterns(4, 1.0)
    np.testing.assert_array_equal(pats.patterns[0], [1, -1, 0, 0])
    np.testing.assert_array_equal(pats.patterns[3], [-1, 0, 0, 1])
    assert pats.num_patterns == 4


def test_patterns_zero_sum():
    pats = adjacent_patterns(32, 2.5)
    np.testing.assert_allclose(pats.patterns.sum(axis=1), 0, atol=1e-12)


def test_pattern_rank():
    pats = adjacent_patterns(16, 1.0)
    assert np.linalg.matrix_rank(pats.patterns) == 15


def test_hand_assembled_stiffness():
    mesh, setup = two_triangle_square()
    system = CemSystem(mesh, setup)
    k = system.stiffness(np.ones(2)).toarray()
    # P1 stiffness of each right isoceles triangle, assembled by hand
    expected = np.array([
        [1.0, -0.5, 0.0, -0.5],
        [-0.5, 1.0, -0.5, 0.0],
        [0.0, -0.5, 1.0, -0.5],
        [-0.5, 0.0, -0.5, 1.0],
    ])
    np.testing.assert_allclose(k, expected, atol=1e-14)


def test_stiffness_scales_with_sigma():
    mesh, setup = two_triangle_square()
    system = CemSystem(mesh, setup)
    k1 = system.stiffness(np.ones(2)).toarray()
    k2 = system.stiffness(2 * np.ones(2)).toarray()
    np.testing.assert_allclose(k2, 2 * k1, rtol=1e-14)


def test_system_symmetric(small_setup, patterns8):
    mesh, electrodes = small_setup
    system = CemSystem(mesh, electrodes)
    s = system.assemble(0.2 * np.ones(mesh.num_triangles))
    asym = abs(s - s.T).max()
    assert asym < 1e-12 * abs(s).max()


def test_voltages_zero_mean(small_setup, patterns8):
    mesh, electrodes = small_setup
    sol = solve_forward(mesh, electrodes, 0.13 * np.ones(mesh.num_triangles),
                        patterns8)
    assert np.abs(sol.voltages.sum(axis=1)).max() / patterns8.num_electrodes < 1e-10
    assert sol.measurements.size == (8 - 1) * 8


def test_reciprocity(paper_setup):
    mesh, electrodes = paper_setup
    P = electrodes.num_electrodes
    pats = adjacent_patterns(P, 1.0)
    rng = np.random.default_rng(3)
    sigma = 0.13 * (1 + 0.5 * rng.random(mesh.num_triangles))
    sol = solve_forward(mesh, electrodes, sigma, pats)
    v = sol.measurements.reshape(P, P - 1)
    # measurement pattern m under injection h == measurement h under injection m
    asym = np.abs(v[:P - 1, :] - v[:P - 1, :].T).max()
    assert asym / np.abs(v).max() < 1e-9


def test_transfer_linearity(small_setup):
    mesh, electrodes = small_setup
    sigma = 0.2 * np.ones(mesh.num_triangles)
    system = CemSystem(mesh, electrodes)
    fact = system.factorize(sigma)
    P = electrodes.num_electrodes
    i1 = np.zeros(P); i1[0], i1[1] = 1, -1
    i2 = np.zeros(P); i2[3], i2[5] = 2, -2
    x1 = fact.solve(system.rhs(i1))
    x2 = fact.solve(system.rhs(i2))
    x12 = fact.solve(system.rhs(i1 + i2))
    np.testing.assert_allclose(x12, x1 + x2, atol=1e-10 * np.abs(x1).max())


def test_monotonicity_in_sigma(small_setup, patterns8):
    mesh, electrodes = small_setup
    P = electrodes.num_electrodes
    a = solve_forward(mesh, electrodes, 0.1 * np.ones(mesh.num_triangles),
                      patterns8).measurements.reshape(P, P - 1)
    b = solve_forward(mesh, electrodes, 0.2 * np.ones(mesh.num_triangles),
                      patterns8).measurements.reshape(P, P - 1)
    driven_a = np.array([a[h, h] for h in range(P - 1)])
    driven_b = np.array([b[h, h] for h in range(P - 1)])
    assert (driven_a > 0).all()
    assert (driven_b < driven_a).all()


def test_rotation_symmetry():
    # 25-node mesh whose ring counts are multiples of P=8: rotation by one
    # electrode spacing is an exact mesh symmetry.
    mesh, electrodes = build_disk_mesh(1.0, 25, 8, 0.5)
    pats = adjacent_patterns(8, 1.0)
    sol = solve_forward(mesh, electrodes, 0.13 * np.ones(mesh.num_triangles), pats)
    u = sol.voltages
    for h in range(7):
        np.testing.assert_allclose(u[h + 1], np.roll(u[h], 1),
                                   atol=1e-9 * np.abs(u).max())


def test_self_convergence():
    spectra = overlap_spectra()
    center, rad = np.array([0.3, 0.2]), 0.4
    vs = []
    for tv in (432, 1000, 2200):
        mesh, electrodes = build_disk_mesh(1.0, tv, 32, 0.5)
        cents = mesh.nodes[mesh.triangles].mean(axis=1)
        inside = np.hypot(cents[:, 0] - center[0], cents[:, 1] - center[1]) <= rad
        sigma = np.where(inside, 0.06, 0.13)
        pats = adjacent_patterns(32, 1.0)
        vs.append(solve_forward(mesh, electrodes, sigma, pats).measurements)
    d1 = np.linalg.norm(vs[1] - vs[0])
    d2 = np.linalg.norm(vs[2] - vs[1])
    assert d2 < d1


def test_phi_zero_for_flat_spectra(small_setup, rng):
    mesh, electrodes = small_setup
    flat = SpectraSet(E=np.array([[0.13, 0.13], [0.05, 0.05], [0.07, 0.07]]),
                      eps0=np.array([0.13, 0.05, 0.07]),
                      frequencies=np.array([1e3, 5e3, 50e3]))
    F = random_feasible(rng, mesh.num_triangles, 3)
    pats = adjacent_patterns(8, 1.0)
    phi = forward_map_phi(F, flat, mesh, electrodes, pats)
    assert np.abs(phi).max() < 1e-12


def test_phi_length_and_solve_count(small_setup, spectra, monkeypatch, rng):
    mesh, electrodes = small_setup
    pats = adjacent_patterns(8, 1.0)
    F = random_feasible(rng, mesh.num_triangles, 3)
    calls = []
    orig = CemSystem.factorize

    def counting(self, sigma):
        calls.append(1)
        return orig(self, sigma)

    monkeypatch.setattr(CemSystem, "factorize", counting)
    phi = forward_map_phi(F, spectra, mesh, electrodes, pats)
    assert phi.size == (8 - 1) * 8 * spectra.num_frequencies
    assert len(calls) == spectra.num_frequencies + 1


def test_phi_matches_component_solves(small_setup, spectra, rng):
    # compositional oracle: recompute each frequency block from two
    # independent forward solves
    mesh, electrodes = small_setup
    pats = adjacent_patterns(8, 1.0)
    F = random_feasible(rng, mesh.num_triangles, 3)
    phi = forward_map_phi(F, spectra, mesh, electrodes, pats)
    from mfeit.fractions import fractions_to_conductivity
    v0 = solve_forward(mesh, electrodes,
                       fractions_to_conductivity(F, spectra, 0), pats).measurements
    K = v0.size
    for i in (1, 2):
        vi = solve_forward(mesh, electrodes,
                           fractions_to_conductivity(F, spectra, i),
                           pats).measurements
        np.testing.assert_allclose(phi[(i - 1) * K:i * K], vi - v0, rtol=1e-10)


def test_phi_rejects_infeasible(small_setup, spectra):
    mesh, electrodes = small_setup
    pats = adjacent_patterns(8, 1.0)
    F = np.full((mesh.num_triangles, 3), 0.5)
    with pytest.raises(ForwardError):
        forward_map_phi(F, spectra, mesh, electrodes, pats)


def test_rejects_nonpositive_sigma(small_setup):
    mesh, electrodes = small_setup
    system = CemSystem(mesh, electrodes)
    with pytest.raises(ForwardError):
        system.assemble(np.zeros(mesh.num_triangles))
