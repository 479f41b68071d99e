import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stripfold import fem
from stripfold.fem import ElementInversionError, KinematicState
from stripfold.scenarios import Scenario


@pytest.fixture(scope="module")
def strip():
    sc = Scenario(nx=12, nz=2)
    return sc.mesh(), sc.material()


def test_partition_of_unity():
    for xi, eta in [(-1, -1), (0.3, -0.2), (1, 1), (0.0, 0.9)]:
        assert fem.shape_functions(xi, eta).sum() == pytest.approx(1.0)
        assert np.allclose(fem.shape_derivatives(xi, eta).sum(axis=0), 0.0)


def test_uniform_stretch_energy_closed_form(strip):
    mesh, mat = strip
    s = 1.01
    u = np.column_stack([(s - 1) * mesh.nodes[:, 0], np.zeros(mesh.n_nodes)]).ravel()
    E11 = 0.5 * (s * s - 1)
    expected = 0.5 * mat.E * E11**2 * mesh.length * mesh.thickness  # nu = 0
    assert fem.strain_energy(mesh, u, mat) == pytest.approx(expected, rel=1e-12)
    F = fem.deformation_gradient(mesh, u, 3, 1)
    np.testing.assert_allclose(F, [[s, 0.0], [0.0, 1.0]], atol=1e-13)


def test_green_lagrange_of_rotation_vanishes():
    a = 0.7
    R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    np.testing.assert_allclose(fem.green_lagrange(R), 0.0, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-0.05, 0.05), min_size=4, max_size=4))
def test_printed_stress_equals_svk_without_deformation(vals):
    mat = Scenario().material()
    E = np.array([[vals[0], vals[1]], [vals[1], vals[2]]])
    S = fem.pk2_stress(E, mat, F=np.eye(2), model="printed")
    np.testing.assert_allclose(S, fem.pk2_stress(E, mat), rtol=1e-12, atol=1e-12 * mat.E)


def test_printed_model_needs_F():
    mat = Scenario().material()
    with pytest.raises(ValueError):
        fem.pk2_stress(np.zeros((2, 2)), mat, model="printed")
    with pytest.raises(ValueError):
        fem.pk2_stress(np.zeros((2, 2)), mat, F=np.eye(2), model="neo")


@pytest.mark.parametrize("model", fem.STRESS_MODELS)
def test_tangent_matches_finite_difference(strip, model, rng):
    mesh, mat = strip
    u = 1e-3 * mesh.length * rng.standard_normal(mesh.n_dofs)
    d = rng.standard_normal(mesh.n_dofs)
    d /= np.linalg.norm(d)
    a = fem.assemble_internal_and_tangent(mesh, u, mat, model)
    eps = 1e-7
    fp = fem.assemble_internal_force(mesh, u + eps * d, mat, model)
    fm = fem.assemble_internal_force(mesh, u - eps * d, mat, model)
    fd = (fp - fm) / (2 * eps)
    Kd = a.tangent_stiffness @ d
    assert np.linalg.norm(fd - Kd) <= 1e-5 * np.linalg.norm(Kd)
    np.testing.assert_allclose(a.internal_force, fem.assemble_internal_force(mesh, u, mat, model))


def test_svk_tangent_symmetric(strip, rng):
    mesh, mat = strip
    u = 1e-3 * rng.standard_normal(mesh.n_dofs)
    K = fem.assemble_internal_and_tangent(mesh, u, mat).tangent_stiffness
    assert abs(K - K.T).max() <= 1e-9 * abs(K).max()


def test_internal_force_sums_to_zero(strip, rng):
    mesh, mat = strip
    u = 1e-3 * rng.standard_normal(mesh.n_dofs)
    f = fem.assemble_internal_force(mesh, u, mat).reshape(-1, 2)
    assert np.abs(f.sum(axis=0)).max() <= 1e-9 * np.abs(f).max()


def test_mass_and_gravity_totals(strip):
    mesh, mat = strip
    M, g = fem.assemble_mass_and_gravity(mesh, mat)
    total = mat.mass_density * mesh.length * mesh.thickness
    assert M.sum() == pytest.approx(2 * total, rel=1e-12)
    assert g[1::2].sum() == pytest.approx(-total * mat.gravity, rel=1e-12)
    assert np.all(g[0::2] == 0)
    Ml, gl = fem.assemble_mass_and_gravity(mesh, mat, lumped=True)
    assert Ml.nnz == mesh.n_dofs
    np.testing.assert_allclose(gl, g)


def test_inversion_detected(strip):
    mesh, mat = strip
    u = np.zeros(mesh.n_dofs)
    u[1::2] = -2.0 * mesh.nodes[:, 1]  # mirror through the mid-surface
    with pytest.raises(ElementInversionError):
        fem.assemble_internal_force(mesh, u, mat)


def test_kinematic_state_validation():
    with pytest.raises(ValueError):
        KinematicState(np.zeros(3))
    with pytest.raises(ValueError):
        KinematicState(np.array([0.0, np.nan]))
    s = KinematicState(np.ones(4))
    assert np.all(s.v == 0) and s.copy().u is not s.u
