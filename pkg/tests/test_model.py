import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stripfold.model import (
    IncompressibilityError,
    ParameterError,
    ResolutionError,
    StripGeometry,
    build_strip_mesh,
    elasticity_matrix,
    material_from_ratios,
    plane_elasticity_matrix,
    ratios_from_material,
)


def test_default_mapping_values():
    m = material_from_ratios(1e-3, 100.0)
    assert m.h == pytest.approx(math.sqrt(12e-3 / 100.0), rel=1e-14)
    assert m.E == pytest.approx(1.0 / (m.h * 1e-3), rel=1e-14)
    assert m.mass_density == pytest.approx(1.0 / m.h)


@settings(max_examples=60, deadline=None)
@given(
    eta_m=st.floats(1e-6, 1e-1),
    eta_b=st.floats(1e-1, 1e4),
    nu=st.floats(0.0, 0.45),
    rho=st.floats(1e-2, 10.0),
)
def test_ratio_round_trip(eta_m, eta_b, nu, rho):
    m = material_from_ratios(eta_m, eta_b, nu, rho)
    back = ratios_from_material(m.E, m.h, m.nu, m.rho)
    assert back[0] == pytest.approx(eta_m, rel=1e-12)
    assert back[1] == pytest.approx(eta_b, rel=1e-12)


def test_bending_stiffness_is_rho_over_eta_b():
    m = material_from_ratios(1e-3, 250.0, 0.2, 0.7)
    D = m.E * m.h**3 / (12 * (1 - m.nu**2))
    assert D == pytest.approx(m.rho / m.eta_b, rel=1e-12)


@pytest.mark.parametrize(
    "args, exc",
    [
        ((0.0, 100.0), ParameterError),
        ((1e-3, -1.0), ParameterError),
        ((1e-3, 100.0, -0.1), ParameterError),
        ((1e-3, 100.0, 0.5), IncompressibilityError),
        ((1e-3, 100.0, 0.0, 0.0), ParameterError),
    ],
)
def test_invalid_ratios(args, exc):
    with pytest.raises(exc):
        material_from_ratios(*args)


def test_elasticity_matrix_uniaxial_and_singular():
    C = plane_elasticity_matrix(200.0, 0.0)
    np.testing.assert_allclose(C, np.diag([200.0, 200.0, 100.0]))
    with pytest.raises(IncompressibilityError):
        elasticity_matrix(1.0, 0.5)
    C6 = elasticity_matrix(3.0, 0.3)
    np.testing.assert_allclose(C6, C6.T)


def test_geometry_validation():
    with pytest.raises(ParameterError):
        StripGeometry(0.3, 0.01, 0.1)  # folding line closer to the hold than l/2
    with pytest.raises(ParameterError):
        StripGeometry(0.3, 0.01, 0.3)
    g = StripGeometry(0.3, 0.01, 0.165)
    assert g.fold_x == pytest.approx(0.015)


def test_mesh_tags_and_counts():
    g = StripGeometry(0.3, 0.01, 0.165)
    m = build_strip_mesh(g, 120, 4)
    assert m.n_nodes == 121 * 5
    assert m.elements.shape == (480, 4)
    assert len(m.grasped) == 5
    np.testing.assert_allclose(m.nodes[m.grasped, 0], 0.15)
    assert m.nodes[m.hold, 0] == -0.15 and m.nodes[m.hold, 1] == -0.005
    assert np.all(m.reference_jacobians() > 0)
    np.testing.assert_allclose(m.nodes[m.bottom, 1], -0.005)
    np.testing.assert_allclose(m.nodes[m.top, 1], 0.005)


def test_mesh_resolution_errors():
    g = StripGeometry(0.3, 0.01, 0.165)
    with pytest.raises(ResolutionError):
        build_strip_mesh(g, 2, 4)
    with pytest.raises(ResolutionError):
        build_strip_mesh(g, 10, 0)
