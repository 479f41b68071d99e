import math

import numpy as np
import pytest
import scipy.sparse as sp

from stripfold.fem import KinematicState
from stripfold.scenarios import Scenario
from stripfold.solvers import (
    DynamicOptions,
    NewtonOptions,
    NonConvergence,
    integrate_dynamic,
    smallest_eigenvalue,
    solve_static,
)


@pytest.fixture(scope="module")
def lifted():
    """Coarse strip with its grasped edge lifted 5 cm and pulled in 5 cm."""
    sc = Scenario(nx=24, nz=2)
    system = sc.system(sc.path_from_hold_frame([[0, 0.3, 0.05, 0.0], [1, 0.25, 0.05, 0.0]]))
    res = solve_static(system, KinematicState.zeros(system.mesh), 0.0)
    return system, res


def test_static_equilibrium_balances_weight(lifted):
    system, res = lifted
    tol = NewtonOptions().absolute_tolerance(system)
    assert np.linalg.norm(res.residual[res.free]) <= tol
    f, _, _ = system.contact(res.state.u, res.active)
    total_up = res.reaction[1] + res.hold_reaction[1] + f[1::2].sum()
    assert total_up == pytest.approx(system.total_weight, rel=1e-8)
    assert res.reaction[0] + res.hold_reaction[0] + f[0::2].sum() == pytest.approx(0.0, abs=1e-8)


def test_static_solution_is_stable(lifted):
    _, res = lifted
    assert smallest_eigenvalue(res.K_free).mu_min > 0


def test_nonconvergence_is_raised(lifted):
    system, _ = lifted
    with pytest.raises(NonConvergence):
        solve_static(system, KinematicState.zeros(system.mesh), 1.0, NewtonOptions(max_iterations=1))


def test_newton_option_validation():
    with pytest.raises(ValueError):
        NewtonOptions(max_iterations=0)
    with pytest.raises(ValueError):
        NewtonOptions(backtrack=1.0)
    with pytest.raises(ValueError):
        DynamicOptions(beta=0.2)
    with pytest.raises(ValueError):
        DynamicOptions(dt=0.0)


@pytest.mark.parametrize("n", [3, 50, 400])
def test_eigen_laplacian(n):
    K = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    rep = smallest_eigenvalue(K)
    assert rep.mu_min == pytest.approx(2 - 2 * math.cos(math.pi / (n + 1)), rel=1e-8)
    exact = np.sin(np.pi * np.arange(1, n + 1) / (n + 1))
    assert abs(rep.mode @ exact) / np.linalg.norm(exact) == pytest.approx(1.0, abs=1e-8)


def test_eigen_indefinite_matrix():
    d = np.array([3.0, -2.0, 5.0, 1.0, 0.5, 7.0])
    rep = smallest_eigenvalue(sp.diags(d))
    assert rep.mu_min == pytest.approx(-2.0, rel=1e-10)
    assert abs(rep.mode[1]) == pytest.approx(1.0, abs=1e-10)


def test_damped_dynamics_settles_to_static(lifted):
    system, res = lifted
    start = KinematicState(res.state.u.copy())
    start.u[2 * system.mesh.midpoint + 1] += 2e-3
    dyn = integrate_dynamic(system, start, 0.0, DynamicOptions(alpha_m=20.0))
    assert dyn.settled
    assert np.max(np.abs(dyn.final.u - res.state.u)) < 1e-4 * system.mesh.length
