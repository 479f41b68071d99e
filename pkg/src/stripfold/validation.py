"""Analytic oracle checks of the finite-element and continuation machinery.

Each check returns a :class:`Check` with the measured quantity, its
tolerance and the verdict; :func:`run_all` runs them in a fixed order.
"""
from __future__ import annotations

from dataclasses import dataclass
import math
import time

import numpy as np
import scipy.sparse as sp

from . import fem
from .continuation import locate_critical_point
from .fem import KinematicState
from .scenarios import Scenario
from .solvers import solve_static, smallest_eigenvalue


@dataclass
class Check:
    name: str
    measured: float
    tolerance: float
    passed: bool
    detail: str = ""
    seconds: float = 0.0

    def line(self):
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name}: measured {self.measured:.3e} (tolerance {self.tolerance:.1e}) {self.detail}".rstrip()


def _timed(fn):
    def wrapper(*args, **kw):
        t0 = time.perf_counter()
        c = fn(*args, **kw)
        c.seconds = time.perf_counter() - t0
        return c

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# --------------------------------------------------------------------------
# cantilever


def cantilever_scenario(eta_b=0.5, eta_m=1e-6, nx=480, nz=4):
    """Horizontal strip clamped at the grasped edge, no ground, no hold.

    The mesh keeps ``dx / h`` near 0.13 so bilinear bending locking stays
    well below the tolerance. With areal density the bending stiffness per
    unit width is ``rho / eta_b``, so the Euler-Bernoulli tip sag is
    ``g * eta_b * l**4 / 8`` whatever rho is.
    """
    return Scenario(eta_b=eta_b, eta_m=eta_m, nx=nx, nz=nz, grasp="clamp")


def beam_tip_sag(scenario):
    """Euler-Bernoulli tip sag of the uniformly loaded cantilever [m]."""
    mat = scenario.material()
    D = mat.E * mat.h**3 / (12 * (1 - mat.nu**2))
    w = scenario.rho * scenario.gravity
    return w * scenario.length**4 / (8 * D)


def cantilever_tip_sag(scenario):
    """Simulated tip sag of :func:`cantilever_scenario` [m]."""
    system = scenario.system(ground=False, hold=False)
    res = solve_static(system, KinematicState.zeros(system.mesh), 0.0)
    mesh = system.mesh
    n = mesh.node_id(0, mesh.nz // 2)
    return -float(res.state.u[2 * n + 1])


@_timed
def check_cantilever(scenario=None, tol=0.02):
    sc = scenario if scenario is not None else cantilever_scenario()
    ref = beam_tip_sag(sc)
    sim = cantilever_tip_sag(sc)
    err = abs(sim - ref) / ref
    return Check("cantilever", err, tol, err <= tol, f"sag {sim:.6e} m vs beam {ref:.6e} m")


# --------------------------------------------------------------------------
# tangent and gradient consistency


def _small_scenario():
    return Scenario(nx=12, nz=4)


def _random_states(mesh, rng, count, scale):
    for _ in range(count):
        u = scale * rng.standard_normal(mesh.n_dofs)
        d = rng.standard_normal(mesh.n_dofs)
        yield u, d / np.linalg.norm(d)


def tangent_errors(scenario=None, count=20, seed=0, assemble=None):
    """Relative mismatch of ``K d`` and the central difference of the internal force.

    ``assemble(u) -> (force, K)`` may be replaced for fault injection.
    """
    sc = scenario if scenario is not None else _small_scenario()
    mesh, mat = sc.mesh(), sc.material()
    if assemble is None:

        def assemble(u):
            a = fem.assemble_internal_and_tangent(mesh, u, mat)
            return a.internal_force, a.tangent_stiffness

    rng = np.random.default_rng(seed)
    eps = 1e-6 * sc.length
    out = []
    for u, d in _random_states(mesh, rng, count, 1e-3 * sc.length):
        f, K = assemble(u)
        fp, _ = assemble(u + eps * d)
        fm, _ = assemble(u - eps * d)
        fd = (fp - fm) / (2 * eps)
        Kd = K @ d
        out.append(float(np.linalg.norm(fd - Kd) / np.linalg.norm(Kd)))
    return np.array(out)


def gradient_errors(scenario=None, count=20, seed=1):
    """Relative mismatch of the internal force and the energy gradient."""
    sc = scenario if scenario is not None else _small_scenario()
    mesh, mat = sc.mesh(), sc.material()
    rng = np.random.default_rng(seed)
    eps = 1e-6 * sc.length
    out = []
    for u, d in _random_states(mesh, rng, count, 1e-3 * sc.length):
        f = fem.assemble_internal_force(mesh, u, mat)
        dW = (fem.strain_energy(mesh, u + eps * d, mat) - fem.strain_energy(mesh, u - eps * d, mat)) / (2 * eps)
        out.append(abs(dW - f @ d) / abs(f @ d))
    return np.array(out)


@_timed
def check_tangent(tol=1e-4, assemble=None):
    e = tangent_errors(assemble=assemble)
    m = float(e.max())
    return Check("tangent-consistency", m, tol, m <= tol, f"over {e.size} random states")


@_timed
def check_gradient(tol=1e-5):
    e = gradient_errors()
    m = float(e.max())
    return Check("gradient-consistency", m, tol, m <= tol, f"over {e.size} random states")


# --------------------------------------------------------------------------
# frame indifference


def rotation_force_norm(scenario=None, angles=(0.3, 1.0, 2.5, -1.7)):
    """Largest internal-force norm over rigid rotations of the stress-free strip,
    in units of ``E h``."""
    sc = scenario if scenario is not None else Scenario(nx=60, nz=4)
    mesh, mat = sc.mesh(), sc.material()
    X = mesh.nodes
    worst = 0.0
    for a in angles:
        c, s = math.cos(a), math.sin(a)
        R = np.array([[c, -s], [s, c]])
        u = (X @ R.T - X).ravel()
        f = fem.assemble_internal_force(mesh, u, mat)
        worst = max(worst, float(np.linalg.norm(f)) / (mat.E * mat.h))
    return worst


@_timed
def check_frame(tol=1e-8):
    m = rotation_force_norm()
    return Check("frame-indifference", m, tol, m <= tol, "force norm / (E h)")


# --------------------------------------------------------------------------
# eigen oracle


@_timed
def check_eigen(n=400, tol=1e-8):
    """Smallest eigenvalue of the 1D Laplacian, ``2 - 2 cos(pi / (n + 1))``."""
    K = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")
    exact = 2 - 2 * math.cos(math.pi / (n + 1))
    ev = smallest_eigenvalue(K)
    err = abs(ev.mu_min - exact) / exact
    return Check("eigen-oracle", err, tol, err <= tol, f"mu {ev.mu_min:.10e} vs {exact:.10e}")


# --------------------------------------------------------------------------
# cubic snap-through


LAMBDA_C_CUBIC = 2.0 / (3.0 * math.sqrt(3.0))


def cubic_probe(u_start=-1.0):
    """Probe for ``r(u) = u**3 - u - lam`` on the branch through ``u_start``.

    Newton starts from the last stable root; the probe succeeds when it
    converges to a root with positive stiffness ``3 u**2 - 1`` on the same
    (negative) branch.
    """
    last = {"u": u_start}

    def probe(lam):
        u = last["u"]
        for _ in range(100):
            r = u**3 - u - lam
            k = 3 * u**2 - 1
            if abs(r) < 1e-14:
                break
            if k == 0:
                return False, None
            u -= r / k
        else:
            return False, None
        stable = abs(u**3 - u - lam) < 1e-12 and 3 * u**2 - 1 > 0 and u < 0
        if stable:
            last["u"] = u
        return stable, u

    return probe


def cubic_critical_point(tol=1e-8):
    lam_c, bracket, _ = locate_critical_point(cubic_probe(), -1.0, 1.0, tol)
    return lam_c, bracket


@_timed
def check_cubic(tol=1e-6):
    lam_c, _ = cubic_critical_point()
    err = abs(lam_c - LAMBDA_C_CUBIC)
    return Check("cubic-snap-through", err, tol, err <= tol, f"lambda_c {lam_c:.10f} vs {LAMBDA_C_CUBIC:.10f}")


CHECKS = (check_cantilever, check_tangent, check_gradient, check_frame, check_eigen, check_cubic)


def run_all():
    return [c() for c in CHECKS]
