"""Discrete strip system: elasticity, gravity, contact and constraints together."""
from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import fem
from .constraints import ConstraintSet, contact_contribution, touching_nodes


class StripSystem:
    """Everything needed to evaluate residuals and tangents of one scenario.

    The residual is ``r = f_int - f_gravity - f_contact (+ c (u - u_ref))``;
    a converged state has ``r = 0`` on every free DOF and the reactions of the
    prescribed DOFs are their residual components.
    """

    def __init__(self, mesh, material, constraints=None, stress_model="svk", lumped_mass=False):
        if stress_model not in fem.STRESS_MODELS:
            raise ValueError(f"unknown stress model {stress_model!r}")
        self.mesh = mesh
        self.material = material
        self.constraints = constraints if constraints is not None else ConstraintSet()
        self.stress_model = stress_model
        self.lumped_mass = lumped_mass

    @cached_property
    def _mass_and_gravity(self):
        return fem.assemble_mass_and_gravity(self.mesh, self.material, lumped=self.lumped_mass)

    @property
    def mass(self):
        return self._mass_and_gravity[0]

    @property
    def gravity_force(self):
        return self._mass_and_gravity[1]

    @property
    def total_weight(self):
        m = self.material
        return m.mass_density * self.mesh.length * self.mesh.thickness * m.gravity

    @property
    def energy_scale(self):
        """Weight times length, the reference energy for settle checks."""
        w = self.total_weight
        if w == 0:
            m = self.material
            w = m.mass_density * self.mesh.length * self.mesh.thickness * 9.81
        return w * self.mesh.length

    def prescribed(self, lam):
        return self.constraints.prescribed(self.mesh, lam)

    def free_dofs(self, fixed):
        mask = np.ones(self.mesh.n_dofs, dtype=bool)
        mask[fixed] = False
        return np.nonzero(mask)[0]

    def contact(self, u, active=None):
        g = self.constraints.ground
        if g is None:
            n = self.mesh.n_dofs
            return np.zeros(n), sp.csr_matrix((n, n)), np.zeros(0, dtype=np.int64)
        return contact_contribution(self.mesh, u, g, active=active, exclude=self.constraints.prescribed_nodes())

    def touching(self, u, tol=0.0):
        """Contact candidates lying on or below the ground plane."""
        g = self.constraints.ground
        if g is None:
            return np.zeros(0, dtype=np.int64)
        return touching_nodes(self.mesh, u, g, exclude=self.constraints.prescribed_nodes(), tol=tol)

    def evaluate(self, u, active=None, friction=None, tangent=True):
        """Residual, tangent and contact active set at displacement ``u``.

        ``friction`` is an optional ``(c, u_ref)`` pair adding the pull
        ``-c (u - u_ref)`` towards a reference state.
        """
        if tangent:
            sys = fem.assemble_internal_and_tangent(self.mesh, u, self.material, self.stress_model)
            f_int, K = sys.internal_force, sys.tangent_stiffness
        else:
            f_int = fem.assemble_internal_force(self.mesh, u, self.material, self.stress_model)
            K = None
        fc, Kc, act = self.contact(u, active)
        r = f_int - self.gravity_force - fc
        if tangent:
            K = K + Kc
        if friction is not None:
            c, u_ref = friction
            if c:
                r = r + c * (u - u_ref)
                if tangent:
                    K = K + sp.identity(len(u), format="csr") * c
        return r, K, act

    def reactions(self, r):
        """Gripper and holding reactions from a residual vector."""
        cs = self.constraints
        out = {"grasp": np.zeros(2), "hold": np.zeros(2)}
        if cs.grasp is not None:
            rg = r.reshape(-1, 2)[cs.grasp.nodes]
            out["grasp"] = rg.sum(axis=0)
        if cs.hold is not None:
            out["hold"] = r.reshape(-1, 2)[cs.hold.node].copy()
        return out

    def kinetic_energy(self, v):
        return 0.5 * float(v @ (self.mass @ v))

    def potential_energy(self, u):
        """Strain plus gravity plus penalty energy."""
        e = fem.strain_energy(self.mesh, u, self.material)
        e -= float(self.gravity_force @ u)
        g = self.constraints.ground
        if g is not None:
            z = self.mesh.nodes[g.nodes, 1] + u.reshape(-1, 2)[g.nodes, 1]
            gap = np.maximum(g.height - z, 0.0)
            mask = ~np.isin(g.nodes, self.constraints.prescribed_nodes())
            e += 0.5 * float(np.sum(g.stiffness * g.areas[mask] * gap[mask] ** 2))
        return e
