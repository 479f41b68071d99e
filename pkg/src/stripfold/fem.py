"""Total-Lagrangian bilinear quadrilateral kernel for St. Venant-Kirchhoff solids.

Displacement vectors are flat with layout ``[u_x0, u_z0, u_x1, u_z1, ...]``.
All integrals are per unit width.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .model import plane_elasticity_matrix

_G = 1.0 / np.sqrt(3.0)
GAUSS_POINTS = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])
GAUSS_WEIGHTS = np.ones(4)
_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])

STRESS_MODELS = ("svk", "printed")


class ElementInversionError(RuntimeError):
    """Raised when det F <= 0 at a quadrature point."""

    def __init__(self, elements):
        self.elements = np.asarray(elements, dtype=int)
        shown = ", ".join(str(e) for e in self.elements[:10])
        more = "" if len(self.elements) <= 10 else f" (+{len(self.elements) - 10} more)"
        super().__init__(f"inverted elements: {shown}{more}")


@dataclass
class KinematicState:
    """Nodal displacements and velocities, flat ``(2 * n_nodes,)`` arrays."""

    u: np.ndarray
    v: np.ndarray = None
    tag: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if self.v is None:
            self.v = np.zeros_like(self.u)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.shape != self.v.shape or self.u.ndim != 1 or self.u.size % 2:
            raise ValueError("u and v must be flat arrays of equal, even length")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise ValueError("state contains non-finite entries")

    @classmethod
    def zeros(cls, mesh):
        return cls(np.zeros(mesh.n_dofs))

    def positions(self, mesh):
        return mesh.nodes + self.u.reshape(-1, 2)

    def copy(self):
        return KinematicState(self.u.copy(), self.v.copy(), self.tag)


@dataclass
class ElementEval:
    """Per-quadrature-point kinematics and stress of one element."""

    F: np.ndarray
    E: np.ndarray
    S: np.ndarray


@dataclass
class AssembledSystem:
    internal_force: np.ndarray
    tangent_stiffness: sp.csr_matrix
    external_force: np.ndarray = None
    mass: sp.csr_matrix = None
    extra: dict = field(default_factory=dict)

    @property
    def residual(self):
        ext = 0.0 if self.external_force is None else self.external_force
        return self.internal_force - ext


def shape_functions(xi, eta):
    return 0.25 * (1 + _CORNERS[:, 0] * xi) * (1 + _CORNERS[:, 1] * eta)


def shape_derivatives(xi, eta):
    """(4, 2) derivatives of the bilinear shape functions in the parent frame."""
    dxi = 0.25 * _CORNERS[:, 0] * (1 + _CORNERS[:, 1] * eta)
    deta = 0.25 * _CORNERS[:, 1] * (1 + _CORNERS[:, 0] * xi)
    return np.column_stack([dxi, deta])


def reference_shape_gradients(mesh):
    """Return ``dN_dX (nel, 4, 4, 2)``, ``detJ (nel, 4)`` and ``N (4, 4)``.

    The second axis indexes Gauss points, the third element nodes.
    """
    X = mesh.nodes[mesh.elements]  # (nel, 4, 2)
    dN_parent = np.stack([shape_derivatives(*gp) for gp in GAUSS_POINTS])  # (q, a, 2)
    J = np.einsum("eai,qaj->eqij", X, dN_parent)
    detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    Jinv = np.empty_like(J)
    Jinv[..., 0, 0] = J[..., 1, 1]
    Jinv[..., 1, 1] = J[..., 0, 0]
    Jinv[..., 0, 1] = -J[..., 0, 1]
    Jinv[..., 1, 0] = -J[..., 1, 0]
    Jinv /= detJ[..., None, None]
    # dN/dX_j = dN/dxi_k * dxi_k/dX_j
    dN_dX = np.einsum("qak,eqkj->eqaj", dN_parent, Jinv)
    N = np.stack([shape_functions(*gp) for gp in GAUSS_POINTS])
    return dN_dX, detJ, N


class _Kernel:
    """Per-mesh precomputations: shape gradients, quadrature weights, sparsity."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.dN, detJ, self.N = reference_shape_gradients(mesh)
        if np.any(detJ <= 0):
            raise ValueError("mesh has non-positive reference Jacobians")
        self.wdet = detJ * GAUSS_WEIGHTS[None, :]
        el = mesh.elements
        dofs = np.empty((el.shape[0], 8), dtype=np.int64)
        dofs[:, 0::2] = 2 * el
        dofs[:, 1::2] = 2 * el + 1
        self.dofs = dofs
        n = mesh.n_dofs
        rows = np.repeat(dofs, 8, axis=1).ravel()
        cols = np.tile(dofs, (1, 8)).ravel()
        key = rows * n + cols
        uniq, self.scatter = np.unique(key, return_inverse=True)
        self.indices = (uniq % n).astype(np.int32)
        rowcount = np.bincount(uniq // n, minlength=n)
        self.indptr = np.concatenate([[0], np.cumsum(rowcount)]).astype(np.int32)
        self.n = n

    def csr(self, ke):
        """Scatter element matrices ``(nel, 8, 8)`` into a CSR matrix."""
        data = np.bincount(self.scatter, weights=ke.ravel(), minlength=len(self.indices))
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=(self.n, self.n))

    def vector(self, fe):
        return np.bincount(self.dofs.ravel(), weights=fe.ravel(), minlength=self.n)


@lru_cache(maxsize=64)
def kernel(mesh):
    return _Kernel(mesh)


def _element_displacements(mesh, u):
    return np.asarray(u, dtype=float).reshape(-1, 2)[mesh.elements]  # (nel, 4, 2)


def deformation_gradients(mesh, u):
    """Deformation gradients ``F = I + grad u`` at all Gauss points, (nel, 4, 2, 2)."""
    k = kernel(mesh)
    ue = _element_displacements(mesh, u)
    F = np.einsum("eai,eqaj->eqij", ue, k.dN)
    F[..., 0, 0] += 1.0
    F[..., 1, 1] += 1.0
    return F


def deformation_gradient(mesh, u, element, quad_point):
    """Deformation gradient of one element at one of its four Gauss points."""
    k = kernel(mesh)
    ue = np.asarray(u, dtype=float).reshape(-1, 2)[mesh.elements[element]]
    F = np.eye(2) + ue.T @ k.dN[element, quad_point]
    return F


def green_lagrange(F):
    """Green-Lagrange strain ``(F^T F - I) / 2``; accepts batched (..., 2, 2)."""
    F = np.asarray(F, dtype=float)
    C = np.einsum("...ki,...kj->...ij", F, F)
    return 0.5 * (C - np.eye(2))


def _determinant(F):
    return F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]


def _to_voigt(E):
    return np.stack([E[..., 0, 0], E[..., 1, 1], 2.0 * E[..., 0, 1]], axis=-1)


def _from_voigt(s):
    out = np.empty(s.shape[:-1] + (2, 2))
    out[..., 0, 0] = s[..., 0]
    out[..., 1, 1] = s[..., 1]
    out[..., 0, 1] = out[..., 1, 0] = s[..., 2]
    return out


def elasticity_tensor(material):
    """Fourth-order in-plane elasticity tensor ``C[i, j, k, l]``."""
    D = plane_elasticity_matrix(material.youngs_modulus, material.poissons_ratio)
    vmap = {(0, 0): 0, (1, 1): 1, (0, 1): 2, (1, 0): 2}
    C = np.empty((2, 2, 2, 2))
    for (i, j), a in vmap.items():
        for (k, l), b in vmap.items():
            C[i, j, k, l] = D[a, b]
    return C


def material_stress(strain, material):
    """``C : E`` for symmetric 2x2 strains (batched)."""
    D = plane_elasticity_matrix(material.youngs_modulus, material.poissons_ratio)
    return _from_voigt(_to_voigt(np.asarray(strain, dtype=float)) @ D.T)


def pk2_stress(strain, material, F=None, model="svk"):
    """Second Piola-Kirchhoff stress.

    ``model="svk"`` is the standard St. Venant-Kirchhoff law ``S = C : E``.
    ``model="printed"`` evaluates ``S = det F F^-1 (C : E) F^-T`` and needs ``F``.
    """
    sigma = material_stress(strain, material)
    if model == "svk":
        return sigma
    if model != "printed":
        raise ValueError(f"unknown stress model {model!r}")
    if F is None:
        raise ValueError("the printed stress model needs the deformation gradient")
    F = np.asarray(F, dtype=float)
    Finv = np.linalg.inv(F)
    J = _determinant(F)
    return J[..., None, None] * Finv @ sigma @ np.swapaxes(Finv, -1, -2)


def evaluate_element(mesh, u, material, element, model="svk"):
    F = deformation_gradients(mesh, u)[element]
    E = green_lagrange(F)
    return ElementEval(F=F, E=E, S=pk2_stress(E, material, F=F, model=model))


def _check_inversion(F):
    detF = _determinant(F)
    bad = np.where(np.any(detF <= 0, axis=1))[0]
    if bad.size:
        raise ElementInversionError(bad)


def strain_energy(mesh, u, material):
    """Total St. Venant-Kirchhoff strain energy per unit width."""
    k = kernel(mesh)
    E = green_lagrange(deformation_gradients(mesh, u))
    S = material_stress(E, material)
    return 0.5 * float(np.sum(np.einsum("eqij,eqij->eq", S, E) * k.wdet))


def _first_pk_and_tangent(F, material, model, need_tangent):
    E = green_lagrange(F)
    if model == "svk":
        S = material_stress(E, material)
        P = F @ S
        if not need_tangent:
            return P, None
        C = elasticity_tensor(material)
        # A_ijkl = delta_ik S_jl + F_im C_mjnl F_kn
        A = np.einsum("ik,...jl->...ijkl", np.eye(2), S)
        A += np.einsum("...im,mjnl,...kn->...ijkl", F, C, F, optimize=True)
        return P, A
    if model == "printed":
        sigma = material_stress(E, material)
        Finv = np.linalg.inv(F)
        J = _determinant(F)[..., None, None]
        FinvT = np.swapaxes(Finv, -1, -2)
        P = J * sigma @ FinvT
        if not need_tangent:
            return P, None
        C = elasticity_tensor(material)
        Jx = J[..., None, None]
        A = Jx * np.einsum("...ij,...lk->...ijkl", P / J, Finv)
        A += Jx * np.einsum("iqml,...km,...jq->...ijkl", C, F, Finv, optimize=True)
        A -= Jx * np.einsum("...iq,...jk,...lq->...ijkl", sigma, Finv, Finv, optimize=True)
        return P, A
    raise ValueError(f"unknown stress model {model!r}")


def assemble_internal_force(mesh, u, material, model="svk"):
    k = kernel(mesh)
    F = deformation_gradients(mesh, u)
    _check_inversion(F)
    P, _ = _first_pk_and_tangent(F, material, model, need_tangent=False)
    fe = np.einsum("eqij,eqaj,eq->eai", P, k.dN, k.wdet)
    return k.vector(fe)


def _svk_element_arrays(k, F, material):
    """Element force vectors and stiffness matrices for the SVK law via B-matrices."""
    D = plane_elasticity_matrix(material.youngs_modulus, material.poissons_ratio)
    E = green_lagrange(F)
    Sv = _to_voigt(E) @ D.T  # (S11, S22, S12)
    dN = k.dN  # (e, q, a, j)
    # B[p, a, i]: variation of Voigt strain p with respect to u_{a,i}
    B = np.empty(dN.shape[:2] + (3, 4, 2))
    B[..., 0, :, :] = dN[..., :, 0, None] * F[..., None, :, 0]
    B[..., 1, :, :] = dN[..., :, 1, None] * F[..., None, :, 1]
    B[..., 2, :, :] = dN[..., :, 1, None] * F[..., None, :, 0] + dN[..., :, 0, None] * F[..., None, :, 1]
    B = B.reshape(dN.shape[:2] + (3, 8))
    Bw = B * k.wdet[..., None, None]
    fe = np.einsum("eqpa,eqp->ea", Bw, Sv)
    km = np.einsum("eqpa,pr,eqrb->eab", Bw, D, B, optimize=True)
    S = _from_voigt(Sv) * k.wdet[..., None, None]
    g = np.einsum("eqaj,eqjl,eqbl->eab", dN, S, dN, optimize=True)
    km[:, 0::2, 0::2] += g
    km[:, 1::2, 1::2] += g
    return fe, km


def assemble_internal_and_tangent(mesh, u, material, model="svk"):
    """Internal force vector and tangent stiffness at displacement ``u``.

    Returns
    -------
    AssembledSystem
        ``internal_force`` is the gradient of the strain energy with respect to
        the nodal displacements and ``tangent_stiffness`` its Jacobian
        (material plus geometric stiffness), assembled with 2x2 Gauss quadrature.

    Raises
    ------
    ElementInversionError
        If any quadrature point has ``det F <= 0``.
    """
    k = kernel(mesh)
    F = deformation_gradients(mesh, u)
    _check_inversion(F)
    if model == "svk":
        fe, ke = _svk_element_arrays(k, F, material)
        return AssembledSystem(internal_force=k.vector(fe), tangent_stiffness=k.csr(ke))
    P, A = _first_pk_and_tangent(F, material, model, need_tangent=True)
    fe = np.einsum("eqij,eqaj,eq->eai", P, k.dN, k.wdet)
    Aw = A * k.wdet[..., None, None, None, None]
    ke = np.einsum("eqaj,eqijkl,eqbl->eaibk", k.dN, Aw, k.dN, optimize=True)
    K = k.csr(ke.reshape(-1, 8, 8))
    return AssembledSystem(internal_force=k.vector(fe), tangent_stiffness=K)


def assemble_mass_and_gravity(mesh, material, lumped=False):
    """Consistent (or row-sum lumped) mass matrix and gravity load vector.

    Gravity acts in -z with magnitude ``material.gravity``; the load is the
    mass matrix applied to the uniform acceleration field.
    """
    k = kernel(mesh)
    rho = material.mass_density
    Nq = k.N  # (q, a)
    me = rho * np.einsum("qa,qb,eq->eab", Nq, Nq, k.wdet)
    ke = np.zeros((me.shape[0], 4, 2, 4, 2))
    ke[:, :, 0, :, 0] = me
    ke[:, :, 1, :, 1] = me
    M = k.csr(ke.reshape(-1, 8, 8))
    if lumped:
        M = sp.diags(np.asarray(M.sum(axis=1)).ravel()).tocsr()
    accel = np.zeros(mesh.n_dofs)
    accel[1::2] = -material.gravity
    return M, M @ accel
