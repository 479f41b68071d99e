"""Strip geometry, material parametrization and reference mesh.

The strip is modelled as a unit-width slice in the (x, z) plane with the
origin in the middle of the strip: x spans [-l/2, l/2] and z spans
[-h/2, h/2] in the reference configuration.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np


class ParameterError(ValueError):
    """Raised for parameters outside their physical domain."""


class IncompressibilityError(ParameterError):
    """Raised for Poisson's ratio at or above 0.5."""


class ResolutionError(ValueError):
    """Raised when a mesh resolution is below the supported minimum."""


def ratios_from_material(E, h, nu, rho):
    """Return ``(eta_m, eta_b)`` for a strip of thickness ``h``."""
    eta_m = (1.0 - nu**2) * rho / (h * E)
    eta_b = 12.0 * (1.0 - nu**2) * rho / (h**3 * E)
    return eta_m, eta_b


@dataclass(frozen=True)
class MaterialParams:
    """Isotropic St. Venant-Kirchhoff material with weight-to-stiffness ratios.

    ``youngs_modulus`` and ``thickness`` are derived quantities: build
    instances with :func:`material_from_ratios`. ``density`` is the areal
    density [kg/m^2] that enters the ratio mapping; the equivalent solid of
    thickness ``h`` carries the volumetric density ``density / h``.
    """

    youngs_modulus: float
    poissons_ratio: float
    density: float
    eta_m: float
    eta_b: float
    thickness: float
    gravity: float = 9.81

    def __post_init__(self):
        if not self.youngs_modulus > 0:
            raise ParameterError("Young's modulus must be positive")
        if not self.density > 0:
            raise ParameterError("density must be positive")
        if not (self.eta_m > 0 and self.eta_b > 0):
            raise ParameterError("weight-to-stiffness ratios must be positive")
        if not self.thickness > 0:
            raise ParameterError("thickness must be positive")
        if self.gravity < 0:
            raise ParameterError("gravity is a magnitude and must be non-negative")
        if not 0.0 <= self.poissons_ratio:
            raise ParameterError("Poisson's ratio must be non-negative")
        if self.poissons_ratio >= 0.5:
            raise IncompressibilityError("Poisson's ratio must be below 0.5")
        eta_m, eta_b = ratios_from_material(
            self.youngs_modulus, self.thickness, self.poissons_ratio, self.density
        )
        if not (
            math.isclose(eta_m, self.eta_m, rel_tol=1e-12)
            and math.isclose(eta_b, self.eta_b, rel_tol=1e-12)
        ):
            raise ParameterError(
                "(E, h, nu, rho) are inconsistent with the stored (eta_m, eta_b)"
            )

    @property
    def h(self):
        return self.thickness

    @property
    def E(self):
        return self.youngs_modulus

    @property
    def nu(self):
        return self.poissons_ratio

    @property
    def rho(self):
        return self.density

    @property
    def mass_density(self):
        """Volumetric density of the equivalent solid [kg/m^3]."""
        return self.density / self.thickness

    @property
    def bending_length(self):
        """Gravity bending length ``(D / (rho g))^(1/3)`` [m]."""
        if self.gravity == 0:
            return math.inf
        D = self.youngs_modulus * self.thickness**3 / (12.0 * (1.0 - self.poissons_ratio**2))
        return (D / (self.density * self.gravity)) ** (1.0 / 3.0)


def material_from_ratios(eta_m, eta_b, nu=0.0, rho=1.0, gravity=9.81):
    """Map weight-to-stiffness ratios onto an equivalent elastic solid.

    Parameters
    ----------
    eta_m : float
        Weight-to-membrane-stiffness ratio [m^-2 s^2].
    eta_b : float
        Weight-to-bending-stiffness ratio [m^-2 s^2].
    nu : float
        Poisson's ratio.
    rho : float
        Areal density [kg/m^2].
    gravity : float
        Magnitude of the gravitational acceleration [m/s^2].

    Returns
    -------
    MaterialParams
        Material with the effective thickness ``h = sqrt(12 eta_m / eta_b)``
        and modulus ``E = (1 - nu^2) rho / (h eta_m)``. The thickness is a
        modelling quantity and not the physical fabric thickness.
    """
    for name, value in (("eta_m", eta_m), ("eta_b", eta_b), ("rho", rho)):
        if not value > 0:
            raise ParameterError(f"{name} must be positive, got {value!r}")
    if nu < 0:
        raise ParameterError(f"nu must be non-negative, got {nu!r}")
    if nu >= 0.5:
        raise IncompressibilityError(f"nu must be below 0.5, got {nu!r}")
    h = math.sqrt(12.0 * eta_m / eta_b)
    E = (1.0 - nu**2) * rho / (h * eta_m)
    # store the ratios recomputed from (E, h) so the consistency check is exact
    return MaterialParams(
        youngs_modulus=E,
        poissons_ratio=nu,
        density=rho,
        eta_m=eta_m,
        eta_b=eta_b,
        thickness=h,
        gravity=gravity,
    )


def elasticity_matrix(E, nu):
    """Isotropic elasticity matrix in Voigt notation.

    Returns the full 6x6 matrix ordered (xx, yy, zz, yz, xz, xy) with
    engineering shear strains.
    """
    if not E > 0:
        raise ParameterError("E must be positive")
    if nu < 0:
        raise ParameterError("nu must be non-negative")
    if nu >= 0.5:
        raise IncompressibilityError("elasticity prefactor is singular for nu >= 0.5")
    D = np.zeros((6, 6))
    D[:3, :3] = nu
    D[np.arange(3), np.arange(3)] = 1.0 - nu
    D[np.arange(3, 6), np.arange(3, 6)] = (1.0 - 2.0 * nu) / 2.0
    return E / ((1.0 + nu) * (1.0 - 2.0 * nu)) * D


def plane_elasticity_matrix(E, nu):
    """In-plane 3x3 sub-matrix for the (xx, zz, xz) components."""
    C = elasticity_matrix(E, nu)
    idx = [0, 2, 4]
    return C[np.ix_(idx, idx)].copy()


@dataclass(frozen=True)
class StripGeometry:
    """Strip of length ``l`` and effective thickness ``h``.

    ``folding_line`` is measured from the held end, i.e. in [0, l].
    ``width`` is bookkeeping only; all forces are per unit width.
    """

    length: float
    thickness: float
    folding_line: float
    width: float = 1.0

    def __post_init__(self):
        l, h, xf = self.length, self.thickness, self.folding_line
        if not l > 0:
            raise ParameterError("length must be positive")
        if not h > 0:
            raise ParameterError("thickness must be positive")
        if not h < l:
            raise ParameterError("thickness must be smaller than length")
        if not 0 < xf < l:
            raise ParameterError("folding line must lie inside the strip")
        if xf < l / 2:
            raise ParameterError(
                "folding line must be at least l/2 from the held end so the "
                "folded part lands on the supported region"
            )
        if not self.width > 0:
            raise ParameterError("width must be positive")

    @property
    def l(self):
        return self.length

    @property
    def h(self):
        return self.thickness

    @property
    def fold_x(self):
        """Folding line in the mid-origin model frame."""
        return self.folding_line - self.length / 2


@dataclass(frozen=True, eq=False)
class StripMesh:
    """Regular grid of 4-node quadrilaterals over the strip cross-section.

    Node ``(i, j)`` with ``0 <= i <= nx`` along the length and
    ``0 <= j <= nz`` through the thickness has index ``i * (nz + 1) + j``.
    Elements are listed counter-clockwise in the (x, z) plane.
    """

    nodes: np.ndarray
    elements: np.ndarray
    nx: int
    nz: int
    length: float
    thickness: float
    bottom: np.ndarray = field(repr=False)
    top: np.ndarray = field(repr=False)
    grasped: np.ndarray = field(repr=False)
    hold: int = 0

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_dofs(self):
        return 2 * self.nodes.shape[0]

    def node_id(self, i, j):
        return i * (self.nz + 1) + j

    @property
    def midsurface(self):
        """Node indices along the reference mid-surface (interpolated if nz is odd)."""
        j = self.nz // 2
        return np.array([self.node_id(i, j) for i in range(self.nx + 1)])

    @property
    def midpoint(self):
        """Node closest to the material midpoint of the mid-surface."""
        return int(self.node_id(self.nx // 2, self.nz // 2))

    @property
    def surface(self):
        """Bottom and top surface nodes, i.e. the ground-contact candidates."""
        return np.union1d(self.bottom, self.top)

    def reference_jacobians(self):
        """Determinants of the reference Jacobian at 2x2 Gauss points."""
        from .fem import reference_shape_gradients

        _, detJ, _ = reference_shape_gradients(self)
        return detJ


def build_strip_mesh(geometry, nx, nz):
    """Mesh the strip ``[-l/2, l/2] x [-h/2, h/2]`` with ``nx x nz`` quads."""
    if int(nx) != nx or int(nz) != nz:
        raise ResolutionError("resolution must be integral")
    nx, nz = int(nx), int(nz)
    if nx < 4:
        raise ResolutionError(f"nx must be at least 4, got {nx}")
    if nz < 1:
        raise ResolutionError(f"nz must be at least 1, got {nz}")
    l, h = geometry.length, geometry.thickness
    xs = np.linspace(-l / 2, l / 2, nx + 1)
    zs = np.linspace(-h / 2, h / 2, nz + 1)
    X, Z = np.meshgrid(xs, zs, indexing="ij")
    nodes = np.column_stack([X.ravel(), Z.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(nz), indexing="ij")
    i, j = i.ravel(), j.ravel()
    n0 = i * (nz + 1) + j
    elements = np.column_stack([n0, n0 + nz + 1, n0 + nz + 2, n0 + 1])

    bottom = np.arange(nx + 1) * (nz + 1)
    top = bottom + nz
    grasped = nx * (nz + 1) + np.arange(nz + 1)
    return StripMesh(
        nodes=nodes,
        elements=elements,
        nx=nx,
        nz=nz,
        length=l,
        thickness=h,
        bottom=bottom,
        top=top,
        grasped=grasped,
        hold=0,
    )
