"""Ground contact, holding point, rigid grasp and gripper path schedules."""
from __future__ import annotations

from dataclasses import dataclass, field
import io
import math
from pathlib import Path

import numpy as np
import scipy.sparse as sp


class PathDomainError(ValueError):
    """Raised when a gripper path is evaluated outside [0, 1]."""


class ConstraintConflictError(ValueError):
    """Raised when two constraints prescribe the same degree of freedom."""


def rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


# --------------------------------------------------------------------------
# gripper path


@dataclass(frozen=True, eq=False)
class GripperPath:
    """Piecewise-linear gripper pose schedule.

    ``waypoints`` is an ``(n, 4)`` array of ``(lambda, x, z, theta)`` rows with
    lambda strictly increasing from 0 to 1. Positions are in the mid-origin
    model frame and locate the gripper frame origin, which coincides with the
    mid-surface point of the grasped edge in the reference configuration.
    """

    waypoints: np.ndarray

    def __post_init__(self):
        w = np.array(self.waypoints, dtype=float)
        if w.ndim != 2 or w.shape[1] != 4 or w.shape[0] < 1:
            raise ValueError("waypoints must be an (n, 4) array")
        if not np.all(np.isfinite(w)):
            raise ValueError("waypoints must be finite")
        lam = w[:, 0]
        if w.shape[0] == 1:
            if lam[0] != 0.0:
                raise ValueError("a single-waypoint path must sit at lambda = 0")
        else:
            if lam[0] != 0.0 or lam[-1] != 1.0:
                raise ValueError("lambda must run from 0 to 1")
            if np.any(np.diff(lam) <= 0):
                raise ValueError("lambda must be strictly increasing")
        w.setflags(write=False)
        object.__setattr__(self, "waypoints", w)

    @classmethod
    def from_poses(cls, poses, parametrize="arclength"):
        """Build a path through ``(x, z, theta)`` poses.

        With ``parametrize="arclength"`` lambda is proportional to the
        cumulative gripper travel in the (x, z) plane (falling back to
        uniform spacing for a path that does not move).
        """
        poses = np.asarray(poses, dtype=float)
        if poses.shape[0] == 1:
            return cls(np.hstack([[0.0], poses[0]])[None, :])
        if parametrize == "arclength":
            seg = np.hypot(np.diff(poses[:, 0]), np.diff(poses[:, 1]))
            if seg.sum() > 0 and np.all(seg > 0):
                lam = np.concatenate([[0.0], np.cumsum(seg)]) / seg.sum()
            else:
                lam = np.linspace(0.0, 1.0, poses.shape[0])
        elif parametrize == "uniform":
            lam = np.linspace(0.0, 1.0, poses.shape[0])
        else:
            raise ValueError(f"unknown parametrization {parametrize!r}")
        lam[-1] = 1.0
        return cls(np.column_stack([lam, poses]))

    @property
    def start(self):
        return tuple(self.waypoints[0, 1:])

    @property
    def end(self):
        return tuple(self.waypoints[-1, 1:])

    @property
    def travel(self):
        """Total gripper travel in the (x, z) plane [m]."""
        w = self.waypoints
        return float(np.sum(np.hypot(np.diff(w[:, 1]), np.diff(w[:, 2]))))

    @property
    def is_static(self):
        return self.waypoints.shape[0] == 1 or bool(
            np.all(self.waypoints[1:, 1:] == self.waypoints[0, 1:])
        )

    def pose_at(self, lam):
        return gripper_pose_at(self, lam)


def gripper_pose_at(path, lam):
    """Pose ``(x, z, theta)`` at control parameter ``lam`` in [0, 1]."""
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise PathDomainError(f"lambda must lie in [0, 1], got {lam!r}")
    w = path.waypoints
    if w.shape[0] == 1:
        return tuple(float(v) for v in w[0, 1:])
    k = int(np.searchsorted(w[:, 0], lam, side="right")) - 1
    k = min(max(k, 0), w.shape[0] - 2)
    lo, hi = w[k], w[k + 1]
    if lam == lo[0]:
        return tuple(float(v) for v in lo[1:])
    if lam == hi[0]:
        return tuple(float(v) for v in hi[1:])
    t = (lam - lo[0]) / (hi[0] - lo[0])
    return tuple(float(a + t * (b - a)) for a, b in zip(lo[1:], hi[1:]))


PATH_HEADER = "lambda,x,z,theta"


def write_path(path, target):
    """Write waypoints as ``lambda,x,z,theta`` rows with 17 significant digits."""
    buf = io.StringIO()
    buf.write(PATH_HEADER + "\n")
    for row in path.waypoints:
        buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
    text = buf.getvalue()
    if target is not None:
        Path(target).write_text(text)
    return text


def read_path(source):
    """Read a path file written by :func:`write_path`."""
    lines = [ln.strip() for ln in Path(source).read_text().splitlines() if ln.strip()]
    if not lines or lines[0].replace(" ", "") != PATH_HEADER:
        raise ValueError(f"path file must start with the header {PATH_HEADER!r}")
    rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    return GripperPath(np.array(rows, dtype=float).reshape(-1, 4))


# --------------------------------------------------------------------------
# boundary conditions


@dataclass(frozen=True, eq=False)
class GroundContact:
    """Frictionless penalty contact with the plane ``z = z_g``.

    ``nodes`` are the contact candidates and ``areas`` their tributary area
    per unit width. The penalty ``stiffness`` is per unit area [N/m^3].
    """

    height: float
    stiffness: float
    nodes: np.ndarray
    areas: np.ndarray

    def __post_init__(self):
        if not self.stiffness > 0:
            raise ValueError("contact stiffness must be positive")
        if len(self.nodes) != len(self.areas):
            raise ValueError("one tributary area per contact node")

    @classmethod
    def for_mesh(cls, mesh, material, stiffness=None, surfaces=("bottom", "top"), height=None):
        """Contact on the given strip surfaces; default plane is the rest bottom surface."""
        nodes = np.unique(np.concatenate([getattr(mesh, s) for s in surfaces]))
        dx = mesh.length / mesh.nx
        i = nodes // (mesh.nz + 1)
        areas = np.where((i == 0) | (i == mesh.nx), dx / 2, dx)
        if stiffness is None:
            stiffness = 1e4 * material.youngs_modulus / material.thickness
        if height is None:
            height = -mesh.thickness / 2
        return cls(height=float(height), stiffness=float(stiffness), nodes=nodes, areas=areas)


def contact_contribution(mesh, u, ground, active=None, exclude=()):
    """Penalty contact force, stiffness and active set.

    Parameters
    ----------
    active : array of node ids, optional
        Frozen active set. When omitted the active set is every candidate node
        below the plane.
    exclude : array of node ids
        Nodes with prescribed positions; they never carry contact.

    Returns
    -------
    force : (n_dofs,) array
        Upward contact forces on the z-components; x-components are zero.
    stiffness : sparse (n_dofs, n_dofs) matrix
        Consistent diagonal penalty stiffness on the active z-DOFs.
    active : array of node ids
    """
    z = mesh.nodes[ground.nodes, 1] + np.asarray(u).reshape(-1, 2)[ground.nodes, 1]
    gap = ground.height - z  # > 0 means penetration
    if active is None:
        mask = gap > 0
    else:
        mask = np.isin(ground.nodes, active)
    if len(exclude):
        mask &= ~np.isin(ground.nodes, exclude)
    nodes = ground.nodes[mask]
    kA = ground.stiffness * ground.areas[mask]
    force = np.zeros(mesh.n_dofs)
    force[2 * nodes + 1] = kA * gap[mask]
    diag = np.zeros(mesh.n_dofs)
    diag[2 * nodes + 1] = kA
    return force, sp.diags(diag, format="csr"), nodes


def touching_nodes(mesh, u, ground, exclude=(), tol=0.0):
    """Candidate nodes on or below the plane (gap >= -tol)."""
    z = mesh.nodes[ground.nodes, 1] + np.asarray(u).reshape(-1, 2)[ground.nodes, 1]
    mask = ground.height - z >= -tol
    if len(exclude):
        mask &= ~np.isin(ground.nodes, exclude)
    return ground.nodes[mask]


def contact_forces(mesh, u, ground, exclude=()):
    """Per-node normal contact forces for penetrating candidates (dict node -> N)."""
    f, _, nodes = contact_contribution(mesh, u, ground, exclude=exclude)
    return {int(n): float(f[2 * n + 1]) for n in nodes}


@dataclass(frozen=True)
class HoldConstraint:
    """Fixes both coordinates of one node at its reference position."""

    node: int


@dataclass(frozen=True, eq=False)
class GraspConstraint:
    """Grasped nodes moving rigidly with the gripper frame.

    ``offsets`` are the node positions relative to the frame origin in the
    reference configuration, where the frame has orientation zero.
    """

    nodes: np.ndarray
    origin: tuple
    offsets: np.ndarray

    @classmethod
    def for_mesh(cls, mesh, mode="clamp"):
        """Grasp of the edge at ``x = +l/2``.

        ``mode="clamp"`` attaches every edge node rigidly to the gripper frame;
        ``mode="pin"`` prescribes only the node closest to the mid-surface so
        the strip can rotate freely about the gripper.
        """
        origin = (mesh.length / 2, 0.0)
        if mode == "clamp":
            nodes = np.asarray(mesh.grasped)
        elif mode == "pin":
            nodes = np.array([mesh.node_id(mesh.nx, mesh.nz // 2)])
        else:
            raise ValueError(f"unknown grasp mode {mode!r}")
        X = mesh.nodes[nodes]
        return cls(nodes=nodes, origin=origin, offsets=X - np.asarray(origin))

    def positions(self, pose):
        x, z, theta = pose
        return np.asarray([x, z]) + self.offsets @ rotation(theta).T

    def displacements(self, mesh, pose):
        return self.positions(pose) - mesh.nodes[self.nodes]


def prescribed_dofs(mesh, hold=None, grasp=None, pose=None):
    """Prescribed DOF indices and displacement values for hold and grasp."""
    dofs, vals = [], []
    if hold is not None:
        dofs += [2 * hold.node, 2 * hold.node + 1]
        vals += [0.0, 0.0]
    if grasp is not None:
        if pose is None:
            raise ValueError("a grasp needs a gripper pose")
        d = grasp.displacements(mesh, pose)
        for n, (dx, dz) in zip(grasp.nodes, d):
            dofs += [2 * n, 2 * n + 1]
            vals += [dx, dz]
    dofs = np.asarray(dofs, dtype=np.int64)
    if len(np.unique(dofs)) != len(dofs):
        raise ConstraintConflictError("a degree of freedom is prescribed twice")
    return dofs, np.asarray(vals, dtype=float)


@dataclass
class ReducedSystem:
    """Linear system restricted to free DOFs plus reaction bookkeeping."""

    K: sp.csr_matrix
    r: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    reactions: np.ndarray

    def expand(self, du_free, n):
        du = np.zeros(n)
        du[self.free] = du_free
        return du


def apply_dirichlet(K, r, fixed):
    """Eliminate the ``fixed`` DOFs from ``K du = -r``.

    The reaction at a fixed DOF is its residual component: the force the
    support must supply for equilibrium.
    """
    n = K.shape[0]
    fixed = np.asarray(fixed, dtype=np.int64)
    if len(np.unique(fixed)) != len(fixed):
        raise ConstraintConflictError("a degree of freedom is prescribed twice")
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    free = np.nonzero(mask)[0]
    K = K.tocsr()
    Kff = K[free][:, free] if len(fixed) else K
    return ReducedSystem(K=Kff, r=np.asarray(r)[free], free=free, fixed=fixed, reactions=np.asarray(r)[fixed])


@dataclass(eq=False)
class ConstraintSet:
    """All boundary conditions of a folding scenario.

    Any of ``ground``, ``hold`` and ``grasp`` may be ``None``; ``path`` is
    required when ``grasp`` is set.
    """

    ground: GroundContact = None
    hold: HoldConstraint = None
    grasp: GraspConstraint = None
    path: GripperPath = None
    extra_fixed: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.grasp is not None and self.path is None:
            raise ValueError("a grasp constraint needs a gripper path")
        if self.hold is not None and self.grasp is not None and self.hold.node in set(self.grasp.nodes.tolist()):
            raise ConstraintConflictError("the holding node is also grasped")

    def pose(self, lam):
        return None if self.path is None else gripper_pose_at(self.path, lam)

    def prescribed(self, mesh, lam):
        pose = self.pose(lam) if self.grasp is not None else None
        dofs, vals = prescribed_dofs(mesh, self.hold, self.grasp, pose)
        if self.extra_fixed:
            extra = np.asarray(self.extra_fixed, dtype=np.int64)
            dofs = np.concatenate([dofs, extra])
            vals = np.concatenate([vals, np.zeros(len(extra))])
            if len(np.unique(dofs)) != len(dofs):
                raise ConstraintConflictError("a degree of freedom is prescribed twice")
        return dofs, vals

    def prescribed_nodes(self):
        nodes = []
        if self.hold is not None:
            nodes.append(self.hold.node)
        if self.grasp is not None:
            nodes += list(self.grasp.nodes)
        return np.asarray(nodes, dtype=np.int64)

    def grasp_dofs(self):
        if self.grasp is None:
            return np.zeros(0, dtype=np.int64)
        return np.column_stack([2 * self.grasp.nodes, 2 * self.grasp.nodes + 1]).ravel()

    def hold_dofs(self):
        if self.hold is None:
            return np.zeros(0, dtype=np.int64)
        return np.array([2 * self.hold.node, 2 * self.hold.node + 1])
