"""Scenario builders: material, mesh and constraints assembled into systems.

Path coordinates handed to users follow the hold-end convention, ``x`` in
``[0, l]`` measured from the held end and ``z >= 0`` above the ground; the
builders convert to the mid-origin model frame.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
import math

import numpy as np

from .constraints import ConstraintSet, GraspConstraint, GripperPath, GroundContact, HoldConstraint
from .fem import KinematicState
from .model import StripGeometry, build_strip_mesh, material_from_ratios
from .system import StripSystem


class PreparationError(RuntimeError):
    """The approach move of an x-translation scenario did not stay stable."""


@dataclass(frozen=True)
class Scenario:
    """Strip, material and discretization of one simulation.

    Attributes
    ----------
    length : float
        Strip length l [m].
    fold_ratio : float
        Folding line as a fraction of l, measured from the held end.
    eta_m, eta_b : float
        Weight-to-membrane and weight-to-bending stiffness ratios [s^2/m^2].
    rho : float
        Areal density [kg/m^2]; see :func:`~stripfold.model.material_from_ratios`.
    nx, nz : int
        Elements along the length and through the thickness.
    grasp : {"clamp", "pin"}
        How the gripper holds the strip edge.
    contact_factor : float
        Penalty stiffness as a multiple of ``E / h``.
    """

    length: float = 0.3
    fold_ratio: float = 0.55
    width: float = 1.0
    eta_m: float = 1e-3
    eta_b: float = 100.0
    nu: float = 0.0
    rho: float = 1.0
    gravity: float = 9.81
    nx: int = 120
    nz: int = 4
    grasp: str = "clamp"
    contact_factor: float = 1e4
    stress_model: str = "svk"
    lumped_mass: bool = False

    @property
    def x_f(self):
        return self.fold_ratio * self.length

    def material(self):
        return material_from_ratios(self.eta_m, self.eta_b, self.nu, self.rho, self.gravity)

    def geometry(self):
        return StripGeometry(self.length, self.material().h, self.x_f, self.width)

    def mesh(self):
        return build_strip_mesh(self.geometry(), self.nx, self.nz)

    def to_model(self, x):
        """Hold-end x to the mid-origin model frame."""
        return np.asarray(x, dtype=float) - self.length / 2

    def to_hold_frame(self, x):
        return np.asarray(x, dtype=float) + self.length / 2

    def path_from_hold_frame(self, waypoints):
        """``(lambda, x, z, theta)`` rows in hold-end coordinates to a model path."""
        w = np.array(waypoints, dtype=float, ndmin=2)
        w[:, 1] = self.to_model(w[:, 1])
        return GripperPath(w)

    def system(self, path=None, ground=True, hold=True, grasp=True):
        mat = self.material()
        mesh = build_strip_mesh(StripGeometry(self.length, mat.h, self.x_f, self.width), self.nx, self.nz)
        cs = ConstraintSet(
            ground=GroundContact.for_mesh(mesh, mat, self.contact_factor * mat.E / mat.h) if ground else None,
            hold=HoldConstraint(mesh.hold) if hold else None,
            grasp=GraspConstraint.for_mesh(mesh, self.grasp) if grasp else None,
            path=path if path is not None else (self.rest_path() if grasp else None),
        )
        return StripSystem(mesh, mat, cs, stress_model=self.stress_model, lumped_mass=self.lumped_mass)

    def rest_path(self):
        """Gripper holding the edge at its rest pose."""
        return self.path_from_hold_frame([[0.0, self.length, 0.0, 0.0]])

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class XTranslation:
    """Gripper translation along x at a fixed height.

    The gripper first moves on a straight line from the rest pose to
    ``(x_start, z)``; that approach is traced statically to produce the
    initial state. The studied path then moves the gripper from ``x_start``
    to ``x_end`` at constant ``z`` and ``theta``, with the control parameter
    proportional to the gripper x.

    Coordinates are in the hold-end frame [m].
    """

    z: float = 0.05
    x_start: float = 0.24
    x_end: float = 0.295
    theta: float = 0.0

    def approach_path(self, scenario):
        l = scenario.length
        return scenario.path_from_hold_frame([[0.0, l, 0.0, 0.0], [1.0, self.x_start, self.z, self.theta]])

    def path(self, scenario):
        return scenario.path_from_hold_frame(
            [[0.0, self.x_start, self.z, self.theta], [1.0, self.x_end, self.z, self.theta]]
        )

    def gripper_x(self, lam):
        """Hold-end gripper x at control parameter ``lam``."""
        return self.x_start + lam * (self.x_end - self.x_start)

    def prepare(self, scenario, options=None):
        """System of the x-translation and its initial equilibrium.

        Raises
        ------
        PreparationError
            If the approach move meets a critical point or fails.
        """
        from .continuation import ContinuationOptions, trace_path

        opts = options if options is not None else ContinuationOptions()
        opts = replace(opts, handoff=False)
        approach = scenario.system(self.approach_path(scenario))
        rec = trace_path(approach, opts)
        if not rec.completed or rec.critical_events():
            raise PreparationError(f"approach to z={self.z:g} did not stay stable: {rec.message}")
        system = scenario.system(self.path(scenario))
        return system, KinematicState(rec.final.u.copy())


def x_translation_scenario(eta_b=300.0, nx=160, z=0.05, **kw):
    """The default x-translation setup: a pinned strip arched over the ground
    and pulled flat until the arch gives way."""
    return Scenario(eta_b=eta_b, nx=nx, grasp="pin", **kw), XTranslation(z=z)


def resolution_for(scenario, ratio=0.3, minimum=120, multiple=40):
    """Elements along the length keeping ``dx / h <= ratio``.

    Long thin bilinear elements lock in bending; this keeps their aspect
    ratio bounded. The count is rounded up to a multiple of ``multiple``.
    """
    h = scenario.material().h
    n = math.ceil(scenario.length / (ratio * h) / multiple) * multiple
    return int(max(minimum, n))


@dataclass(frozen=True)
class XTranslationCell:
    """Picklable cell builder for :func:`~stripfold.continuation.critical_sweep`.

    Each call copies ``scenario`` with the requested bending ratio (and, when
    ``auto_resolution`` is set, the matching mesh) and ``translation`` with
    the requested height, then runs the approach move.
    """

    scenario: Scenario
    translation: XTranslation
    options: object = None
    auto_resolution: bool = True

    def __call__(self, eta_b, z):
        sc = self.scenario.with_(eta_b=float(eta_b))
        if self.auto_resolution:
            sc = sc.with_(nx=max(self.scenario.nx, resolution_for(sc)))
        xt = replace(self.translation, z=float(z))
        system, initial = xt.prepare(sc, self.options)
        return system, initial, xt.gripper_x
