"""Folding paths and the planned-versus-achieved touch assessment.

Generators take and return poses in the hold-end frame: ``x`` in ``[0, l]``
from the held end, ``z`` above the ground, ``theta`` the gripper rotation.
:meth:`Scenario.path_from_hold_frame` converts them for the model.

The touch position used throughout is the contact boundary of the lower
layer: the strip lies on the ground from the holding point up to it. The
planned value comes from the folded equilibrium; the achieved value is read
when grasped-side material first lands on the ground during a fold.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import logging
import math

import numpy as np

from .continuation import ContinuationOptions, InternalFriction, PathTracer
from .fem import ElementInversionError, KinematicState
from .solvers import NonConvergence, solve_static

log = logging.getLogger(__name__)


class PlanningError(RuntimeError):
    """The folded equilibrium could not be computed."""


class GeneratorStuckError(RuntimeError):
    """The R-path generator found no admissible step.

    The last converged state is kept in ``state`` for diagnosis.
    """

    def __init__(self, message, state=None, pose=None):
        super().__init__(message)
        self.state = state
        self.pose = pose


def _check_fold(l, x_f):
    if not l > 0:
        raise ValueError("strip length must be positive")
    if not l / 2 <= x_f < l:
        raise ValueError(f"folding line must satisfy l/2 <= x_f < l, got x_f={x_f!r} for l={l!r}")


def fold_target(l, x_f):
    """Start and target gripper poses ``(x, z, theta)`` of a fold."""
    _check_fold(l, x_f)
    return (l, 0.0, 0.0), (2 * x_f - l, 0.0, math.pi)


def _densify(points, n):
    """Resample a polyline uniformly in arc length; keeps the corners."""
    P = np.asarray(points, dtype=float)
    seg = np.hypot(*np.diff(P, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    lam = np.union1d(np.linspace(0.0, 1.0, n), s / s[-1])
    x = np.interp(lam, s / s[-1], P[:, 0])
    z = np.interp(lam, s / s[-1], P[:, 1])
    return lam, x, z


def triangular_path(l, x_f, n=41):
    """Gripper path of an infinitely flexible strip.

    Straight up-and-over: ``(l, 0)`` to the apex ``(x_f, l - x_f)`` above the
    folding line, then down to ``(2 x_f - l, 0)``. Lambda is proportional to
    arc length and theta grows linearly from 0 to pi.

    Returns
    -------
    numpy.ndarray
        ``(m, 4)`` waypoints ``(lambda, x, z, theta)`` in the hold-end frame.
    """
    _check_fold(l, x_f)
    apex = (x_f, l - x_f)
    lam, x, z = _densify([(l, 0.0), apex, (2 * x_f - l, 0.0)], n)
    return np.column_stack([lam, x, z, math.pi * lam])


def circular_path(l, x_f, n=41):
    """Gripper path of a rigid panel hinged at the folding line.

    A half circle of radius ``l - x_f`` about ``(x_f, 0)``; theta equals the
    swept angle, so the gripper stays tangent to the rotating panel.
    """
    _check_fold(l, x_f)
    r = l - x_f
    phi = np.linspace(0.0, math.pi, n)
    x = x_f + r * np.cos(phi)
    z = r * np.sin(phi)
    x[-1] = 2 * x_f - l
    z[[0, -1]] = 0.0
    return np.column_stack([phi / math.pi, x, z, phi])


# --------------------------------------------------------------------------
# touch measurements


def contact_columns(system, u, threshold=None, active=None):
    """Mesh columns with a surface node pressed onto the ground.

    A node counts as in contact when its penalty force exceeds
    ``threshold`` (default ``1e-6`` of the strip weight).
    """
    mesh = system.mesh
    if threshold is None:
        threshold = 1e-6 * system.total_weight
    f, _, act = system.contact(u, active)
    act = np.asarray(act, dtype=np.int64)
    fz = f[2 * act + 1]
    nodes = act[fz > threshold]
    return np.unique(nodes // (mesh.nz + 1))


def contact_boundary(system, u, threshold=None, active=None, max_gap=1):
    """World x (model frame) of the end of the ground contact run from the hold.

    Columns are scanned from the held end; the run tolerates gaps of up to
    ``max_gap`` columns. The held column counts as supported. Returns the
    x of the last mid-surface node of the run.
    """
    mesh = system.mesh
    cols = set(contact_columns(system, u, threshold, active).tolist())
    cols.add(0)
    last, gap = 0, 0
    for i in range(1, mesh.nx + 1):
        if i in cols:
            last, gap = i, 0
        else:
            gap += 1
            if gap > max_gap:
                break
    n = mesh.node_id(last, mesh.nz // 2)
    return float(mesh.nodes[n, 0] + u[2 * n])


# --------------------------------------------------------------------------
# planning and assessment


@dataclass
class FoldPlan:
    """Start, target and planned touch of one fold (hold-end frame)."""

    length: float
    fold_line: float
    start: tuple
    target: tuple
    planned_touch: float
    state: KinematicState = field(default=None, repr=False)
    record: object = field(default=None, repr=False)


def _friction_options(options):
    opts = options if options is not None else ContinuationOptions()
    return replace(opts, handoff=True)


def planned_touch(scenario, options=None, friction=None):
    """Contact boundary of the folded equilibrium [m, hold-end frame].

    The folded state is reached by tracing the circular path with internal
    friction and then solving once more at the target pose without it.

    Raises
    ------
    PlanningError
        If the folded state cannot be reached or re-solved.
    """
    l, x_f = scenario.length, scenario.x_f
    start, target = fold_target(l, x_f)
    system = scenario.system(scenario.path_from_hold_frame(circular_path(l, x_f)))
    fr = friction if friction is not None else InternalFriction(enabled=True)
    tracer = PathTracer(system, _friction_options(options), fr)
    try:
        rec = tracer.trace()
    except (NonConvergence, ElementInversionError) as exc:
        raise PlanningError(f"folded state not reached: {exc}") from exc
    if not rec.completed:
        raise PlanningError(f"folded state not reached: {rec.message}")
    try:
        res = solve_static(system, KinematicState(rec.final.u), 1.0, tracer.options.newton)
    except NonConvergence as exc:
        raise PlanningError(f"folded state does not re-converge: {exc}") from exc
    x = float(scenario.to_hold_frame(contact_boundary(system, res.state.u, active=res.active)))
    return FoldPlan(l, x_f, start, target, x, res.state, rec)


@dataclass
class AssessmentReport:
    """Outcome of following one folding path.

    ``achieved`` and ``planned`` are touch positions in the hold-end frame;
    ``error = achieved - planned``. ``achieved`` is the contact boundary of
    the lower layer when grasped-side material first lands (or at the end of
    the path if it never does); ``landing_x`` is where that material landed.
    """

    name: str
    planned: float
    achieved: float
    critical_events: int
    completed: bool
    touch_lambda: float = math.nan
    touch_regime: str = ""
    landing_x: float = math.nan
    message: str = ""
    record: object = field(default=None, repr=False)

    @property
    def error(self):
        return self.achieved - self.planned

    def as_dict(self):
        return {
            "name": self.name,
            "planned_touch": self.planned,
            "achieved_touch": self.achieved,
            "error": self.error,
            "critical_events": self.critical_events,
            "completed": self.completed,
            "touch_lambda": self.touch_lambda,
            "touch_regime": self.touch_regime,
            "landing_x": self.landing_x,
            "message": self.message,
        }


class _TouchWatch:
    """Observer catching the first landing of grasped-side material.

    A grasped-side column counts once it has been lifted clear of the
    ground by ``lift`` (default 1 % of l); its first node to touch down
    afterwards is the landing. The flat start therefore never registers.
    """

    def __init__(self, system, x_fold_model, lift=None):
        self.system = system
        mesh = system.mesh
        ground = system.constraints.ground
        self.height = ground.height
        self.lift = 0.01 * mesh.length if lift is None else lift
        cand = np.union1d(mesh.bottom, mesh.top)
        cand = cand[mesh.nodes[cand, 0] > x_fold_model]
        self.candidates = np.setdiff1d(cand, system.constraints.prescribed_nodes())
        self.columns = self.candidates // (mesh.nz + 1)
        self.threshold = 1e-6 * system.total_weight
        self.lifted = np.zeros(mesh.nx + 1, dtype=bool)
        self.hit = None

    def check(self, u, lam, regime):
        if self.hit is not None:
            return
        mesh = self.system.mesh
        f, _, act = self.system.contact(u)
        act = np.asarray(act, dtype=np.int64)
        on = act[(f[2 * act + 1] > self.threshold)]
        landed = np.isin(self.candidates, on) & self.lifted[self.columns]
        if landed.any():
            n = int(self.candidates[landed][0])
            x_node = float(mesh.nodes[n, 0] + u[2 * n])
            self.hit = (lam, regime, contact_boundary(self.system, u), x_node)
            return
        z = mesh.nodes[:, 1] + u[1::2]
        zc = z.reshape(mesh.nx + 1, mesh.nz + 1).min(axis=1)
        self.lifted |= zc > self.height + self.lift

    def __call__(self, sample):
        self.check(sample.u, sample.lam, sample.regime)


def assess_path(scenario, waypoints, name="path", planned=None, options=None, friction=None):
    """Follow ``waypoints`` (hold-end frame) and compare the touch with the plan.

    Parameters
    ----------
    scenario : Scenario
    waypoints : array_like
        ``(lambda, x, z, theta)`` rows in the hold-end frame.
    planned : FoldPlan or float, optional
        Planned touch; computed with :func:`planned_touch` when omitted.
    friction : InternalFriction, optional
        Regularization for the trace; off by default.

    Returns
    -------
    AssessmentReport
    """
    if planned is None:
        planned = planned_touch(scenario, options)
    x_plan = planned.planned_touch if isinstance(planned, FoldPlan) else float(planned)
    system = scenario.system(scenario.path_from_hold_frame(waypoints))
    watch = _TouchWatch(system, float(scenario.to_model(scenario.x_f)))
    tracer = PathTracer(system, _friction_options(options), friction, observer=watch)
    rec = tracer.trace()
    if watch.hit is not None:
        lam, regime, xb, xn = watch.hit
        landing = float(scenario.to_hold_frame(xn))
    else:
        lam, regime, xb = rec.final.lam, "final", contact_boundary(system, rec.final.u)
        landing = math.nan
    return AssessmentReport(
        name=name,
        planned=x_plan,
        achieved=float(scenario.to_hold_frame(xb)),
        critical_events=len(rec.critical_events()),
        completed=rec.completed,
        touch_lambda=float(lam),
        touch_regime=regime,
        landing_x=landing,
        message=rec.message,
        record=rec,
    )


# --------------------------------------------------------------------------
# R-path generator


@dataclass
class RPathOptions:
    """Step sizes and tolerances of the greedy R-path search.

    Attributes
    ----------
    lift_step : float
        Gripper rise per lifting step, as a fraction of l.
    sweep_step : float
        Angle swept about the pivot per step [rad].
    fan : tuple of float
        Radial corrections tried at every sweep step, as fractions of the
        current radius.
    tilt : tuple of float
        Gripper rotations [rad] tried on top of the current tilt; the tilt is
        the gripper angle minus the swept angle.
    max_tilt : float
        Bound on the magnitude of the tilt [rad]. Without it a very flexible
        strip, whose footprint hardly depends on the gripper angle, lets the
        tilt drift through whole turns.
    boundary_tol : float
        Admissible contact-boundary drift, as a fraction of l.
    max_steps : int
        Hard cap on generator steps.
    footprint : {"fold_line", "planned"}
        Contact boundary held during the sweep: the folding line, or the
        planned touch of the folded equilibrium.
    """

    lift_step: float = 0.01
    sweep_step: float = math.pi / 48
    fan: tuple = (0.0, -0.02, 0.02, -0.05, 0.05)
    tilt: tuple = (0.15, -0.15, 0.3, -0.3)
    max_tilt: float = math.pi / 2
    boundary_tol: float = 0.02
    max_steps: int = 400
    footprint: str = "planned"


@dataclass
class RPathResult:
    """Generated waypoints (hold-end frame) and the generator's own record."""

    waypoints: np.ndarray
    boundary: np.ndarray
    mu: np.ndarray
    phase: np.ndarray
    target_boundary: float


class _PoseSolver:
    """Static solves at arbitrary gripper poses with internal friction."""

    def __init__(self, scenario, options, friction):
        from .constraints import GripperPath

        self.scenario = scenario
        self._path = GripperPath
        self.system = scenario.system(scenario.rest_path())
        self.base = self.system.constraints
        self.tracer = PathTracer(self.system, options, friction)

    def solve(self, pose, state, reaction, du_guess):
        x, z, th = pose
        path = self._path(np.array([[0.0, float(self.scenario.to_model(x)), z, th]]))
        self.system.constraints = replace(self.base, path=path)
        return self.tracer.step(state, 0.0, reaction, du_guess)

    def boundary(self, st):
        u = st.result.state.u
        return float(self.scenario.to_hold_frame(contact_boundary(self.system, u, active=st.result.active)))


def r_path(scenario, plan=None, options=None, friction=None, rpath=None, eps_stab=None):
    """Greedy stability-constrained fold that keeps the ground footprint fixed.

    Phase 1 raises the grasped edge straight up, turning it with the chord
    from the target boundary, until the strip lies on the ground only up to
    the planned touch. Phase 2 swings the gripper about that point; at each
    step the radial correction from ``fan`` that best holds the contact
    boundary is taken, provided the smallest eigenvalue stays above
    ``eps_stab`` times its initial value. A last segment moves the gripper
    onto the target pose.

    Returns
    -------
    RPathResult

    Raises
    ------
    GeneratorStuckError
        If no candidate step converges with a stable state.
    """
    opts = options if options is not None else ContinuationOptions()
    ropts = rpath if rpath is not None else RPathOptions()
    fr = friction if friction is not None else InternalFriction(enabled=True)
    eps = opts.eps_stab if eps_stab is None else eps_stab
    if plan is None:
        plan = planned_touch(scenario, opts)
    l = scenario.length
    if ropts.footprint == "fold_line":
        x_m = scenario.x_f
    elif ropts.footprint == "planned":
        x_m = plan.planned_touch
    else:
        raise ValueError(f"unknown footprint {ropts.footprint!r}")
    target = plan.target
    tol = ropts.boundary_tol * l
    solver = _PoseSolver(scenario, opts, fr)

    first = solver.solve((l, 0.0, 0.0), KinematicState.zeros(solver.system.mesh), None, None)
    mu0 = first.mu
    if not mu0 > 0:
        raise GeneratorStuckError("initial state is not stable", first.result.state, (l, 0.0, 0.0))
    poses = [(l, 0.0, 0.0)]
    bounds, mus, phases = [solver.boundary(first)], [mu0], [1]
    state, reaction, du = first.result.state, first.result.reaction, None

    def accept(pose, st, phase):
        nonlocal state, reaction, du
        du = st.result.state.u - state.u
        state, reaction = st.result.state, st.result.reaction
        poses.append(tuple(float(v) for v in pose))
        bounds.append(solver.boundary(st))
        mus.append(st.mu)
        phases.append(phase)

    def attempt(pose):
        try:
            st = solver.solve(pose, state, reaction, du)
        except (NonConvergence, ElementInversionError):
            return None
        return st if st.mu > eps * mu0 else None

    # phase 1: lift until the footprint has shrunk to the planned touch
    dz = ropts.lift_step * l
    z = 0.0
    steps = 0
    while bounds[-1] > x_m + 0.5 * tol:
        steps += 1
        if steps > ropts.max_steps:
            raise GeneratorStuckError("lifting did not expose the planned footprint", state, poses[-1])
        h = dz
        while True:
            pose = (l, z + h, math.atan2(z + h, l - x_m))
            st = attempt(pose)
            if st is not None and solver.boundary(st) >= x_m - 0.5 * tol:
                break
            h *= 0.5
            if h < 1e-3 * dz:
                raise GeneratorStuckError("no stable lifting step", state, poses[-1])
        z += h
        accept(pose, st, 1)

    # phase 2: swing about the footprint end keeping the boundary in place
    px = x_m
    x, z, th = poses[-1]
    R = math.hypot(x - px, z)
    phi = math.atan2(z, x - px)
    tilt = th - phi
    candidates = [(f, 0.0) for f in ropts.fan] + [(0.0, t) for t in ropts.tilt if t != 0.0]
    while phi < math.pi - 1e-12:
        steps += 1
        if steps > ropts.max_steps:
            raise GeneratorStuckError("sweep did not reach the target", state, poses[-1])
        d = min(ropts.sweep_step, math.pi - phi)
        ph = phi + d
        best = None
        for f, t in candidates:
            if abs(tilt + t) > ropts.max_tilt:
                continue
            r = R * (1.0 + f)
            pose = (px + r * math.cos(ph), max(r * math.sin(ph), 0.0), ph + tilt + t)
            st = attempt(pose)
            if st is None:
                continue
            err = abs(solver.boundary(st) - x_m)
            # within tolerance, the least tilted candidate wins; outside it, the smallest error
            key = (0, abs(tilt + t), err) if err <= tol else (1, err, abs(tilt + t))
            if best is None or key < best[0]:
                best = (key, pose, st, r, tilt + t)
            if err <= 0.25 * tol and f == 0.0 and t == 0.0:
                break
        if best is None:
            if d > ropts.sweep_step / 16:
                ropts = replace(ropts, sweep_step=0.5 * ropts.sweep_step)
                continue
            raise GeneratorStuckError("no stable sweep step", state, poses[-1])
        _, pose, st, R, tilt = best
        phi = ph
        accept(pose, st, 2)

    # final placement on the target pose, in small straight moves
    start = np.array(poses[-1])
    goal = np.array(target, dtype=float)
    gap = max(np.hypot(*(goal[:2] - start[:2])) / (ropts.lift_step * l), abs(goal[2] - start[2]) / ropts.sweep_step)
    n = int(math.ceil(gap))
    for k in range(1, n + 1):
        pose = tuple(start + (goal - start) * (k / n))
        st = attempt(pose)
        if st is None:
            raise GeneratorStuckError("final placement is not stable", state, poses[-1])
        accept(pose, st, 3)

    P = np.array(poses)
    seg = np.hypot(np.diff(P[:, 0]), np.diff(P[:, 1])) + np.abs(np.diff(P[:, 2])) * 1e-3 * l
    lam = np.concatenate([[0.0], np.cumsum(seg)]) / seg.sum()
    lam[-1] = 1.0
    W = np.column_stack([lam, P])
    return RPathResult(W, np.array(bounds), np.array(mus), np.array(phases), x_m)
