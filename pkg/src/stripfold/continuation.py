"""Equilibrium path tracing with critical-point handling.

A path is traced by stepping the control parameter and warm-starting each
static solve from the previous equilibrium. The smallest eigenvalue of the
reduced tangent is monitored at every step. When a critical point is met the
tracer either hands over to the dynamic solver and resumes static stepping
from the settled state, or, with internal friction enabled, keeps going with
the pseudo-viscous pull towards the previous state.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import math

import numpy as np

from .fem import ElementInversionError, KinematicState
from .solvers import (
    DynamicOptions,
    EigenSolverError,
    NewtonOptions,
    NonConvergence,
    SettleTimeout,
    integrate_dynamic,
    smallest_eigenvalue,
    solve_static,
)

log = logging.getLogger(__name__)


class BracketError(ValueError):
    """The bracket passed to the critical-point localizer is not a bracket."""


class InitialInstabilityError(RuntimeError):
    """The state at the start of a path is not statically stable."""


@dataclass
class InternalFriction:
    """Pseudo-viscous pull ``f = -c (u - u_prev)`` towards the previous state.

    With ``coefficient=None`` the coefficient is chosen every step so the pull
    is about ``scale`` times the gripper reaction; a step whose pull exceeds
    ``cap`` times the reaction is re-solved with a smaller coefficient.
    """

    enabled: bool = False
    coefficient: float = None
    scale: float = 1e-3
    cap: float = 1e-2

    def __post_init__(self):
        if self.coefficient is not None and self.coefficient < 0:
            raise ValueError("friction coefficient must be non-negative")
        if not 0 < self.scale < self.cap:
            raise ValueError("need 0 < scale < cap")


@dataclass
class ContinuationOptions:
    """Step control and critical-point settings of the tracer.

    ``bracket_tol`` is the gripper travel [m] within which critical points
    are bracketed; ``None`` means ``1e-3`` times the strip length.
    """

    step: float = 0.01
    min_step: float = 1e-4
    eps_stab: float = 1e-6
    failure_ratio: float = 1e-3
    jump_tol: float = 0.01
    jump_ratio: float = 4.0
    fold_window: float = 5.0
    bracket_tol: float = None
    handoff: bool = True
    max_handoffs: int = 10
    kick: float = 1e-3
    eigen_shift_tries: int = 40
    newton: NewtonOptions = field(default_factory=NewtonOptions)
    dynamic: DynamicOptions = field(default_factory=DynamicOptions)

    def __post_init__(self):
        if not 0 < self.min_step <= self.step <= 1:
            raise ValueError("need 0 < min_step <= step <= 1")
        if not self.eps_stab > 0:
            raise ValueError("eps_stab must be positive")


@dataclass
class Sample:
    """One recorded state along a path."""

    lam: float
    u: np.ndarray = field(repr=False)
    mu_min: float
    reaction: np.ndarray
    deflection: float
    regime: str = "static"
    time: float = 0.0
    friction_force: float = 0.0
    active: np.ndarray = field(default=None, repr=False)


@dataclass
class Event:
    kind: str
    lam: float
    data: dict = field(default_factory=dict)


@dataclass
class EquilibriumRecord:
    """Samples and events of one traced path."""

    samples: list = field(default_factory=list)
    events: list = field(default_factory=list)
    completed: bool = False
    message: str = ""
    mu0: float = math.nan
    trajectories: list = field(default_factory=list, repr=False)

    def static_samples(self):
        return [s for s in self.samples if s.regime == "static"]

    def critical_events(self):
        return [e for e in self.events if e.kind == "critical_point"]

    def event_kinds(self):
        return [e.kind for e in self.events]

    @property
    def lambdas(self):
        return np.array([s.lam for s in self.samples])

    @property
    def mu(self):
        return np.array([s.mu_min for s in self.samples])

    @property
    def final(self):
        return self.samples[-1]


def deflection(system, u):
    """Displacement norm of the mid-surface material midpoint."""
    n = system.mesh.midpoint
    return float(np.hypot(u[2 * n], u[2 * n + 1]))


def contact_force_on(system, u, active):
    """Normal contact force of every active node (same order as ``active``)."""
    f, _, _ = system.contact(u, active)
    return f[2 * np.asarray(active, dtype=np.int64) + 1]


# --------------------------------------------------------------------------
# critical point localization


def locate_critical_point(probe, lam_ok, lam_fail, tol, max_iter=200):
    """Bisect a stability bracket down to width ``tol``.

    Parameters
    ----------
    probe : callable
        ``probe(lam) -> (stable, payload)``; ``stable`` is True when a
        statically stable equilibrium is found near the last stable one.
    lam_ok, lam_fail : float
        Bracket ends; the probe must succeed at ``lam_ok`` and fail at
        ``lam_fail``.
    tol : float
        Final bracket width.

    Returns
    -------
    lam_c : float
        Midpoint of the final bracket.
    bracket : tuple
        ``(lam_ok, lam_fail)`` after bisection.
    payload : object
        Probe payload at the final ``lam_ok``.

    Raises
    ------
    BracketError
        If both ends are stable or both ends fail.
    """
    ok_lo, pay_lo = probe(lam_ok)
    ok_hi, _ = probe(lam_fail)
    if ok_lo == ok_hi:
        state = "stable" if ok_lo else "unstable"
        raise BracketError(f"both bracket ends are {state}")
    if not ok_lo:
        raise BracketError("the stable end of the bracket must come first")
    it = 0
    while abs(lam_fail - lam_ok) > tol and it < max_iter:
        mid = 0.5 * (lam_ok + lam_fail)
        ok, pay = probe(mid)
        if ok:
            lam_ok, pay_lo = mid, pay
        else:
            lam_fail = mid
        it += 1
    return 0.5 * (lam_ok + lam_fail), (lam_ok, lam_fail), pay_lo


# --------------------------------------------------------------------------
# tracer


@dataclass
class _Step:
    result: object
    mu: float
    mode: np.ndarray
    friction: float
    jump: float


class PathTracer:
    """Static continuation of one :class:`~stripfold.system.StripSystem`."""

    def __init__(self, system, options=None, friction=None, observer=None):
        self.system = system
        self.options = options or ContinuationOptions()
        self.friction = friction or InternalFriction()
        self.observer = observer
        l = system.mesh.length
        path = system.constraints.path
        self.travel = path.travel if path is not None else 0.0
        btol = self.options.bracket_tol if self.options.bracket_tol is not None else 1e-3 * l
        self.lam_tol = btol / self.travel if self.travel > 0 else self.options.min_step
        self.weight = system.total_weight

    # -- single static step -------------------------------------------------

    def _eigen(self, res):
        try:
            ev = smallest_eigenvalue(res.K_free, self.options.eigen_shift_tries)
        except EigenSolverError:
            return -math.inf, None
        return ev.mu_min, ev.mode

    def _friction_coefficient(self, reaction, du_guess):
        fr = self.friction
        if not fr.enabled:
            return 0.0
        if fr.coefficient is not None:
            return fr.coefficient
        n = float(np.linalg.norm(du_guess))
        r = float(np.linalg.norm(reaction))
        if n == 0 or r == 0:
            return 0.0
        return fr.scale * r / n

    def solve_at(self, state, lam, c=0.0):
        """Static solve at ``lam`` warm-started from ``state``; ``c`` pulls towards it."""
        friction = (c, state.u) if c else None
        return solve_static(self.system, state, lam, self.options.newton, friction=friction)

    def step(self, state, lam, reaction=None, du_guess=None):
        """Try one continuation step; return a :class:`_Step` or raise."""
        c = self._friction_coefficient(reaction if reaction is not None else 0.0, du_guess if du_guess is not None else 0.0)
        for _ in range(6):
            res = self.solve_at(state, lam, c)
            du = res.state.u - state.u
            f_if = c * float(np.linalg.norm(du))
            r = float(np.linalg.norm(res.reaction))
            if not c or f_if <= self.friction.cap * r:
                break
            c *= 0.5 * self.friction.cap * r / f_if
        else:
            raise NonConvergence("internal friction could not be kept below its cap", res.state)
        jump = float(np.max(np.abs(du))) if du.size else 0.0
        mu, mode = self._eigen(res)
        return _Step(res, mu, mode, f_if, jump)

    def _sample(self, res, lam, mu, f_if=0.0):
        u = res.state.u
        return Sample(
            lam=float(lam),
            u=u.copy(),
            mu_min=float(mu),
            reaction=np.array(res.reaction, dtype=float),
            deflection=deflection(self.system, u),
            friction_force=float(f_if),
            active=np.array(res.active),
        )

    # -- stability classification --------------------------------------------

    def contact_release_eigenvalue(self, state, lam, active):
        """Smallest eigenvalue with the most lightly loaded contact released.

        A contact whose force has dropped to zero no longer stabilizes the
        strip; if the tangent without it is indefinite the equilibrium ends
        there even though the tangent with the contact is positive definite.
        """
        if len(active) == 0:
            return math.inf, None, None
        f = contact_force_on(self.system, state.u, active)
        k = int(np.argmin(f))
        keep = np.delete(np.asarray(active), k)
        r, K, _ = self.system.evaluate(state.u, active=keep)
        fixed, _ = self.system.prescribed(lam)
        free = self.system.free_dofs(fixed)
        try:
            ev = smallest_eigenvalue(K.tocsr()[free][:, free])
        except EigenSolverError:
            return -math.inf, None, int(active[k])
        mode = np.zeros(self.system.mesh.n_dofs)
        mode[free] = ev.mode
        return ev.mu_min, mode, int(active[k])

    def _is_jump(self, st, dl):
        """A converged step that moved far more than the recent path rate predicts."""
        opts = self.options
        limit = max(opts.jump_tol * self.system.mesh.length, opts.jump_ratio * self._rate * abs(dl))
        return st.jump > limit

    def _accepts(self, st, mu0, dl):
        return st.mu > self.options.eps_stab * mu0 and not self._is_jump(st, dl)

    # -- main loop -------------------------------------------------------------

    def trace(self, initial=None):
        opts = self.options
        sysm = self.system
        rec = EquilibriumRecord()
        state = initial if initial is not None else KinematicState.zeros(sysm.mesh)
        res0 = solve_static(sysm, state, 0.0, opts.newton)
        mu0, _ = self._eigen(res0)
        rec.mu0 = mu0
        if not mu0 > 0:
            raise InitialInstabilityError(f"initial state is not stable (mu_min = {mu0:.3e})")
        rec.samples.append(self._sample(res0, 0.0, mu0))
        self._notify(rec.samples[-1])
        path = sysm.constraints.path
        if path is None or path.is_static:
            rec.completed = True
            return rec

        lam, state = 0.0, res0.state
        reaction = res0.reaction
        self._rate = 0.0
        du_prev, dl_prev = None, None
        h = opts.step
        handoffs = 0
        while lam < 1.0:
            nl = min(1.0, lam + h)
            guess = None if du_prev is None else du_prev * ((nl - lam) / dl_prev)
            try:
                st = self.step(state, nl, reaction, guess)
                ok = self._accepts(st, mu0, nl - lam)
                failure = None
            except (NonConvergence, ElementInversionError) as exc:
                st, ok, failure = None, False, exc
            if ok:
                du_prev, dl_prev = st.result.state.u - state.u, nl - lam
                self._rate = st.jump / dl_prev
                lam, state, reaction = nl, st.result.state, st.result.reaction
                rec.samples.append(self._sample(st.result, nl, st.mu, st.friction))
                self._notify(rec.samples[-1])
                h = min(opts.step, 2 * h)
                continue
            crossing = st is not None and st.mu <= opts.eps_stab * mu0
            if not crossing and h > opts.min_step * (1 + 1e-9):
                h = max(opts.min_step, h / 2)
                continue
            # a bracket [lam, nl] of width <= min_step, or an eigenvalue crossing
            kind = self._classify(rec, state, lam, nl, st, failure, mu0)
            if kind is None:
                rec.message = f"solver failure at lambda={nl:.6g}: {failure}"
                rec.events.append(Event("solver_failure", nl, {"message": str(failure)}))
                return rec
            ev = self._localize(rec, state, lam, nl, reaction, mu0, kind, st)
            if not opts.handoff:
                rec.message = "stopped at critical point"
                return rec
            handoffs += 1
            if handoffs > opts.max_handoffs:
                rec.message = "too many dynamic handoffs"
                return rec
            try:
                state, lam, reaction = self._handoff(rec, ev)
            except (SettleTimeout, NonConvergence, ElementInversionError) as exc:
                rec.message = f"dynamic handoff failed: {exc}"
                rec.events.append(Event("solver_failure", ev.data["lambda_fail"], {"message": str(exc)}))
                return rec
            du_prev, dl_prev = None, None
            self._rate = 0.0
            h = opts.step
        rec.completed = True
        return rec

    def _notify(self, sample):
        if self.observer is not None:
            self.observer(sample)

    def _classify(self, rec, state, lam, nl, st, failure, mu0):
        """Return the critical-point kind, or None for a plain numerical failure.

        ``eigenvalue``: the smallest eigenvalue dropped below ``eps_stab``
        times its initial value. ``limit``: the step failed or jumped right
        after an eigenvalue below ``failure_ratio`` times the initial one.
        ``contact_release``: Newton failed and the tangent with the most
        lightly loaded contact released is indefinite. ``jump``: the solve
        converged to a distant state however small the step.
        """
        opts = self.options
        last_mu = rec.samples[-1].mu_min
        if st is not None and st.mu <= opts.eps_stab * mu0:
            return "eigenvalue"
        if last_mu < opts.failure_ratio * mu0 or self._fold_ahead(rec, nl):
            return "limit"
        if st is not None:
            return "jump"
        active = rec.samples[-1].active
        mu_rel, _, _ = self.contact_release_eigenvalue(state, lam, active)
        if mu_rel <= opts.eps_stab * mu0:
            return "contact_release"
        return None

    def _fold_ahead(self, rec, lam_fail):
        """True when the falling eigenvalue extrapolates to zero just past ``lam_fail``.

        Near a fold the smallest eigenvalue vanishes like a square root, so
        Newton gives up well before it drops below ``failure_ratio * mu0``.
        A linear extrapolation of the last three static samples, which
        overestimates the distance to the zero, is accepted when it lands
        within ``fold_window`` steps of the smallest size.
        """
        static = [s for s in rec.samples[-3:] if s.regime == "static"]
        if len(static) < 3:
            return False
        lam = np.array([s.lam for s in static])
        mu = np.array([s.mu_min for s in static])
        if not (np.all(np.diff(mu) < 0) and np.all(mu > 0)):
            return False
        slope = (mu[-1] - mu[-2]) / (lam[-1] - lam[-2])
        lam_zero = lam[-1] - mu[-1] / slope
        return lam_zero <= lam_fail + self.options.fold_window * self.options.min_step

    def _probe_factory(self, start, lam0, mu0, known=None):
        cache = dict(known or {})

        def probe(lam):
            if lam == lam0:
                return True, None
            if lam in cache:
                return cache[lam]
            try:
                st = self.step(start, lam)
            except (NonConvergence, ElementInversionError):
                return False, None
            return self._accepts(st, mu0, lam - lam0), st

        return probe

    def _localize(self, rec, state, lam, nl, reaction, mu0, kind, st_fail=None):
        known = {nl: (False, st_fail)}
        probe = self._probe_factory(state, lam, mu0, known)
        try:
            lam_c, (lo, hi), st = locate_critical_point(probe, lam, nl, self.lam_tol)
        except BracketError:
            lam_c, lo, hi, st = 0.5 * (lam + nl), lam, nl, None
        if st is None:
            # the stable end never moved: re-solve it for the mode
            st = self.step(state, lo)
        if st is not None:
            last, mu_last, mode = st.result.state, st.mu, st.mode
            if kind == "contact_release":
                _, mode_rel, _ = self.contact_release_eigenvalue(last, lo, st.result.active)
                mode_full = mode_rel
            else:
                mode_full = self._full_mode(mode, lo)
            active = st.result.active
        else:
            last, mu_last = state, rec.samples[-1].mu_min
            mode_full = None
            active = rec.samples[-1].active
        ev = Event(
            "critical_point",
            float(lam_c),
            {
                "kind": kind,
                "lambda_ok": float(lo),
                "lambda_fail": float(hi),
                "mu_min": float(mu_last),
                "pose": list(self.system.constraints.pose(lam_c)) if self.system.constraints.path is not None else None,
            },
        )
        ev.state = last
        ev.mode = mode_full
        ev.active = active
        rec.events.append(ev)
        log.info("critical point (%s) at lambda=%.6g", kind, lam_c)
        return ev

    def _full_mode(self, mode, lam):
        if mode is None:
            return None
        fixed, _ = self.system.prescribed(lam)
        free = self.system.free_dofs(fixed)
        out = np.zeros(self.system.mesh.n_dofs)
        out[free] = mode
        return out

    def kicked_state(self, state, mode, amplitude, lam):
        """State displaced by ``amplitude`` along ``mode``; the sign lowers the energy."""
        if mode is None or amplitude == 0:
            return state.copy()
        m = mode / np.max(np.abs(mode))
        best = None
        for sgn in (1.0, -1.0):
            u = state.u + sgn * amplitude * m
            try:
                e = self.system.potential_energy(u)
            except ElementInversionError:
                continue
            if best is None or e < best[0]:
                best = (e, u)
        if best is None:
            return state.copy()
        return KinematicState(best[1])

    def _handoff(self, rec, ev):
        """Dynamic segment at the failing end of the bracket, then static re-solve."""
        opts = self.options
        sysm = self.system
        lam_d = ev.data["lambda_fail"]
        start = self.kicked_state(ev.state, ev.mode, opts.kick * sysm.mesh.length, lam_d)
        touches = []
        before = set(np.asarray(ev.active).tolist())
        touched = set(before)
        w_thr = 1e-6 * self.weight
        nodes = sysm.mesh.nodes

        def observer(step, t, u, v, active):
            if len(active) == 0:
                return
            f = contact_force_on(sysm, u, active)
            new = [int(n) for n, fn in zip(active, f) if fn > w_thr and int(n) not in touched]
            for n in new:
                j = n % (sysm.mesh.nz + 1)
                i = n // (sysm.mesh.nz + 1)
                neighbours = {sysm.mesh.node_id(i + d, j) for d in (-1, 1) if 0 <= i + d <= sysm.mesh.nx}
                if not neighbours & touched:
                    x = float(nodes[n, 0] + u[2 * n])
                    touches.append((t, n, x))
                touched.add(n)

        dyn = integrate_dynamic(sysm, start, lam_d, opts.dynamic, opts.newton, observer=observer, require_departure=True)
        rec.trajectories.append(dyn)
        for t, u in zip(dyn.times, dyn.states):
            s = Sample(
                lam=float(lam_d),
                u=u.copy(),
                mu_min=math.nan,
                reaction=np.full(2, np.nan),
                deflection=deflection(sysm, u),
                regime="dynamic",
                time=float(t),
            )
            rec.samples.append(s)
            self._notify(s)
        rec.events.append(
            Event(
                "dynamic_segment",
                float(lam_d),
                {"trajectory": len(rec.trajectories) - 1, "duration": float(dyn.time), "steps": int(dyn.steps)},
            )
        )
        for t, n, x in touches:
            rec.events.append(Event("ground_touch", float(lam_d), {"node": n, "x": x, "time": float(t)}))
        settled = KinematicState(dyn.final.u)
        res = solve_static(sysm, settled, lam_d, opts.newton)
        mu, _ = self._eigen(res)
        s = self._sample(res, lam_d, mu)
        s.regime = "static"
        rec.samples.append(s)
        self._notify(s)
        rec.events.append(
            Event(
                "static_resume",
                float(lam_d),
                {
                    "mu_min": float(mu),
                    "distance": float(np.max(np.abs(res.state.u - settled.u))),
                },
            )
        )
        return res.state, lam_d, res.reaction


def trace_path(system, options=None, friction=None, observer=None, initial=None):
    """Trace the equilibrium path of ``system`` over its gripper path."""
    return PathTracer(system, options, friction, observer).trace(initial)


def perturb_and_branch(system, state, lam, mode, amplitude, dynamic=None, newton=None):
    """Settle the dynamics from ``state +/- amplitude * mode`` at frozen ``lam``.

    ``mode`` is scaled to unit max-norm so ``amplitude`` is a nodal
    displacement [m]. Returns the two settled states, plus first.
    """
    out = []
    m = np.zeros_like(state.u) if mode is None else mode / max(np.max(np.abs(mode)), 1e-300)
    for sgn in (1.0, -1.0):
        start = KinematicState(state.u + sgn * amplitude * m)
        dyn = integrate_dynamic(system, start, lam, dynamic, newton, require_departure=amplitude > 0)
        res = solve_static(system, KinematicState(dyn.final.u), lam, newton)
        out.append(res.state)
    return tuple(out)


# --------------------------------------------------------------------------
# sweeps


@dataclass
class SweepRow:
    """One grid cell of a critical sweep.

    ``lambda_c`` is the critical control value expressed as the gripper x
    [m, hold-end frame]; ``lam`` is the raw path parameter.
    """

    eta_b: float
    z: float
    lambda_c: float
    status: str
    lam: float = math.nan


def _sweep_cell(args):
    prepare, eta_b, z, options = args
    opts = replace(options or ContinuationOptions(), handoff=False)
    try:
        system, initial, to_x = prepare(eta_b, z)
    except Exception as exc:  # per-cell failures never abort the sweep
        return SweepRow(eta_b, z, math.nan, f"prepare_failed: {exc}")
    try:
        rec = trace_path(system, opts, initial=initial)
    except Exception as exc:
        return SweepRow(eta_b, z, math.nan, f"error: {type(exc).__name__}: {exc}")
    crit = rec.critical_events()
    if crit:
        lam_c = float(crit[0].lam)
        return SweepRow(eta_b, z, float(to_x(lam_c)), "ok", lam_c)
    if rec.completed:
        return SweepRow(eta_b, z, math.nan, "stable")
    return SweepRow(eta_b, z, math.nan, "failed: " + rec.message)


def critical_sweep(prepare, heights, eta_bs, options=None, workers=1):
    """Critical gripper positions over a grid of heights and bending ratios.

    Parameters
    ----------
    prepare : callable
        ``prepare(eta_b, z) -> (system, initial_state, to_x)`` builds one
        cell; ``to_x`` maps the path parameter to the reported gripper x.
        It must be picklable when ``workers > 1``.
    heights, eta_bs : sequence of float
        Grid values.

    Returns
    -------
    list of SweepRow
        Ordered by ``(eta_b, z)`` whatever the number of workers.
    """
    cells = [(prepare, float(e), float(z), options) for e in eta_bs for z in heights]
    if not cells:
        raise ValueError("empty sweep grid")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    return sorted(rows, key=lambda r: (r.eta_b, r.z))
