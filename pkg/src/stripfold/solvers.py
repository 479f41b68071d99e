"""Static Newton-Raphson solver, smallest-eigenvalue monitor and Newmark integrator."""
from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constraints import apply_dirichlet
from .fem import ElementInversionError, KinematicState

log = logging.getLogger(__name__)


class NonConvergence(RuntimeError):
    """Newton iteration failed; carries the best iterate found."""

    def __init__(self, message, best_state=None, residual_norms=()):
        super().__init__(message)
        self.best_state = best_state
        self.residual_norms = list(residual_norms)


class EigenSolverError(RuntimeError):
    pass


class SettleTimeout(RuntimeError):
    """Dynamic run ended without settling; the trajectory is attached."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


@dataclass
class NewtonOptions:
    max_iterations: int = 50
    tolerance: float = None  # absolute [N]; None -> relative_tolerance * total weight
    relative_tolerance: float = 1e-8
    backtrack: float = 0.5
    max_backtracks: int = 10
    max_contact_rounds: int = 25
    gate_factor: float = 1e3
    free_contact_updates: int = 5

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.tolerance is not None and not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not self.relative_tolerance > 0:
            raise ValueError("relative_tolerance must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")

    def absolute_tolerance(self, system):
        if self.tolerance is not None:
            return self.tolerance
        w = system.total_weight
        if w == 0:
            w = system.energy_scale / system.mesh.length
        return self.relative_tolerance * w


@dataclass
class DynamicOptions:
    dt: float = 4e-3
    beta: float = 0.49
    gamma: float = 0.9
    alpha_m: float = 2.0
    settle_energy: float = 1e-6
    settle_steps: int = 20
    max_steps: int = 20000
    min_steps: int = 0
    sample_every: int = 10
    max_substeps: int = 6
    departure_patience: int = 2000
    departure_distance: float = 1e-2  # fraction of the strip length

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.beta < 0.25 or self.gamma < 0.5:
            raise ValueError("Newmark parameters must satisfy beta >= 1/4 and gamma >= 1/2")
        if not self.settle_energy > 0:
            raise ValueError("settle_energy must be positive")
        if self.alpha_m < 0:
            raise ValueError("alpha_m must be non-negative")


@dataclass
class StaticResult:
    state: KinematicState
    iterations: int
    residual_norms: list
    reaction: np.ndarray
    hold_reaction: np.ndarray
    active: np.ndarray
    residual: np.ndarray
    K_free: sp.csr_matrix = field(repr=False, default=None)
    free: np.ndarray = field(repr=False, default=None)


@dataclass
class EigenReport:
    mu_min: float
    mode: np.ndarray
    iterations: int
    shift: float = 0.0


# --------------------------------------------------------------------------
# Newton


def _solve(K, b):
    return spla.spsolve(K.tocsc(), b)


def newton(system, u0, fixed, values, options, friction=None, extra=None):
    """Newton-Raphson on the free DOFs with convergence-gated contact active sets.

    While the residual is above ``gate_factor`` times the tolerance the active
    set follows the penetrating nodes after every iteration; below it the set
    is frozen. At convergence the set is accepted only if no active node pulls
    the strip down and no inactive node penetrates by more than the residual
    tolerance; otherwise it is updated and the iteration continues.
    ``extra(u, tangent) -> (r_add, K_add)`` adds terms such as inertia.
    """
    tol = options.absolute_tolerance(system)
    gate = options.gate_factor * tol
    u = np.array(u0, dtype=float)
    free = system.free_dofs(fixed)

    def evaluate(u, active, tangent=True):
        r, K, act = system.evaluate(u, active=active, friction=friction, tangent=tangent)
        if extra is not None:
            r_add, K_add = extra(u, tangent)
            r = r + r_add
            if tangent:
                K = K + K_add
        return r, K, act

    has_ground = system.constraints.ground is not None
    du_p = values - u[fixed]
    if np.any(du_p != 0):
        # tangent predictor: carry the prescribed increment into the free DOFs
        r, K, _ = evaluate(u, None)
        K = K.tocsr()
        rhs = -(r[free] + K[free][:, fixed] @ du_p)
        try:
            du_f = _solve(K[free][:, free], rhs)
        except RuntimeError:
            du_f = np.zeros(len(free))
        if not np.all(np.isfinite(du_f)):
            du_f = np.zeros(len(free))
        u[fixed] = values
        # keep only as much of the free-DOF predictor as is admissible
        for alpha in (1.0, 0.5, 0.25, 0.0):
            trial = u.copy()
            trial[free] += alpha * du_f
            try:
                system.evaluate(trial, tangent=False)
            except ElementInversionError:
                continue
            u = trial
            break
        else:
            raise NonConvergence("prescribed increment inverts elements", KinematicState(u0), [])
    else:
        u[fixed] = values
    # nodes resting exactly on the plane start active so a strip lying on the
    # ground is supported from the first iteration
    active = system.touching(u, tol=1e-12 * system.mesh.length)
    norms = []
    rounds = 0
    its = 0
    best = (np.inf, u.copy())

    def fail(msg):
        return NonConvergence(msg, best_state=KinematicState(best[1]), residual_norms=norms)

    while True:
        r, K, _ = evaluate(u, active)
        norm = float(np.linalg.norm(r[free]))
        norms.append(norm)
        if norm < best[0]:
            best = (norm, u.copy())
        if not np.isfinite(norm):
            raise fail("non-finite residual")
        if norm <= tol:
            if not has_ground:
                break
            fc, _, pen = system.contact(u)
            f_frozen, _, _ = system.contact(u, active)
            fa = f_frozen[2 * active + 1]
            inactive = np.setdiff1d(pen, active)
            fi = fc[2 * inactive + 1]
            tensile = fa < -tol
            missing = fi > tol
            if not tensile.any() and not missing.any():
                break
            rounds += 1
            log.debug("contact round %d: %d tensile, %d missing, set size %d", rounds, tensile.sum(), missing.sum(), len(active))
            if rounds > options.max_contact_rounds:
                raise fail("contact active set did not stabilize")
            if rounds > 2:
                # one node at a time once the plain update starts to cycle
                tensile = np.zeros_like(tensile)
                missing = np.zeros_like(missing)
                if len(fa) and fa.min() < -tol:
                    tensile[np.argmin(fa)] = True
                else:
                    missing[np.argmax(fi)] = True
            active = np.union1d(active[~tensile], inactive[missing])
            continue
        if its >= options.max_iterations:
            raise fail(f"Newton did not converge (last residual {norm:.3e} N, tolerance {tol:.3e} N)")
        red = apply_dirichlet(K, r, fixed)
        try:
            du_f = _solve(red.K, -red.r)
        except RuntimeError as exc:
            raise fail(f"singular tangent: {exc}") from exc
        if not np.all(np.isfinite(du_f)):
            raise fail("singular tangent")
        its += 1
        alpha = 1.0
        for _ in range(options.max_backtracks + 1):
            trial = u.copy()
            trial[free] += alpha * du_f
            try:
                rt, _, _ = evaluate(trial, active, tangent=False)
            except ElementInversionError:
                alpha *= options.backtrack
                continue
            tnorm = float(np.linalg.norm(rt[free]))
            if np.isfinite(tnorm) and tnorm < norm:
                break
            alpha *= options.backtrack
        else:
            if not np.isfinite(tnorm):
                raise fail("line search failed")
            # accept the full step if nothing decreases the residual
            trial = u.copy()
            trial[free] += du_f
            try:
                evaluate(trial, active, tangent=False)
            except ElementInversionError:
                raise fail("line search failed: every trial step inverts elements") from None
        u = trial
        if has_ground and norm > gate:
            pen = system.contact(u)[2]
            # after a few free updates only add nodes, which breaks the
            # enter/leave cycles of grazing nodes; releases happen at the
            # consistency check below
            active = pen if its < options.free_contact_updates else np.union1d(active, pen)
    return u, active, norms, its, free


def solve_static(system, state_guess, lam, options=None, friction=None):
    """Static equilibrium at control parameter ``lam``.

    Raises
    ------
    NonConvergence
        With the best iterate attached; near a critical point this is the
        expected signal that no nearby equilibrium exists.
    ElementInversionError
        If the converged or initial state has inverted elements.
    """
    options = options or NewtonOptions()
    fixed, values = system.prescribed(lam)
    u0 = state_guess.u if isinstance(state_guess, KinematicState) else np.asarray(state_guess)
    u, active, norms, its, free = newton(system, u0, fixed, values, options, friction=friction)
    r, K, _ = system.evaluate(u, active=active, friction=friction)
    reac = system.reactions(r)
    red = apply_dirichlet(K, r, fixed)
    return StaticResult(
        state=KinematicState(u, tag=lam),
        iterations=its,
        residual_norms=norms,
        reaction=reac["grasp"],
        hold_reaction=reac["hold"],
        active=active,
        residual=r,
        K_free=red.K,
        free=free,
    )


# --------------------------------------------------------------------------
# eigenvalues


def _to_banded(K):
    """Upper banded storage of a symmetric matrix for ``cholesky_banded``."""
    K = sp.coo_matrix(K)
    mask = K.col >= K.row
    rows, cols, data = K.row[mask], K.col[mask], K.data[mask]
    bw = int(np.max(cols - rows)) if len(rows) else 0
    n = K.shape[0]
    ab = np.zeros((bw + 1, n))
    np.add.at(ab, (bw + rows - cols, cols), data)
    return ab


def _shifted(ab, sigma):
    out = ab.copy()
    out[-1] -= sigma
    return out


def smallest_eigenvalue(K, max_shift_tries=40, k=2, tol=0.0):
    """Smallest algebraic eigenpair of a symmetric matrix by shift-invert Lanczos.

    The shift is moved downwards until ``K - sigma I`` admits a banded
    Cholesky factorization, so every eigenvalue lies above it and the
    eigenvalue nearest the shift is the smallest one.
    """
    if sp.issparse(K):
        K = K.tocsr()
    else:
        K = sp.csr_matrix(np.asarray(K, dtype=float))
    n = K.shape[0]
    if n == 0:
        raise EigenSolverError("empty matrix")
    ab = _to_banded(K)
    scale = float(np.max(np.abs(ab[-1]))) or 1.0
    if n <= 3:
        w, V = np.linalg.eigh(K.toarray())
        return EigenReport(mu_min=float(w[0]), mode=V[:, 0] / np.linalg.norm(V[:, 0]), iterations=1)
    step = 1e-10 * scale
    factor = None
    sigma = 0.0
    for _ in range(max_shift_tries):
        sigma = -step
        try:
            factor = sla.cholesky_banded(_shifted(ab, sigma), lower=False, check_finite=False)
            break
        except sla.LinAlgError:
            step *= 10.0 if step < 1e-3 * scale else 4.0
    if factor is None:
        raise EigenSolverError("could not find a shift below the spectrum")
    calls = [0]

    def solve(x):
        calls[0] += 1
        return sla.cho_solve_banded((factor, False), x, check_finite=False)

    op = spla.LinearOperator((n, n), matvec=solve, dtype=float)
    v0 = np.ones(n) + np.arange(n) / n
    kk = min(k, n - 1)
    try:
        w, V = spla.eigsh(K, k=kk, sigma=sigma, which="LM", OPinv=op, v0=v0, tol=tol, maxiter=5000)
    except spla.ArpackNoConvergence as exc:
        raise EigenSolverError(str(exc)) from exc
    i = int(np.argmin(w))
    mode = V[:, i] / np.linalg.norm(V[:, i])
    # fix the sign for determinism: largest component positive
    j = int(np.argmax(np.abs(mode)))
    if mode[j] < 0:
        mode = -mode
    return EigenReport(mu_min=float(w[i]), mode=mode, iterations=calls[0], shift=sigma)


# --------------------------------------------------------------------------
# dynamics


@dataclass
class DynamicResult:
    times: list
    states: list  # sampled displacement vectors
    kinetic: list
    settled: bool
    final: KinematicState
    steps: int
    time: float


def integrate_dynamic(system, initial, lam, options=None, newton_options=None, observer=None, require_departure=False):
    """Implicit Newmark integration with the constraints frozen at ``lam``.

    Prescribed DOFs jump to their values at ``lam`` and stay at rest. Stepping
    stops once the kinetic energy stays below ``settle_energy`` times the
    reference energy (weight times length) for ``settle_steps`` consecutive
    steps. ``observer(step, t, u, v, active)`` is called after every step.
    With ``require_departure`` the settle count only starts once some node has
    moved ``departure_distance`` strip lengths away from its initial position,
    or after ``departure_patience`` steps, so a run started near an unstable
    equilibrium is not declared settled before it has left it.

    Raises
    ------
    SettleTimeout
        If ``max_steps`` is reached first; the partial result is attached.
    """
    opts = options or DynamicOptions()
    nopts = newton_options or NewtonOptions()
    M = system.mass
    C = opts.alpha_m * M
    fixed, values = system.prescribed(lam)
    free = system.free_dofs(fixed)
    u = np.array(initial.u, dtype=float)
    v = np.array(initial.v, dtype=float)
    u[fixed] = values
    v[fixed] = 0.0
    beta, gamma = opts.beta, opts.gamma

    r0, _, _ = system.evaluate(u, tangent=False)
    a = np.zeros_like(u)
    rhs = -(r0 + C @ v)
    Mff = M[free][:, free]
    a[free] = _solve(Mff, rhs[free])

    threshold = opts.settle_energy * system.energy_scale
    times, states, kin = [0.0], [u.copy()], [system.kinetic_energy(v)]
    quiet = 0
    armed = not require_departure
    u_start = u.copy()
    depart = opts.departure_distance * system.mesh.length
    t = 0.0
    step = 0
    dt = opts.dt

    def advance(u, v, a, h):
        c0 = 1.0 / (beta * h * h)
        c1 = gamma / (beta * h)
        pred_u = u + h * v + h * h * (0.5 - beta) * a
        pred_v = v + h * (1 - gamma) * a

        def inertia(un, tangent):
            an = c0 * (un - pred_u)
            vn = pred_v + gamma * h * an
            r_add = M @ an + C @ vn
            r_add[fixed] = 0.0
            K_add = (c0 * M + c1 * C) if tangent else None
            return r_add, K_add

        un, _, _, _, _ = newton(system, u, fixed, values, nopts, extra=inertia)
        an = c0 * (un - pred_u)
        vn = pred_v + gamma * h * an
        an[fixed] = 0.0
        vn[fixed] = 0.0
        return un, vn, an

    while step < opts.max_steps:
        # sub-step on Newton failure
        h, done, sub = dt, 0.0, 0
        uu, vv, aa = u, v, a
        while done < dt * (1 - 1e-12):
            try:
                uu2, vv2, aa2 = advance(uu, vv, aa, h)
            except (NonConvergence, ElementInversionError):
                sub += 1
                if sub > opts.max_substeps:
                    raise
                h /= 2
                continue
            uu, vv, aa = uu2, vv2, aa2
            done += h
        u, v, a = uu, vv, aa
        step += 1
        t += dt
        ke = system.kinetic_energy(v)
        if observer is not None:
            _, _, act = system.contact(u)
            observer(step, t, u, v, act)
        if step % opts.sample_every == 0:
            times.append(t)
            states.append(u.copy())
            kin.append(ke)
        if not armed and (step >= opts.departure_patience or np.max(np.abs(u - u_start)) >= depart):
            armed = True
        quiet = quiet + 1 if (ke < threshold and armed) else 0
        if quiet >= opts.settle_steps and step >= opts.min_steps:
            if times[-1] != t:
                times.append(t)
                states.append(u.copy())
                kin.append(ke)
            return DynamicResult(times, states, kin, True, KinematicState(u, v, tag=lam), step, t)
    result = DynamicResult(times, states, kin, False, KinematicState(u, v, tag=lam), step, t)
    raise SettleTimeout(f"no settle within {opts.max_steps} steps", result)
