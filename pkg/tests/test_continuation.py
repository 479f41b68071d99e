import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stripfold.continuation import (
    BracketError,
    ContinuationOptions,
    InternalFriction,
    critical_sweep,
    locate_critical_point,
    trace_path,
)
from stripfold.validation import LAMBDA_C_CUBIC, cubic_critical_point, cubic_probe


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 0.99), st.sampled_from([1e-3, 1e-6, 1e-9]))
def test_bisection_brackets_threshold(lam_c, tol):
    probe = lambda lam: (lam < lam_c, lam)
    mid, (lo, hi), payload = locate_critical_point(probe, 0.0, 1.0, tol)
    assert lo < lam_c <= hi
    assert hi - lo <= tol
    assert payload == lo and abs(mid - lam_c) <= tol


def test_bracket_errors():
    with pytest.raises(BracketError):
        locate_critical_point(lambda lam: (True, None), 0.0, 1.0, 1e-3)
    with pytest.raises(BracketError):
        locate_critical_point(lambda lam: (lam > 0.5, None), 0.0, 1.0, 1e-3)


def test_cubic_snap_through():
    lam_c, (lo, hi) = cubic_critical_point()
    assert abs(lam_c - LAMBDA_C_CUBIC) < 1e-8
    assert LAMBDA_C_CUBIC == pytest.approx(0.3849001794597505, abs=1e-15)
    ok, u = cubic_probe()(lo)
    assert ok and u == pytest.approx(-1 / math.sqrt(3), abs=1e-3)


def test_option_validation():
    with pytest.raises(ValueError):
        ContinuationOptions(step=1e-5, min_step=1e-4)
    with pytest.raises(ValueError):
        ContinuationOptions(eps_stab=0.0)
    with pytest.raises(ValueError):
        InternalFriction(coefficient=-1.0)
    with pytest.raises(ValueError):
        InternalFriction(scale=0.1, cap=0.01)


@pytest.fixture(scope="module")
def gentle_lift():
    from stripfold.scenarios import Scenario

    sc = Scenario(nx=24, nz=2)
    return sc.system(sc.path_from_hold_frame([[0, 0.3, 0.0, 0.0], [1, 0.27, 0.04, 0.3]]))


def test_stable_path_completes_without_events(gentle_lift):
    rec = trace_path(gentle_lift, ContinuationOptions(step=0.1))
    assert rec.completed and rec.events == []
    assert rec.lambdas[0] == 0.0 and rec.lambdas[-1] == 1.0
    assert np.all(np.diff(rec.lambdas) > 0)
    assert np.all(rec.mu > 0) and rec.mu0 > 0
    assert all(s.regime == "static" for s in rec.samples)


def test_friction_stays_below_cap(gentle_lift):
    fr = InternalFriction(enabled=True)
    rec = trace_path(gentle_lift, ContinuationOptions(step=0.1), fr)
    assert rec.completed
    ratios = [s.friction_force / np.linalg.norm(s.reaction) for s in rec.samples[1:]]
    assert max(ratios) <= fr.cap
    assert max(ratios) > 0


def _failing_prepare(eta_b, z):
    raise RuntimeError(f"no cell {eta_b} {z}")


def test_sweep_reports_failed_cells_in_order():
    rows = critical_sweep(_failing_prepare, [0.06, 0.04], [300.0, 100.0])
    assert [(r.eta_b, r.z) for r in rows] == [(100, 0.04), (100, 0.06), (300, 0.04), (300, 0.06)]
    assert all(r.status.startswith("prepare_failed") and math.isnan(r.lambda_c) for r in rows)
    with pytest.raises(ValueError):
        critical_sweep(_failing_prepare, [], [1.0])
