"""Planned versus achieved touch of the triangular and circular folds.

Run with ``python demos/fold_touch.py [eta_b]``; takes about a minute.
"""
import sys

from stripfold.continuation import ContinuationOptions
from stripfold.paths import assess_path, circular_path, planned_touch, triangular_path
from stripfold.scenarios import Scenario, resolution_for


def main(eta_b=100.0):
    sc = Scenario(eta_b=eta_b)
    sc = sc.with_(nx=resolution_for(sc))
    opts = ContinuationOptions(step=0.01, min_step=1e-4)
    plan = planned_touch(sc, opts)
    print(f"eta_b = {eta_b:g}, nx = {sc.nx}, planned touch {plan.planned_touch:.4f} m from the held end")
    for name, gen in (("triangular", triangular_path), ("circular", circular_path)):
        rep = assess_path(sc, gen(sc.length, sc.x_f), name, plan, opts)
        print(
            f"{name:>10}: achieved {rep.achieved:.4f} m, error {rep.error:+.2e} m, "
            f"critical points {rep.critical_events}, touch at lambda {rep.touch_lambda:.3f} ({rep.touch_regime})"
        )


if __name__ == "__main__":
    main(float(sys.argv[1]) if len(sys.argv) > 1 else 100.0)
