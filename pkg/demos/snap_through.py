"""Equilibrium path of the x-translation with its snap-through.

Prints the stability indicator along the path and the event sequence,
then writes ``snap_through.svg`` (grey static, red dynamic, green after).
"""
from stripfold.continuation import ContinuationOptions, trace_path
from stripfold.output import svg_trace
from stripfold.scenarios import x_translation_scenario


def main():
    sc, xt = x_translation_scenario()
    opts = ContinuationOptions(step=0.025, min_step=1e-3)
    system, initial = xt.prepare(sc, opts)
    rec = trace_path(system, opts, initial=initial)
    for s in rec.static_samples()[::4]:
        print(f"gripper x {xt.gripper_x(s.lam):.4f} m   mu_min {s.mu_min:10.4g}")
    for e in rec.events:
        print(f"{e.kind:>16} at gripper x {xt.gripper_x(e.lam):.5f} m")
    svg_trace(rec, system.mesh, "snap_through.svg")


if __name__ == "__main__":
    main()
