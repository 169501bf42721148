"""Compare quasi-orthogonal and orthogonal projection on a shared output grid.

Also integrates a tight-tolerance reference so the mode gap can be read
against the global error of the default run.
"""
import argparse

import numpy as np

from jetmbs.integrator import integrate
from jetmbs.models import check_model, load_model

GRID = tuple(np.round(np.arange(0.5, 10.0 + 1e-9, 0.5), 10))


def grid_run(spec, jet, mode="quasi", **control):
    tol = control.pop("proj_tol", None)
    proj = spec.projection_config(mode=mode, **({"tol_abs": tol} if tol else {}))
    tr = integrate(spec.mechanism(), jet, spec.step_control(output_times=GRID, **control), proj)
    return tr, np.array([np.r_[tr.at(t).y, tr.at(t).y1] for t in GRID])


def scaled(a, b, c):
    r = np.abs(a - b) / (c.atol + c.rtol * np.maximum(np.abs(a), np.abs(b)))
    return r.max(axis=1), np.sqrt(np.mean(r**2, axis=1))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("model", nargs="?", default="pendulum")
    ap.add_argument("--reference-tol", type=float, default=1e-10,
                    help="atol = rtol = projection tolerance of the reference run (0 skips it)")
    args = ap.parse_args()
    spec = load_model(args.model)
    jet = check_model(spec).jet
    c = spec.step_control()
    runs = {}
    for mode in ("quasi", "orthogonal"):
        tr, runs[mode] = grid_run(spec, jet, mode)
        s = tr.stats
        print(f"{mode:<10} steps {s.succ_steps}({s.rej_steps})  d3g {s.n_d3g}  {s.wall_time:.1f} s", flush=True)
    mx, rms = scaled(runs["quasi"], runs["orthogonal"], c)
    print("quasi vs orthogonal   max", mx.round(2))
    print("                      rms", rms.round(2))
    if args.reference_tol > 0:
        tol = args.reference_tol
        _, ref = grid_run(spec, jet, atol=tol, rtol=tol, proj_tol=tol)
        for mode in ("quasi", "orthogonal"):
            mx, rms = scaled(runs[mode], ref, c)
            print(f"{mode} global error  max", mx.round(2))
            print(f"{'':<{len(mode)}} global error  rms", rms.round(2))


if __name__ == "__main__":
    main()
