"""Run statistics for the built-in models in both projection modes.

Prints one column per (model, mode, invariants) run and writes the raw numbers
to a JSON file.

    python3 scripts/run_statistics.py --models pendulum quadrangle --out results/stats.json
"""
import argparse
import json
from pathlib import Path

from jetmbs.models import STATS_ROWS, load_model, simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--models", nargs="+", default=["pendulum", "quadrangle", "crank"])
    ap.add_argument("--modes", nargs="+", default=["quasi", "orthogonal"], choices=["quasi", "orthogonal"])
    ap.add_argument("--invariants", nargs="+", default=["on"], choices=["on", "off"])
    ap.add_argument("--t-end", type=float)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    overrides = {"t_end": args.t_end} if args.t_end else {}
    columns, raw = [], {}
    for name in args.models:
        spec = load_model(name)
        for mode in args.modes:
            for inv in args.invariants:
                label = f"{name}/{mode}/inv-{inv}"
                res = simulate(spec, projection=mode, invariants=inv, **overrides)
                columns.append((label, res.stats))
                raw[label] = res.stats.as_dict()
                print(f"finished {label} in {res.stats.wall_time:.1f} s", flush=True)

    width = max(len(k) for k, _ in STATS_ROWS) + 2
    colw = max(len(c) for c, _ in columns) + 2
    print("".ljust(width) + "".join(c.rjust(colw) for c, _ in columns))
    for key, fmt in STATS_ROWS:
        print(key.ljust(width) + "".join(fmt(s).rjust(colw) for _, s in columns))
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(raw, indent=2) + "\n")


if __name__ == "__main__":
    main()
