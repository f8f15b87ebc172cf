"""Exhaustive secondary-delay sweep and per-station linear fits of s(p).

    python scripts/sweep_linearity.py --lines 26 --seed 0 --measure s_total
"""
import argparse
import time
from collections import defaultdict

import numpy as np

from railsync.depgraph import secondary_delay_sweep
from railsync.synthetic import SyntheticParams, generate_synthetic
from railsync.timetable import derive_transfers


def r_squared(x, y):
    y = np.asarray(y, dtype=float)
    if np.ptp(y) == 0:
        return None
    fit = np.polyval(np.polyfit(x, y, 1), x)
    return 1 - float(((y - fit) ** 2).sum()) / float(((y - y.mean()) ** 2).sum())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lines", type=int, default=26)
    ap.add_argument("--routes", type=int, default=2000)
    ap.add_argument("--size", type=int, default=18, help="grid width and height")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--measure", choices=("s_total", "s_mean"), default="s_total")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    params = SyntheticParams(width=args.size, height=args.size, n_lines=args.lines,
                             n_routes=args.routes, span_start=360, span=720)
    tt = generate_synthetic(params, args.seed)
    ps = list(range(5, 31, 5))
    t0 = time.perf_counter()
    rows = secondary_delay_sweep(tt, p_values=ps, workers=args.threads)
    took = time.perf_counter() - t0
    series = defaultdict(list)
    for r in rows:
        series[r.station].append(getattr(r, args.measure))
    hubs = sorted({t.station for t in derive_transfers(tt)})
    fits = {s: r_squared(ps, series.get(s, [0.0] * len(ps))) for s in hubs}
    good = [s for s, v in fits.items() if v is not None and v >= 0.8]
    flat = [s for s, v in fits.items() if v is None]
    print(f"{len(tt.stations)} stations, {tt.n_segments} segments, sweep {took:.1f}s")
    print(f"transfer stations {len(hubs)}: R2>=0.8 at {len(good)} "
          f"({len(good) / len(hubs):.1%}), flat {len(flat)}")
    mono = sum(all(a <= b for a, b in zip(v, v[1:])) for v in series.values())
    print(f"{args.measure} non-decreasing in p at {mono}/{len(series)} stations")


if __name__ == "__main__":
    main()
