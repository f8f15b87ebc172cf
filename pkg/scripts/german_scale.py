"""Write the German-scale synthetic bundle (2622 stations, 43772 segments).

    python scripts/german_scale.py out/german
"""
import argparse
import time

from railsync.synthetic import GERMAN_SCALE, generate_synthetic
from railsync.timetable import write_timetable


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    t0 = time.perf_counter()
    tt = generate_synthetic(GERMAN_SCALE, args.seed)
    write_timetable(tt, args.out_dir)
    print(f"{len(tt.stations)} stations, {tt.n_segments} segments, {len(tt.routes)} routes "
          f"written to {args.out_dir} in {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
