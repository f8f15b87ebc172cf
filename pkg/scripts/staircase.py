"""Passenger delay against primary delay on the two-connection staircase fixture.

Feeder A reaches X with a 4 minute buffer to connection B, which waits up to
5 minutes. Later connections C and D are the fallbacks.
"""
import argparse

from railsync.depgraph import Timestamps, WaitingPolicy, build_depgraph, passenger_delay
from railsync.timetable import (ARRIVAL, Category, Leg, PassengerRoute, Segment, Station,
                                Timetable, TrainRun, planned_arrival, validate)


def fixture() -> Timetable:
    stations = {s: Station(s, s, mt) for s, mt in (("O", 0), ("X", 1), ("Z", 0))}
    rows = {"A": ("O", 560, "X", 600), "B": ("X", 604, "Z", 640),
            "C": ("X", 610, "Z", 645), "D": ("X", 621, "Z", 665)}
    runs = {t: TrainRun(t, Category.OTHER, (Segment(*row),)) for t, row in rows.items()}
    legs = (Leg("A", "O", "X"), Leg("B", "X", "Z"))
    route = PassengerRoute("r1", 1, legs, planned_arrival(runs, legs))
    return validate(Timetable(stations, runs, (route,)))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-wait", type=int, default=5)
    ap.add_argument("--p-max", type=int, default=25)
    args = ap.parse_args()
    tt = fixture()
    g = build_depgraph(tt, policy=WaitingPolicy(default_max_wait=args.max_wait))
    a = g.node_of[("A", 0, ARRIVAL)]
    print("p,passenger_delay")
    for p in range(args.p_max + 1):
        d = passenger_delay(tt.routes[0], g, Timestamps(g, g.propagate_delta([(a, p)])))
        print(f"{p},{'stranded' if d.stranded else d.delay}")


if __name__ == "__main__":
    main()
