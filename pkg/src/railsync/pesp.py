"""Feasibility checks for (periodic) event-scheduling constraint systems.

A constraint ``(i, j, lo, hi)`` requires ``lo <= pi[j] - pi[i] <= hi``; in the
periodic variant with period ``T`` it requires some integer ``k`` with
``lo <= pi[j] - pi[i] + T*k <= hi``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Mapping, Optional

from .timetable import (ARRIVAL, DEPARTURE, DEFAULT_TRANSFER_WINDOW, Timetable,
                        TransferOpportunity)

UNBOUNDED = 10 ** 9
"""Sentinel upper bound for constraints without a maximum."""

DEFAULT_MIN_STANDING = 2


class PespError(ValueError):
    pass


@dataclass(frozen=True)
class Constraint:
    i: str
    j: str
    lo: Rational
    hi: Rational
    kind: str = ""


@dataclass(frozen=True)
class PespInstance:
    events: tuple[str, ...]
    constraints: tuple[Constraint, ...]
    period: Optional[int] = None

    def __post_init__(self):
        known = set(self.events)
        for c in self.constraints:
            if c.lo > c.hi:
                raise PespError(f"constraint {c.i}->{c.j}: lower bound {c.lo} exceeds {c.hi}")
            for e in (c.i, c.j):
                if e not in known:
                    raise PespError(f"constraint references unknown event {e!r}")
        if self.period is not None and self.period <= 0:
            raise PespError("period must be positive")


@dataclass(frozen=True)
class Violation:
    index: int
    constraint: Constraint
    difference: Rational


@dataclass
class PeriodicCheck:
    violations: list[Violation] = field(default_factory=list)
    witnesses: dict[int, int] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return not self.violations


def _lookup(pi: Mapping[str, Rational], event: str) -> Rational:
    try:
        return pi[event]
    except KeyError:
        raise PespError(f"event {event!r} has no time assigned") from None


def verify_nonperiodic(inst: PespInstance, pi: Mapping[str, Rational]) -> list[Violation]:
    """Constraints whose difference ``pi[j] - pi[i]`` leaves ``[lo, hi]``."""
    for e in inst.events:
        _lookup(pi, e)
    out = []
    for n, c in enumerate(inst.constraints):
        d = _lookup(pi, c.j) - _lookup(pi, c.i)
        if not c.lo <= d <= c.hi:
            out.append(Violation(n, c, d))
    return out


def _ceil(x) -> int:
    return math.ceil(Fraction(x))


def _floor(x) -> int:
    return math.floor(Fraction(x))


def k_range(c: Constraint, d, period: int) -> tuple[int, int]:
    """Closed interval of integers k with ``lo <= d + period*k <= hi`` (may be empty)."""
    return _ceil(Fraction(c.lo - d) / period), _floor(Fraction(c.hi - d) / period)


def verify_periodic(inst: PespInstance, pi: Mapping[str, Rational],
                    period: Optional[int] = None) -> PeriodicCheck:
    """Check every constraint modulo the period; satisfied constraints get the
    smallest valid ``k`` as witness."""
    T = period if period is not None else inst.period
    if T is None:
        raise PespError("periodic verification needs a period")
    for e in inst.events:
        t = _lookup(pi, e)
        if not 0 <= t < T:
            raise PespError(f"time {t} of event {e!r} outside [0, {T})")
    result = PeriodicCheck()
    for n, c in enumerate(inst.constraints):
        d = _lookup(pi, c.j) - _lookup(pi, c.i)
        k_lo, k_hi = k_range(c, d, T)
        if k_lo <= k_hi:
            result.witnesses[n] = k_lo
        else:
            result.violations.append(Violation(n, c, d))
    return result


def event_id(train: str, index: int, kind: str) -> str:
    return f"{train}:{index}:{'a' if kind == ARRIVAL else 'd'}"


def extract_pesp(tt: Timetable, period: Optional[int] = None,
                 transfers: Iterable[TransferOpportunity] = (),
                 min_standing: int = DEFAULT_MIN_STANDING,
                 max_window: int = DEFAULT_TRANSFER_WINDOW
                 ) -> tuple[PespInstance, dict[str, int]]:
    """Constraint system and timetable vector implied by a schedule.

    Traveling constraints fix the planned running time, standing constraints
    require ``min_standing`` minutes at intermediate stops and transfer
    constraints bound the interchange gap by ``[min_transfer, max_window]``.
    Without ``period`` the vector holds raw times (non-periodic variant).
    """
    events: list[str] = []
    pi: dict[str, int] = {}
    cons: list[Constraint] = []

    def add(eid: str, t: int):
        events.append(eid)
        pi[eid] = t % period if period else t

    for run in tt.runs.values():
        for k, seg in enumerate(run.segments):
            d, a = event_id(run.id, k, DEPARTURE), event_id(run.id, k, ARRIVAL)
            add(d, seg.dep_time)
            add(a, seg.arr_time)
            cons.append(Constraint(d, a, seg.duration, seg.duration, "traveling"))
            if k:
                cons.append(Constraint(event_id(run.id, k - 1, ARRIVAL), d, min_standing,
                                       UNBOUNDED, "standing"))
    for t in transfers:
        cons.append(Constraint(event_id(t.from_arrival.train, t.from_arrival.index, ARRIVAL),
                               event_id(t.to_departure.train, t.to_departure.index, DEPARTURE),
                               tt.stations[t.station].min_transfer, max_window, "transfer"))
    return PespInstance(tuple(events), tuple(cons), period), pi


def instance_to_json(inst: PespInstance, pi: Mapping[str, Rational]) -> str:
    def num(x):
        x = Fraction(x)
        return x.numerator if x.denominator == 1 else str(x)

    return json.dumps({
        "period": inst.period,
        "events": list(inst.events),
        "constraints": [{"i": c.i, "j": c.j, "lo": num(c.lo), "hi": num(c.hi)}
                        for c in inst.constraints],
        "pi": {e: num(t) for e, t in pi.items()},
    }, indent=1)


def instance_from_json(text: str) -> tuple[PespInstance, dict[str, Fraction]]:
    data = json.loads(text)

    def num(x):
        return Fraction(x) if isinstance(x, str) else x

    cons = tuple(Constraint(c["i"], c["j"], num(c["lo"]), num(c["hi"]))
                 for c in data["constraints"])
    inst = PespInstance(tuple(data["events"]), cons, data.get("period"))
    return inst, {e: num(t) for e, t in data.get("pi", {}).items()}
