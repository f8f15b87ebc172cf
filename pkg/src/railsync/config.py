"""Run configuration shared by the command line and the experiment scripts."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Mapping, Optional

from .avalanche import DEFAULT_P_TRANS, DEFAULT_TAIL_MIN_COUNT
from .depgraph import CAPPED, DEFAULT_MAX_DELAY, DEFAULT_MAX_LEGS, DEFAULT_MAX_WAIT
from .report import DEFAULT_JOINT_WINDOW, RAW
from .sync import DEFAULT_BOUNDARIES, DEFAULT_NULL_RUNS, DEFAULT_TAU, DEFAULT_WINDOW
from .synthetic import SyntheticParams


@dataclass(frozen=True)
class AvalancheConfig:
    driver: str = "both"
    period: float = 17
    threshold: float = 4.0
    m: float = 0.9
    p_trans: float = DEFAULT_P_TRANS
    n: int = 70
    edges: int = 240
    steps: int = 50_000
    seeds: int = 100
    graph_seed: Optional[int] = None
    max_topplings: int = 10 ** 6
    leak: float = 0.0
    tail_min_count: int = DEFAULT_TAIL_MIN_COUNT
    time_windows: int = 10


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    input: Optional[str] = None
    gtfs: Optional[str] = None
    default_min_transfer: int = 0
    tau: float = DEFAULT_TAU
    null_runs: int = DEFAULT_NULL_RUNS
    sync_window: int = DEFAULT_WINDOW
    joint_window: int = DEFAULT_JOINT_WINDOW
    boundaries: tuple[int, int] = DEFAULT_BOUNDARIES
    p_values: tuple[int, ...] = (5, 30)
    max_wait: int = DEFAULT_MAX_WAIT
    max_wait_table: tuple[tuple[str, str, int], ...] = ()
    waiting_mode: str = CAPPED
    max_delay: int = DEFAULT_MAX_DELAY
    max_legs: int = DEFAULT_MAX_LEGS
    s_measure: str = "s_total"
    quadrant_mode: str = RAW
    quadrant_p: Optional[int] = None
    preset: Optional[str] = None
    synthetic: SyntheticParams = field(default_factory=SyntheticParams)
    avalanche: AvalancheConfig = field(default_factory=AvalancheConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["synthetic"] = self.synthetic.to_dict()
        return d

    def header(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


_TUPLES = {"boundaries", "p_values"}


def _merge_nested(cls, base, data: Mapping[str, Any]):
    if cls is SyntheticParams:
        return SyntheticParams.from_dict({**base.to_dict(), **data})
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown avalanche config keys: {sorted(unknown)}")
    return replace(base, **data)


def merge(base: RunConfig, data: Mapping[str, Any]) -> RunConfig:
    """Overlay a (possibly partial) mapping on a config; unknown keys are errors."""
    names = {f.name for f in fields(RunConfig)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    upd: dict[str, Any] = {}
    for k, v in data.items():
        if k == "synthetic":
            upd[k] = _merge_nested(SyntheticParams, base.synthetic, v)
        elif k == "avalanche":
            upd[k] = _merge_nested(AvalancheConfig, base.avalanche, v)
        elif k in _TUPLES:
            upd[k] = tuple(int(x) for x in v)
        elif k == "max_wait_table":
            upd[k] = tuple((str(a), str(b), int(w)) for a, b, w in v)
        else:
            upd[k] = v
    return replace(base, **upd)


def load_config(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data
