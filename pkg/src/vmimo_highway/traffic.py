"""Two-lane Poisson traffic in the reverse-lane reference frame.

Reverse-lane (westbound) vehicles are static; forward-lane (eastbound)
vehicles move east at ``2 v``.  Each lane stores *comoving* coordinates
(``base``) plus a scalar ``shift`` so a slot advance is O(1).

Traffic is generated lazily in fixed-length blocks whose random streams are
keyed by ``(seed, lane, block index)``.  A realization is therefore a function
of the seed alone: two runs with the same seed see the same vehicles no matter
when, or how often, a segment is materialized.
"""

from __future__ import annotations

import enum
import io
import os
from dataclasses import dataclass, field, replace
from typing import Optional, TextIO, Union

import numpy as np

from .core import ScenarioParams

__all__ = [
    "Lane",
    "LaneSnapshot",
    "RoadState",
    "TrafficField",
    "generate_lane",
    "poisson_positions",
    "initial_state",
    "advance_slot",
    "ensure_horizon",
    "dump_lanes",
    "load_lanes",
]


class Lane(str, enum.Enum):
    REVERSE = "reverse"
    FORWARD = "forward"


_LANE_CODE = {Lane.REVERSE: 0, Lane.FORWARD: 1}
_BLOCK_KEY_OFFSET = 1 << 40
_IDS_PER_BLOCK = 1 << 24
SOURCE_ID = -(1 << 62)


def poisson_positions(lam: float, x_min: float, x_max: float,
                      rng: np.random.Generator) -> np.ndarray:
    """Sorted Poisson points on ``(x_min, x_max)`` built from exponential gaps.

    The first point sits one exponential gap east of ``x_min``.  A draw that
    produces a repeated coordinate in double precision is discarded and redrawn.
    """
    if lam < 0:
        raise ValueError("requires lambda >= 0")
    if not x_min < x_max:
        raise ValueError("requires x_min < x_max")
    if lam == 0:
        return np.empty(0)
    span = x_max - x_min
    while True:
        expected = lam * span
        n = int(expected + 6.0 * np.sqrt(expected) + 16)
        gaps = rng.exponential(1.0 / lam, size=n)
        pos = x_min + np.cumsum(gaps)
        while pos[-1] < x_max:
            more = x_min + np.cumsum(np.concatenate([gaps, rng.exponential(1.0 / lam, size=n)]))
            gaps = np.diff(more, prepend=x_min)
            pos = more
        pos = pos[pos < x_max]
        if pos.size < 2 or np.all(np.diff(pos) > 0):
            return pos


@dataclass
class LaneSnapshot:
    """Vehicles of one lane: comoving coordinates, informed flags, stable ids.

    ``positions`` (the reverse-lane-frame coordinates) equal ``base + shift``.
    ``[lo, hi)`` is the comoving interval that has been materialized.
    """

    lane: Lane
    base: np.ndarray
    informed: np.ndarray
    ids: np.ndarray
    shift: float = 0.0
    lo: float = 0.0
    hi: float = 0.0

    @property
    def positions(self) -> np.ndarray:
        return self.base + self.shift if self.shift else self.base

    def __len__(self) -> int:
        return self.base.size

    def copy(self) -> "LaneSnapshot":
        return replace(self, base=self.base.copy(), informed=self.informed.copy(),
                       ids=self.ids.copy())

    def window(self, x_lo: float, x_hi: float) -> slice:
        """Index slice of vehicles with ``x_lo <= position <= x_hi``."""
        i = int(np.searchsorted(self.base, x_lo - self.shift, side="left"))
        j = int(np.searchsorted(self.base, x_hi - self.shift, side="right"))
        return slice(i, j)

    def last_informed(self) -> int:
        """Index of the easternmost informed vehicle, or -1."""
        nz = np.flatnonzero(self.informed)
        return int(nz[-1]) if nz.size else -1

    def insert(self, x: float, informed: bool, vid: int) -> None:
        b = x - self.shift
        k = int(np.searchsorted(self.base, b))
        self.base = np.insert(self.base, k, b)
        self.informed = np.insert(self.informed, k, informed)
        self.ids = np.insert(self.ids, k, vid)


def generate_lane(lam: float, x_min: float, x_max: float, rng: np.random.Generator,
                  lane: Lane = Lane.REVERSE) -> LaneSnapshot:
    """A freshly generated, all-uninformed lane on ``(x_min, x_max)``."""
    pos = poisson_positions(lam, x_min, x_max, rng)
    return LaneSnapshot(lane=Lane(lane), base=pos, informed=np.zeros(pos.size, bool),
                        ids=np.arange(pos.size, dtype=np.int64), lo=x_min, hi=x_max)


class TrafficField:
    """Deterministic, lazily evaluated Poisson traffic for both lanes.

    Parameters
    ----------
    lambda_r, lambda_f : float
        Lane densities (vehicles/m).
    seed : int or numpy.random.SeedSequence
        Root of every block's random stream.
    block_length : float
        Length (m) of one independently seeded block.
    """

    def __init__(self, lambda_r: float, lambda_f: float, seed, block_length: float = 5000.0):
        self.density = {Lane.REVERSE: float(lambda_r), Lane.FORWARD: float(lambda_f)}
        if isinstance(seed, np.random.SeedSequence):
            self.entropy = seed.entropy
            self.spawn_key = tuple(seed.spawn_key)
        else:
            self.entropy = int(seed)
            self.spawn_key = ()
        self.block_length = float(block_length)
        self._cache: dict[tuple[Lane, int], tuple[np.ndarray, np.ndarray]] = {}

    def block(self, lane: Lane, b: int) -> tuple[np.ndarray, np.ndarray]:
        key = (lane, b)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        ss = np.random.SeedSequence(
            self.entropy, spawn_key=self.spawn_key + (_LANE_CODE[lane], b + _BLOCK_KEY_OFFSET))
        x0 = b * self.block_length
        lam = self.density[lane]
        pos = (poisson_positions(lam, x0, x0 + self.block_length, np.random.default_rng(ss))
               if lam > 0 else np.empty(0))
        ids = b * _IDS_PER_BLOCK + np.arange(pos.size, dtype=np.int64)
        if len(self._cache) > 64:
            self._cache.clear()
        self._cache[key] = (pos, ids)
        return pos, ids

    def segment(self, lane: Lane, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
        """Comoving coordinates and ids of the lane's vehicles in ``[lo, hi)``."""
        if not hi > lo:
            return np.empty(0), np.empty(0, np.int64)
        b0 = int(np.floor(lo / self.block_length))
        b1 = int(np.floor(hi / self.block_length))
        parts = [self.block(lane, b) for b in range(b0, b1 + 1)]
        pos = np.concatenate([p for p, _ in parts])
        ids = np.concatenate([i for _, i in parts])
        keep = (pos >= lo) & (pos < hi)
        return pos[keep], ids[keep]


@dataclass
class RoadState:
    """Everything one simulation run carries from slot to slot.

    ``head_position`` is the easternmost informed coordinate.  ``informed_west``
    is the westernmost informed reverse-lane coordinate; forward vehicles east
    of it have crossed an informed reverse vehicle.  Receivers are evaluated
    and traffic is stored back to ``trail_edge``, measured from ``anchor`` when
    it is set (coupled runs share one) and from the head otherwise.
    """

    reverse: LaneSnapshot
    forward: LaneSnapshot
    slot_index: int = 0
    head_position: float = 0.0
    head_lane: Lane = Lane.REVERSE
    informed_west: float = 0.0
    horizon_margin: float = 6000.0
    trail_margin: float = 1200.0
    pending_hops: int = 0
    anchor: Optional[float] = None

    @property
    def trail_edge(self) -> float:
        ref = self.head_position if self.anchor is None else self.anchor
        return ref - self.trail_margin

    def lanes(self) -> tuple[LaneSnapshot, LaneSnapshot]:
        return self.reverse, self.forward

    def copy(self) -> "RoadState":
        return replace(self, reverse=self.reverse.copy(), forward=self.forward.copy())

    def refresh_head(self) -> None:
        best, lane = -np.inf, self.head_lane
        for snap in self.lanes():
            k = snap.last_informed()
            if k >= 0:
                x = snap.base[k] + snap.shift
                if x > best:
                    best, lane = x, snap.lane
        if np.isfinite(best):
            self.head_position, self.head_lane = float(best), lane

    def informed_ids(self) -> set:
        return {(s.lane, int(i)) for s in self.lanes() for i in s.ids[s.informed]}


def _empty_lane(lane: Lane, at: float) -> LaneSnapshot:
    return LaneSnapshot(lane=lane, base=np.empty(0), informed=np.zeros(0, bool),
                        ids=np.empty(0, np.int64), lo=at, hi=at)


def initial_state(params: ScenarioParams, field: TrafficField, *,
                  horizon_margin: Optional[float] = None,
                  trail_margin: Optional[float] = None,
                  inform_trailing: bool = True) -> RoadState:
    """Seed the beacon at an extra reverse-lane vehicle at coordinate 0."""
    state = RoadState(
        reverse=_empty_lane(Lane.REVERSE, 0.0), forward=_empty_lane(Lane.FORWARD, 0.0),
        horizon_margin=10.0 * params.R if horizon_margin is None else float(horizon_margin),
        trail_margin=2.0 * params.R if trail_margin is None else float(trail_margin))
    ensure_horizon(state, params, field, inform_trailing=inform_trailing)
    state.reverse.insert(0.0, True, SOURCE_ID)
    state.refresh_head()
    return state


def advance_slot(state: RoadState, params: ScenarioParams, slots: int = 1) -> RoadState:
    """Move the forward lane ``2 v tau`` east per slot (in place) and bump the slot index."""
    state.forward.shift += 2.0 * params.v * params.tau * slots
    state.slot_index += slots
    state.refresh_head()
    return state


def _storage_floor(state: RoadState, params: ScenarioParams) -> float:
    # receivers may sit one drift (<= R) below the evaluation edge during a
    # quiet-run bound and their transmitters up to R + drift further back
    return state.trail_edge - 3.0 * params.R


def ensure_horizon(state: RoadState, params: ScenarioParams, field: TrafficField, *,
                   inform_trailing: bool = True) -> RoadState:
    """Materialize, prune and settle trailing traffic around the head (in place).

    * Both lanes are populated up to ``head + horizon_margin``; existing
      vehicles are never regenerated.
    * Traffic is kept down to ``trail_edge - 3R``; older vehicles are
      pruned in chunks.  The forward lane drifts east, so it is also refilled
      from the west.  Refilled or trailing forward vehicles east of
      ``informed_west`` are marked informed when ``inform_trailing`` is set.
    """
    R = params.R
    chunk = 2.0 * R
    floor = _storage_floor(state, params)
    east = state.head_position + state.horizon_margin
    for snap in state.lanes():
        if snap.hi + snap.shift < east:
            new_hi = east + chunk - snap.shift
            pos, ids = field.segment(snap.lane, snap.hi, new_hi)
            snap.base = np.concatenate([snap.base, pos])
            snap.informed = np.concatenate([snap.informed, np.zeros(pos.size, bool)])
            snap.ids = np.concatenate([snap.ids, ids])
            snap.hi = new_hi
        if snap.lo + snap.shift > floor:
            new_lo = floor - chunk - snap.shift
            pos, ids = field.segment(snap.lane, new_lo, snap.lo)
            flags = np.zeros(pos.size, bool)
            if inform_trailing and snap.lane is Lane.FORWARD:
                flags = pos + snap.shift >= state.informed_west
            snap.base = np.concatenate([pos, snap.base])
            snap.informed = np.concatenate([flags, snap.informed])
            snap.ids = np.concatenate([ids, snap.ids])
            snap.lo = new_lo
        elif snap.lo + snap.shift < floor - 2.0 * chunk:
            cut_x = floor - chunk
            k = int(np.searchsorted(snap.base, cut_x - snap.shift))
            snap.base, snap.informed, snap.ids = snap.base[k:], snap.informed[k:], snap.ids[k:]
            snap.lo = cut_x - snap.shift
    if inform_trailing:
        fwd = state.forward
        sl = fwd.window(state.informed_west, state.trail_edge)
        if sl.stop > sl.start:
            fwd.informed[sl] = True
    return state


def dump_lanes(state: RoadState, out: Union[str, os.PathLike, TextIO, None] = None) -> str:
    """Plain-text lane dump, one ``lane position informed_flag`` line per vehicle."""
    buf = io.StringIO()
    for snap in state.lanes():
        for x, f in zip(snap.positions, snap.informed):
            buf.write(f"{snap.lane.value} {float(x)!r} {int(f)}\n")
    text = buf.getvalue()
    if out is None:
        return text
    if hasattr(out, "write"):
        out.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)
    return text


def load_lanes(text: str) -> dict[Lane, tuple[np.ndarray, np.ndarray]]:
    """Parse :func:`dump_lanes` output into ``{lane: (positions, informed)}``."""
    rows: dict[Lane, list] = {Lane.REVERSE: [], Lane.FORWARD: []}
    for line in text.splitlines():
        if not line.strip():
            continue
        lane, x, f = line.split()
        rows[Lane(lane)].append((float(x), f == "1"))
    return {lane: (np.array([x for x, _ in v], float), np.array([f for _, f in v], bool))
            for lane, v in rows.items()}
