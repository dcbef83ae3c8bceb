"""Slotted beacon propagation: decode rules, renewal labelling and IPS estimation.

One run follows the head of a single beacon in the reverse-lane frame.  Each
slot every informed vehicle broadcasts once; decodes are evaluated against the
informed set at slot start and take effect after the slot (no intra-slot
relay).  Then the forward lane advances by ``2 v tau``.

Runs of slots in which provably nothing can decode are skipped in one step:
cross-lane distances change by at most ``2 v tau`` per slot, so a bound with
every cross-lane distance shrunk by the total drift certifies a quiet stretch.
"""

from __future__ import annotations

import enum
import io
import math
import os
import statistics
from dataclasses import dataclass, field
from typing import Optional, Sequence, TextIO, Union

import numpy as np

from .core import InvalidParameterError, ScenarioParams
from .traffic import (Lane, RoadState, TrafficField, advance_slot, dump_lanes,
                      ensure_horizon, initial_state)

__all__ = [
    "Label",
    "SchemeKind",
    "VMIMO",
    "FLOODING",
    "REVERSE_AIDED",
    "SlotRecord",
    "CycleRecord",
    "IpsEstimate",
    "Budget",
    "RunResult",
    "UnderBudgetError",
    "DominanceViolationError",
    "CoupledReport",
    "find_decoders",
    "step_slot",
    "simulate",
    "run_scenario",
    "estimate_ips",
    "coupled_dominance_run",
    "write_trace",
]


class Label(enum.IntEnum):
    PROP_I = 0
    PROP_II = 1
    STOP = 2


SCHEME_NAMES = ("vmimo", "flooding", "reverse_aided")


@dataclass(frozen=True)
class SchemeKind:
    """Broadcast scheme; ``handshake_slots`` only matters for ``reverse_aided``."""

    name: str
    handshake_slots: int = 1

    def __post_init__(self):
        if self.name not in SCHEME_NAMES:
            raise InvalidParameterError(f"unknown scheme {self.name!r}")
        if int(self.handshake_slots) != self.handshake_slots or self.handshake_slots < 1:
            raise InvalidParameterError("requires handshake_slots >= 1")

    @classmethod
    def parse(cls, value: Union[str, "SchemeKind"], handshake_slots: int = 1) -> "SchemeKind":
        if isinstance(value, SchemeKind):
            return value
        return cls(str(value), handshake_slots)

    def __str__(self) -> str:
        return self.name


VMIMO = SchemeKind("vmimo")
FLOODING = SchemeKind("flooding")
REVERSE_AIDED = SchemeKind("reverse_aided")


@dataclass(frozen=True)
class SlotRecord:
    slot_index: int
    head_before: float
    head_after: float
    state_label: Label
    newly_informed: int


@dataclass(frozen=True)
class CycleRecord:
    propagate_duration: float
    stop_duration: float
    distance: float


@dataclass(frozen=True)
class IpsEstimate:
    mean: float
    ci95_halfwidth: float
    replications: int
    slots_per_rep: int
    warmup_slots: int


@dataclass(frozen=True)
class Budget:
    """Run length control.

    A run stops after ``max_slots`` slots, or earlier once ``min_cycles``
    renewal cycles have completed after warm-up.  Warm-up lasts
    ``max(warmup_slots, warmup_cycles cycles)``; the cycle requirement is
    waived at ``max_slots // 2`` so cycle-free runs (no traffic, ``v = 0``,
    saturated density) still get measured.
    """

    max_slots: int = 20000
    min_cycles: Optional[int] = 50
    warmup_slots: int = 200
    warmup_cycles: int = 5

    def __post_init__(self):
        if self.warmup_slots < 1:
            raise InvalidParameterError("requires warmup_slots >= 1")
        if self.min_cycles is not None and self.min_cycles < 1:
            raise InvalidParameterError("requires min_cycles >= 1")


class UnderBudgetError(RuntimeError):
    """The slot budget cannot cover warm-up plus at least one measured slot."""


class DominanceViolationError(AssertionError):
    """Flooding informed a vehicle that the coupled vmimo run did not."""


# --------------------------------------------------------------------------- decode rules

def _select(state: RoadState, lo: float, hi: float, informed: bool):
    """Per lane ``(positions, indices)`` of vehicles in ``[lo, hi]`` with the given flag."""
    out = []
    for snap in state.lanes():
        sl = snap.window(lo, hi)
        if sl.stop > sl.start:
            idx = np.flatnonzero(snap.informed[sl] == informed) + sl.start
        else:
            idx = np.empty(0, np.intp)
        out.append((snap.base[idx] + snap.shift, idx))
    return out


def _stack(parts):
    x = np.concatenate([p[0] for p in parts])
    fwd = np.concatenate([np.full(p[0].size, k == 1) for k, p in enumerate(parts)])
    return x, fwd


def _combining_hits(rx, tx, params: ScenarioParams, drift: float = 0.0,
                    rx_fwd=None, tx_fwd=None) -> np.ndarray:
    d = np.abs(rx[:, None] - tx[None, :])
    if drift:
        cross = rx_fwd[:, None] != tx_fwd[None, :]
        d = np.where(cross, np.maximum(d - drift, 0.0), d)
    with np.errstate(divide="ignore"):
        w = np.where(d <= params.R, 1.0 / (d * d), 0.0)
    return w.sum(axis=1) >= 1.0 / (params.r * params.r)


def _single_link_hits(rx, tx, params: ScenarioParams, drift: float = 0.0,
                      rx_fwd=None, tx_fwd=None) -> np.ndarray:
    d = np.abs(rx[:, None] - tx[None, :])
    if drift:
        cross = rx_fwd[:, None] != tx_fwd[None, :]
        d = np.where(cross, np.maximum(d - drift, 0.0), d)
    return (d <= params.r).any(axis=1)


def _broadcast_decoders(state: RoadState, params: ScenarioParams, scheme: SchemeKind):
    head, R = state.head_position, params.R
    rx_parts = _select(state, state.trail_edge, head + R, informed=False)
    rx, _ = _stack(rx_parts)
    if rx.size == 0:
        return [np.empty(0, np.intp), np.empty(0, np.intp)]
    reach = R if scheme.name == "vmimo" else params.r
    tx, _ = _stack(_select(state, rx.min() - reach, rx.max() + reach, informed=True))
    if tx.size == 0:
        return [np.empty(0, np.intp), np.empty(0, np.intp)]
    rule = _combining_hits if scheme.name == "vmimo" else _single_link_hits
    hit = rule(rx, tx, params)
    n0 = rx_parts[0][1].size
    return [rx_parts[0][1][hit[:n0]], rx_parts[1][1][hit[n0:]]]


def _unicast_candidates(state: RoadState, params: ScenarioParams):
    head = state.head_position
    parts = _select(state, head, head + params.r, informed=False)
    return [(x[x > head], i[x > head]) for x, i in parts]


def find_decoders(state: RoadState, params: ScenarioParams, scheme: SchemeKind):
    """Indices (reverse, forward) of vehicles that decode in the current slot.

    For ``reverse_aided`` this also advances the handshake counter.
    """
    if scheme.name != "reverse_aided":
        return _broadcast_decoders(state, params, scheme)
    cands = _unicast_candidates(state, params)
    if sum(c[0].size for c in cands) == 0:
        state.pending_hops = 0
        return [np.empty(0, np.intp), np.empty(0, np.intp)]
    state.pending_hops += 1
    if state.pending_hops < scheme.handshake_slots:
        return [np.empty(0, np.intp), np.empty(0, np.intp)]
    state.pending_hops = 0
    best = max(range(2), key=lambda k: cands[k][0].max() if cands[k][0].size else -np.inf)
    out = [np.empty(0, np.intp), np.empty(0, np.intp)]
    out[best] = cands[best][1][[int(np.argmax(cands[best][0]))]]
    return out


def _apply(state: RoadState, decoders) -> tuple[int, float]:
    """Mark decoders informed; return (count, easternmost newly informed position)."""
    count, east = 0, -np.inf
    for snap, idx in zip(state.lanes(), decoders):
        if idx.size == 0:
            continue
        snap.informed[idx] = True
        xs = snap.base[idx] + snap.shift
        east = max(east, float(xs.max()))
        count += idx.size
        if snap.lane is Lane.REVERSE:
            state.informed_west = min(state.informed_west, float(xs.min()))
    return count, east


def _label(state: RoadState, decoded_ahead: bool) -> Label:
    if decoded_ahead:
        return Label.PROP_I
    return Label.PROP_II if state.head_lane is Lane.FORWARD else Label.STOP


def step_slot(state: RoadState, params: ScenarioParams,
              scheme: SchemeKind) -> tuple[RoadState, SlotRecord]:
    """Run one slot in place: decode against the slot-start informed set, then advance."""
    scheme = SchemeKind.parse(scheme)
    before, slot = state.head_position, state.slot_index
    count, east = _apply(state, find_decoders(state, params, scheme))
    advance_slot(state, params)
    rec = SlotRecord(slot, before, state.head_position, _label(state, east > before), count)
    return state, rec


# --------------------------------------------------------------------------- quiet-run bound

def _lane_max_informed(state: RoadState) -> tuple[float, float]:
    out = []
    for snap in state.lanes():
        k = snap.last_informed()
        out.append(snap.base[k] + snap.shift if k >= 0 else -np.inf)
    return out[0], out[1]


def _broadcast_quiet(state: RoadState, params: ScenarioParams, scheme: SchemeKind,
                     drift: float) -> bool:
    head, R = state.head_position, params.R
    rx, rx_fwd = _stack(_select(state, state.trail_edge - drift,
                                head + R + drift, informed=False))
    if rx.size == 0:
        return True
    reach = (R if scheme.name == "vmimo" else params.r) + drift
    tx, tx_fwd = _stack(_select(state, rx.min() - reach, rx.max() + reach, informed=True))
    if tx.size == 0:
        return True
    rule = _combining_hits if scheme.name == "vmimo" else _single_link_hits
    return not rule(rx, tx, params, drift, rx_fwd, tx_fwd).any()


def _unicast_quiet(state: RoadState, params: ScenarioParams, drift: float) -> bool:
    r = params.r
    rev_head, fwd_head = _lane_max_informed(state)
    rev, fwd = state.reverse, state.forward
    if np.isfinite(fwd_head):
        # a moving head closes in on static vehicles ahead of it
        x, _ = _select(state, fwd_head, fwd_head + r + drift, informed=False)[0]
        if np.any(x > fwd_head):
            return False
        x, _ = _select(state, fwd_head, fwd_head + r, informed=False)[1]
        if np.any(x > fwd_head):
            return False
    if rev_head >= fwd_head:
        # the static head stays head only while the forward lane is behind it
        x, _ = _select(state, rev_head, rev_head + r, informed=False)[0]
        if np.any(x > rev_head):
            return False
        x, _ = _select(state, rev_head - drift, rev_head + r, informed=False)[1]
        if np.any(x + drift > rev_head):
            return False
    return True


def _quiet_slots(state: RoadState, params: ScenarioParams, scheme: SchemeKind,
                 cap: int) -> int:
    """Largest ``k <= cap`` such that the next ``k`` slots certainly have no decode."""
    if cap <= 0:
        return 0
    step = 2.0 * params.v * params.tau
    if step == 0.0:
        return cap
    cap = min(cap, int(params.R // step))

    def quiet(k: int) -> bool:
        if scheme.name == "reverse_aided":
            return _unicast_quiet(state, params, k * step)
        return _broadcast_quiet(state, params, scheme, k * step)

    if cap <= 0 or not quiet(1):
        return 0
    if quiet(cap):
        return cap
    lo, hi = 1, cap
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if quiet(mid):
            lo = mid
        else:
            hi = mid
    return lo


# --------------------------------------------------------------------------- runs

@dataclass
class RunResult:
    """Per-slot history of one replication (truncated at the stopping slot)."""

    params: ScenarioParams
    scheme: SchemeKind
    head_before: np.ndarray
    head_after: np.ndarray
    labels: np.ndarray
    newly_informed: np.ndarray
    warmup_slots: int
    end_slot: int

    @property
    def measured_slots(self) -> int:
        return self.end_slot - self.warmup_slots

    @property
    def ips(self) -> float:
        w, e = self.warmup_slots, self.end_slot
        return float((self.head_after[e - 1] - self.head_after[w - 1])
                     / (self.measured_slots * self.params.tau))

    def records(self) -> list[SlotRecord]:
        return [SlotRecord(i, float(b), float(a), Label(int(s)), int(n))
                for i, (b, a, s, n) in enumerate(zip(self.head_before, self.head_after,
                                                     self.labels, self.newly_informed))]

    def cycle_boundaries(self, lo: int = 0, hi: Optional[int] = None) -> np.ndarray:
        """Slot indices ``e`` in ``[lo, hi]`` where a STOP run ends."""
        hi = self.end_slot if hi is None else hi
        lab = self.labels
        ends = np.flatnonzero((lab[:-1] == Label.STOP) & (lab[1:] != Label.STOP)) + 1
        return ends[(ends >= lo) & (ends <= hi)]

    def cycles(self) -> list[CycleRecord]:
        """Complete renewal cycles inside the measurement window."""
        tau, lab, head = self.params.tau, self.labels, self.head_after
        ends = self.cycle_boundaries(self.warmup_slots, self.end_slot)
        out = []
        for a, b in zip(ends[:-1], ends[1:]):
            stop = int(np.count_nonzero(lab[a:b] == Label.STOP))
            out.append(CycleRecord((b - a - stop) * tau, stop * tau,
                                   float(head[b - 1] - head[a - 1])))
        return out

    def estimate(self) -> IpsEstimate:
        return IpsEstimate(self.ips, math.nan, 1, self.measured_slots, self.warmup_slots)


class _Recorder:
    def __init__(self, budget: Budget):
        n = budget.max_slots
        self.budget = budget
        self.head_before = np.empty(n)
        self.head_after = np.empty(n)
        self.labels = np.empty(n, np.int8)
        self.newly = np.zeros(n, np.int32)
        self.t = 0
        self.cycle_ends: list[int] = []

    def _note_cycles(self, start: int, stop: int) -> None:
        lab = self.labels
        prev = lab[start - 1] if start > 0 else Label.PROP_I
        seg = lab[start:stop]
        prior = np.concatenate([[prev], seg[:-1]])
        ends = np.flatnonzero((prior == Label.STOP) & (seg != Label.STOP)) + start
        self.cycle_ends.extend(int(e) for e in ends)

    def one(self, before: float, after: float, label: Label, newly: int) -> None:
        t = self.t
        self.head_before[t], self.head_after[t] = before, after
        self.labels[t], self.newly[t] = label, newly
        self.t = t + 1
        self._note_cycles(t, t + 1)

    def many(self, before: np.ndarray, after: np.ndarray, labels: np.ndarray) -> None:
        t, k = self.t, before.size
        self.head_before[t:t + k], self.head_after[t:t + k] = before, after
        self.labels[t:t + k] = labels
        self.t = t + k
        self._note_cycles(t, t + k)

    def warmup_end(self) -> Optional[int]:
        b = self.budget
        cap = b.max_slots // 2
        if len(self.cycle_ends) >= b.warmup_cycles:
            return max(b.warmup_slots, min(self.cycle_ends[b.warmup_cycles - 1], cap))
        if self.t >= cap:
            return max(b.warmup_slots, cap)
        return None

    def stop_slot(self) -> Optional[int]:
        """Slot at which ``min_cycles`` post-warm-up cycles are complete, if reached."""
        b = self.budget
        if b.min_cycles is None:
            return None
        w = self.warmup_end()
        if w is None:
            return None
        after = [e for e in self.cycle_ends if e > w]
        if len(after) >= b.min_cycles:
            return after[b.min_cycles - 1]
        return None


def _quiet_history(state: RoadState, params: ScenarioParams, k: int):
    """Head trajectory and labels over ``k`` decode-free slots starting now."""
    rev_head, fwd_head = _lane_max_informed(state)
    step = 2.0 * params.v * params.tau
    j = np.arange(k + 1)
    fwd = fwd_head + step * j
    heads = np.maximum(rev_head, fwd)
    labels = np.where(fwd[1:] > rev_head, Label.PROP_II, Label.STOP).astype(np.int8)
    return heads[:-1], heads[1:], labels


def simulate(params: ScenarioParams, scheme: Union[str, SchemeKind], budget: Budget,
             seed, *, skip_quiet: bool = True) -> RunResult:
    """Run one replication from a beacon seeded at the reverse-lane origin."""
    scheme = SchemeKind.parse(scheme)
    if budget.max_slots <= budget.warmup_slots:
        raise UnderBudgetError(
            f"max_slots={budget.max_slots} cannot exit a {budget.warmup_slots}-slot warm-up")
    traffic = TrafficField(params.lambda_r, params.lambda_f, seed)
    trailing = scheme.name != "reverse_aided"
    state = initial_state(params, traffic, inform_trailing=trailing)
    rec = _Recorder(budget)
    stop = None
    while rec.t < budget.max_slots:
        ensure_horizon(state, params, traffic, inform_trailing=trailing)
        before = state.head_position
        pending = state.pending_hops
        count, east = _apply(state, find_decoders(state, params, scheme))
        if count or not skip_quiet or state.pending_hops or pending:
            advance_slot(state, params)
            rec.one(before, state.head_position, _label(state, east > before), count)
        else:
            k = 1 + _quiet_slots(state, params, scheme, budget.max_slots - rec.t - 1)
            hb, ha, lab = _quiet_history(state, params, k)
            advance_slot(state, params, k)
            rec.many(hb, ha, lab)
        stop = rec.stop_slot()
        if stop is not None:
            break
    end = stop if stop is not None else rec.t
    w = rec.warmup_end()
    if w is None or w >= end:
        raise UnderBudgetError(f"max_slots={budget.max_slots} leaves no measured slots")
    return RunResult(params, scheme, rec.head_before[:end].copy(), rec.head_after[:end].copy(),
                     rec.labels[:end].copy(), rec.newly[:end].copy(), w, end)


def run_scenario(params: ScenarioParams, scheme: Union[str, SchemeKind], budget: Budget,
                 seed) -> tuple[IpsEstimate, list[CycleRecord]]:
    """One replication: its IPS estimate and the renewal cycles after warm-up."""
    result = simulate(params, scheme, budget, seed)
    return result.estimate(), result.cycles()


_Z95 = statistics.NormalDist().inv_cdf(0.975)


def estimate_ips(replication_results: Sequence[Union[float, IpsEstimate]]) -> IpsEstimate:
    """Mean and normal-approximation 95% half-width across replication means."""
    if len(replication_results) < 2:
        raise InvalidParameterError("requires at least 2 replications")
    reps = [r if isinstance(r, IpsEstimate) else None for r in replication_results]
    values = sorted(float(r.mean) if isinstance(r, IpsEstimate) else float(r)
                    for r in replication_results)
    n = len(values)
    mean = math.fsum(values) / n
    half = _Z95 * statistics.stdev(values, mean) / math.sqrt(n)
    if all(r is not None for r in reps):
        slots = min(r.slots_per_rep for r in reps)
        warm = max(r.warmup_slots for r in reps)
    else:
        slots = warm = 0
    return IpsEstimate(mean, half, n, slots, warm)


# --------------------------------------------------------------------------- coupling

@dataclass
class CoupledReport:
    """Slot-by-slot comparison of vmimo and flooding on one traffic realization."""

    head_vmimo: np.ndarray
    head_flooding: np.ndarray
    violations: list = field(default_factory=list)

    @property
    def head_gap(self) -> np.ndarray:
        return self.head_vmimo - self.head_flooding

    @property
    def ok(self) -> bool:
        return not self.violations


def _subset_violations(small: RoadState, big: RoadState) -> list:
    out = []
    for s, b in zip(small.lanes(), big.lanes()):
        stored = np.intersect1d(s.ids[s.informed], b.ids, assume_unique=True)
        missing = np.setdiff1d(stored, b.ids[b.informed], assume_unique=True)
        out.extend((s.lane.value, int(i)) for i in missing)
    return out


def coupled_dominance_run(params: ScenarioParams, budget: Budget, seed, *,
                          raise_on_violation: bool = True) -> CoupledReport:
    """Run vmimo and flooding in lockstep on identical traffic, checking set dominance.

    Both runs evaluate receivers and prune traffic relative to one shared
    anchor, the lagging head, so they see the same vehicles over the same
    window.  After every slot, each vehicle stored by both runs that flooding
    has informed must be informed under vmimo too.
    """
    t_v = TrafficField(params.lambda_r, params.lambda_f, seed)
    t_f = TrafficField(params.lambda_r, params.lambda_f, seed)
    sv, sf = initial_state(params, t_v), initial_state(params, t_f)
    n = budget.max_slots
    hv, hf = np.empty(n), np.empty(n)
    report = CoupledReport(hv, hf)
    for t in range(n):
        sv.anchor = sf.anchor = min(sv.head_position, sf.head_position)
        ensure_horizon(sv, params, t_v)
        ensure_horizon(sf, params, t_f)
        step_slot(sv, params, VMIMO)
        step_slot(sf, params, FLOODING)
        hv[t], hf[t] = sv.head_position, sf.head_position
        bad = _subset_violations(sf, sv)
        if bad:
            report.violations.extend((t, lane, vid) for lane, vid in bad)
            if raise_on_violation:
                raise DominanceViolationError(
                    f"slot {t}: flooding-only informed vehicles {bad}\n"
                    f"-- vmimo lanes --\n{dump_lanes(sv)}-- flooding lanes --\n{dump_lanes(sf)}")
    return report


# --------------------------------------------------------------------------- trace output

TRACE_HEADER = "slot,head_before,head_after,state,newly_informed"


def write_trace(result: RunResult, out: Union[str, os.PathLike, TextIO, None] = None) -> str:
    """Per-slot CSV trace ``slot,head_before,head_after,state,newly_informed``."""
    buf = io.StringIO()
    buf.write(TRACE_HEADER + "\n")
    for i, (b, a, s, k) in enumerate(zip(result.head_before, result.head_after,
                                         result.labels, result.newly_informed)):
        buf.write(f"{i},{b:.6f},{a:.6f},{Label(int(s)).name},{int(k)}\n")
    text = buf.getvalue()
    if out is None:
        return text
    if hasattr(out, "write"):
        out.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)
    return text
