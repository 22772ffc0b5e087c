"""Normalized in-memory trace model shared by all analyses.

Timestamps and durations are integer microseconds (the native unit of the
Chrome trace format) so self-time accounting stays exact. Traces and event
trees are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .errors import ChildEscapesParent, DanglingParentId, InvalidTrace, OverlappingSiblings

Track = tuple[int, int]  # (process id, thread-or-stream id)


class EventKind(Enum):
    CPU_OP = "cpu"
    GPU_KERNEL = "gpu"
    MARKER = "marker"
    COUNTER_SAMPLE = "counter"


@dataclass(frozen=True)
class OperatorEvent:
    """One timed operator/kernel occurrence in a trace."""

    id: int
    name: str
    kind: EventKind
    start_us: int
    duration_us: int
    track: Track
    parent_id: int | None = None
    correlation_id: int | None = None
    tensor_shapes: tuple[tuple[int, ...], ...] | None = None
    attrs: Mapping[str, str] = field(default_factory=dict)

    @property
    def end_us(self) -> int:
        return self.start_us + self.duration_us


@dataclass(frozen=True)
class Trace:
    """An ordered collection of events plus run metadata and power samples."""

    events: tuple[OperatorEvent, ...] = ()
    meta: Mapping[str, str | int] = field(default_factory=dict)
    energy_samples: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        seen: set[int] = set()
        for e in self.events:
            if e.id in seen:
                raise InvalidTrace(f"duplicate event id {e.id}")
            seen.add(e.id)
            if e.start_us < 0 or e.duration_us < 0:
                raise InvalidTrace(f"event {e.id} has negative start or duration")
        prev_ts = None
        for ts, watts in self.energy_samples:
            if watts < 0:
                raise InvalidTrace(f"negative power sample at t={ts}")
            if prev_ts is not None and ts < prev_ts:
                raise InvalidTrace("energy samples not sorted by timestamp")
            prev_ts = ts

    def event_by_id(self) -> dict[int, OperatorEvent]:
        return {e.id: e for e in self.events}


@dataclass(frozen=True)
class EventTree:
    """Per-track forests of CPU ops with self time computed per event.

    GPU kernels never enter the forests; they hang off their launching CPU op
    through ``kernels_of`` so device time can be attributed without touching
    CPU self time. Markers and counter samples are excluded entirely.
    """

    roots: Mapping[Track, tuple[int, ...]]
    children: Mapping[int, tuple[int, ...]]
    self_time_us: Mapping[int, int]
    kernels_of: Mapping[int, tuple[int, ...]]
    unattached_kernels: tuple[int, ...]
    events: Mapping[int, OperatorEvent]

    def subtree_ids(self, root_id: int) -> list[int]:
        out, stack = [], [root_id]
        while stack:
            nid = stack.pop()
            out.append(nid)
            stack.extend(self.children.get(nid, ()))
        return out


def build_event_trees(trace: Trace) -> EventTree:
    """Arrange CPU ops into nesting forests and compute self times.

    self_time = duration - sum of direct children durations, in exact integer
    microseconds. Deterministic and insensitive to input event ordering.
    """
    by_id = trace.event_by_id()
    cpu_ops = [e for e in trace.events if e.kind is EventKind.CPU_OP]
    kernels = [e for e in trace.events if e.kind is EventKind.GPU_KERNEL]

    dangling: list[tuple[int, int]] = []
    escapes: list[tuple[int, int]] = []
    roots: dict[Track, list[int]] = {}
    children: dict[int, list[int]] = {}
    for e in sorted(cpu_ops, key=lambda e: (e.track, e.start_us, -e.duration_us, e.id)):
        if e.parent_id is None:
            roots.setdefault(e.track, []).append(e.id)
            continue
        parent = by_id.get(e.parent_id)
        if parent is None:
            dangling.append((e.id, e.parent_id))
            continue
        if parent.kind is not EventKind.CPU_OP or parent.track != e.track:
            escapes.append((e.id, parent.id))
            continue
        if not (parent.start_us <= e.start_us and e.end_us <= parent.end_us):
            escapes.append((e.id, parent.id))
            continue
        children.setdefault(parent.id, []).append(e.id)
    if dangling:
        raise DanglingParentId(sorted(dangling))
    if escapes:
        raise ChildEscapesParent(sorted(escapes))

    self_time = {e.id: e.duration_us for e in cpu_ops}
    for pid, kids in children.items():
        self_time[pid] -= sum(by_id[k].duration_us for k in kids)

    launcher_by_corr: dict[int, int] = {}
    for e in cpu_ops:
        if e.correlation_id is not None:
            if e.correlation_id in launcher_by_corr:
                raise InvalidTrace(f"correlation id {e.correlation_id} used by more than one CPU op")
            launcher_by_corr[e.correlation_id] = e.id
    kernels_of: dict[int, list[int]] = {}
    unattached: list[int] = []
    for k in sorted(kernels, key=lambda e: (e.start_us, e.id)):
        owner = launcher_by_corr.get(k.correlation_id) if k.correlation_id is not None else None
        if owner is None:
            unattached.append(k.id)
        else:
            kernels_of.setdefault(owner, []).append(k.id)

    return EventTree(
        roots={t: tuple(ids) for t, ids in sorted(roots.items())},
        children={p: tuple(c) for p, c in sorted(children.items())},
        self_time_us=self_time,
        kernels_of={p: tuple(k) for p, k in sorted(kernels_of.items())},
        unattached_kernels=tuple(unattached),
        events={e.id: e for e in cpu_ops + kernels},
    )


def check_sibling_overlap(trace: Trace) -> None:
    """Reject traces with overlapping sibling intervals on one track.

    Profilers emit properly nested durations; a partial overlap indicates a
    corrupt trace and is rejected with a diagnostic rather than clipped.
    """
    tree = build_event_trees(trace)
    by_id = tree.events

    def check_group(ids: Iterable[int]) -> None:
        ordered = sorted(ids, key=lambda i: (by_id[i].start_us, by_id[i].end_us, i))
        offenders = []
        for a, b in zip(ordered, ordered[1:]):
            if by_id[a].end_us > by_id[b].start_us:
                offenders.append((a, b))
        if offenders:
            raise OverlappingSiblings(offenders)

    for ids in tree.roots.values():
        check_group(ids)
    for ids in tree.children.values():
        check_group(ids)


def validate_trace(trace: Trace) -> EventTree:
    """Full structural validation: nesting links, containment, sibling overlap,
    and kernel correlations resolving to exactly one CPU op."""
    tree = build_event_trees(trace)
    check_sibling_overlap(trace)
    if tree.unattached_kernels:
        dangling = [
            k for k in tree.unattached_kernels
            if tree.events[k].correlation_id is not None
        ]
        if dangling:
            raise InvalidTrace(
                f"kernel correlation without a launching CPU op: events {dangling}")
    return tree


def total_energy_joules(trace: Trace) -> float | None:
    """Trapezoidal integral of sampled power over time, or None if not captured."""
    samples = trace.energy_samples
    if len(samples) < 2:
        return None
    joules = 0.0
    for (t0, w0), (t1, w1) in zip(samples, samples[1:]):
        joules += 0.5 * (w0 + w1) * (t1 - t0) / 1e6
    return joules
