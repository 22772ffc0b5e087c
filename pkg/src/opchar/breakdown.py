"""Aggregates classified self-times into latency breakdowns and phase metrics.

Attribution basis: CPU time is *self* time (duration minus nested children),
so wrapper ops never double-count. GPU kernel time is attributed to the
launching operator's group and, in the combined view, added on top of CPU
self time even where the two overlap in wall time; combined totals can
therefore exceed wall-clock and reports flag them as additive.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from .errors import ViewMismatch
from .taxonomy import OperatorGroup, Ruleset, classify_events, is_sync_wait
from .trace_model import EventKind, Trace, build_event_trees, total_energy_joules

logger = logging.getLogger(__name__)


class AttributionView(Enum):
    CPU_ONLY = "cpu"
    GPU_ONLY = "gpu"
    COMBINED = "combined"


@dataclass(frozen=True)
class GroupStat:
    latency_us: int
    percent: float
    op_count: int


@dataclass(frozen=True)
class TopOp:
    name: str
    group: OperatorGroup
    latency_us: int
    percent: float


@dataclass(frozen=True)
class PhaseMetrics:
    ttft_us: int
    tpot_us: float | None
    decode_throughput_tok_per_s: float | None
    e2e_throughput_tok_per_s: float | None
    n_decode_tokens: int
    energy_j: float | None


@dataclass(frozen=True)
class BreakdownReport:
    view: AttributionView
    total_us: int
    per_group: Mapping[OperatorGroup, GroupStat]
    top_nongemm: tuple[TopOp, ...]
    sync_wait_us: int = 0
    sync_wait_count: int = 0
    phase_metrics: PhaseMetrics | None = None
    meta: Mapping[str, str | int] = field(default_factory=dict)

    def latency(self, group: OperatorGroup) -> int:
        stat = self.per_group.get(group)
        return stat.latency_us if stat else 0

    def percent(self, group: OperatorGroup) -> float:
        stat = self.per_group.get(group)
        return stat.percent if stat else 0.0

    @property
    def gemm_us(self) -> int:
        return self.latency(OperatorGroup.GEMM)

    @property
    def nongemm_us(self) -> int:
        return self.total_us - self.gemm_us

    @property
    def nongemm_percent(self) -> float:
        return 100.0 * self.nongemm_us / self.total_us if self.total_us else 0.0


def compute_breakdown(trace: Trace, ruleset: Ruleset, view: AttributionView = AttributionView.COMBINED,
                      k: int = 10, include_phases: bool = False) -> BreakdownReport:
    """Per-group latency totals, percentages and the k most expensive non-GEMM ops."""
    if k < 1:
        from .errors import UsageError
        raise UsageError(f"top-k must be >= 1, got {k}")
    tree = build_event_trees(trace)
    groups = classify_events(ruleset, trace)

    lat_group: dict[OperatorGroup, int] = {}
    cnt_group: dict[OperatorGroup, int] = {}
    lat_name: dict[tuple[str, OperatorGroup], int] = {}
    cnt_name: dict[tuple[str, OperatorGroup], int] = {}
    sync_us = 0
    sync_cnt = 0

    def bump(name: str, group: OperatorGroup, us: int, n: int) -> None:
        lat_group[group] = lat_group.get(group, 0) + us
        cnt_group[group] = cnt_group.get(group, 0) + n
        key = (name, group)
        lat_name[key] = lat_name.get(key, 0) + us
        cnt_name[key] = cnt_name.get(key, 0) + n

    owner_of = {kid: op_id for op_id, kids in tree.kernels_of.items() for kid in kids}

    for eid, event in tree.events.items():
        group = groups[eid]
        if event.kind is EventKind.CPU_OP:
            if view is AttributionView.GPU_ONLY:
                continue
            us = tree.self_time_us[eid]
            bump(event.name, group, us, 1)
            if is_sync_wait(event.name):
                sync_us += us
                sync_cnt += 1
        elif event.kind is EventKind.GPU_KERNEL:
            if view is AttributionView.CPU_ONLY:
                continue
            owner = owner_of.get(eid)
            if view is AttributionView.GPU_ONLY or owner is None:
                bump(event.name, group, event.duration_us, 1)
                if is_sync_wait(event.name):
                    sync_us += event.duration_us
                    sync_cnt += 1
            else:
                # combined: device time flows to the owning op's name but stays
                # in the kernel's group, keeping per-group view additivity exact
                bump(tree.events[owner].name, group, event.duration_us, 0)

    total = sum(lat_group.values())
    per_group = {
        g: GroupStat(lat_group[g], 100.0 * lat_group[g] / total if total else 0.0, cnt_group.get(g, 0))
        for g in OperatorGroup if g in lat_group
    }

    candidates = [
        (name, group, us) for (name, group), us in lat_name.items()
        if group is not OperatorGroup.GEMM and not is_sync_wait(name)
    ]
    candidates.sort(key=lambda item: (-item[2], -cnt_name[(item[0], item[1])], item[0]))
    top = tuple(
        TopOp(name, group, us, 100.0 * us / total if total else 0.0)
        for name, group, us in candidates[:k]
    )

    phases = compute_phase_metrics(trace) if include_phases else None
    return BreakdownReport(
        view=view, total_us=total, per_group=per_group, top_nongemm=top,
        sync_wait_us=sync_us, sync_wait_count=sync_cnt,
        phase_metrics=phases, meta=dict(trace.meta),
    )


def compute_phase_metrics(trace: Trace, prefill_pattern: str = r"(?i)prefill",
                          decode_pattern: str = r"(?i)decode") -> PhaseMetrics | None:
    """Generation-phase metrics from phase marker events.

    TTFT is the end of the first prefill span relative to trace start; TPOT is
    the mean gap between consecutive decode-token markers (marker time = event
    start, so both instant markers and spans work).
    """
    if not trace.events:
        logger.warning("phase metrics requested on an empty trace")
        return None
    prefill_re = re.compile(prefill_pattern)
    decode_re = re.compile(decode_pattern)
    prefills = sorted((e for e in trace.events if prefill_re.search(e.name)),
                      key=lambda e: (e.start_us, e.id))
    if not prefills:
        logger.warning("no events match prefill pattern %r; phase metrics unavailable", prefill_pattern)
        return None
    first = prefills[0]
    window_end = prefills[1].start_us if len(prefills) > 1 else None
    trace_start = min(e.start_us for e in trace.events)
    ttft_us = first.end_us - trace_start

    times = sorted(
        e.start_us for e in trace.events
        if decode_re.search(e.name) and e.start_us >= first.end_us
        and (window_end is None or e.start_us < window_end)
    )
    n = len(times)
    tpot = (times[-1] - times[0]) / (n - 1) if n >= 2 else None
    decode_tps = 1e6 / tpot if tpot else None
    e2e_tps = None
    if n >= 1 and times[-1] > trace_start:
        e2e_tps = n / ((times[-1] - trace_start) / 1e6)
    return PhaseMetrics(
        ttft_us=ttft_us, tpot_us=tpot,
        decode_throughput_tok_per_s=decode_tps,
        e2e_throughput_tok_per_s=e2e_tps,
        n_decode_tokens=n,
        energy_j=total_energy_joules(trace),
    )


@dataclass(frozen=True)
class GroupDelta:
    label: str
    a_latency_us: int
    b_latency_us: int
    latency_ratio: float | None  # a / b
    a_percent: float
    b_percent: float
    delta_points: float  # b - a


@dataclass(frozen=True)
class BreakdownComparison:
    rows: tuple[GroupDelta, ...]
    total_speedup: float | None  # a_total / b_total


def compare_breakdowns(a: BreakdownReport, b: BreakdownReport) -> BreakdownComparison:
    """Per-group ratios and percent-point deltas between two reports (a vs b)."""
    if a.view is not b.view:
        raise ViewMismatch(f"cannot compare {a.view.value} report against {b.view.value} report")

    def row(label: str, a_us: int, b_us: int, a_pct: float, b_pct: float) -> GroupDelta:
        ratio = a_us / b_us if b_us else None
        return GroupDelta(label, a_us, b_us, ratio, a_pct, b_pct, b_pct - a_pct)

    rows = []
    for g in OperatorGroup:
        if g in a.per_group or g in b.per_group:
            rows.append(row(g.value, a.latency(g), b.latency(g), a.percent(g), b.percent(g)))
    rows.append(row("nongemm", a.nongemm_us, b.nongemm_us, a.nongemm_percent, b.nongemm_percent))
    rows.append(row("total", a.total_us, b.total_us,
                    100.0 if a.total_us else 0.0, 100.0 if b.total_us else 0.0))
    speedup = a.total_us / b.total_us if b.total_us else None
    return BreakdownComparison(rows=tuple(rows), total_speedup=speedup)
