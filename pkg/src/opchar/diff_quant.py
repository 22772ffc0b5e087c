"""Quantifies how quantization shifts the GEMM/non-GEMM latency horizon.

Dequantize/requantize (DQRQ) detection is name-based: trace graphs carry no
structural positions, so the common quantize/dequantize spellings ship as
rules and users can extend them. Latency ratios are reported quantized over
baseline so "reduced by 38.2%" reads as ratio 0.618.
"""

from __future__ import annotations

from dataclasses import dataclass

from .breakdown import AttributionView, BreakdownReport, compute_breakdown
from .errors import DuplicateSeqLen, EmptyBaseline, UsageError
from .diff_fusion import check_same_model, nongemm_instance_counts
from .taxonomy import OperatorGroup, Ruleset, is_dqrq
from .trace_model import EventKind, Trace


@dataclass(frozen=True)
class QuantReport:
    added_nongemm_ops: int
    added_nongemm_ratio: float           # added / baseline instance count
    dqrq_ops: int
    gemm_latency_ratio: float | None     # quantized / baseline
    nongemm_latency_ratio: float | None  # quantized / baseline
    before: BreakdownReport
    after: BreakdownReport
    seq_series: tuple[tuple[int, float], ...] | None = None

    # both directions printed so "reduced by 38.2%" and "ratio 0.618" never
    # get sign-confused
    @property
    def gemm_reduction_percent(self) -> float | None:
        return None if self.gemm_latency_ratio is None else 100.0 * (1.0 - self.gemm_latency_ratio)

    @property
    def gemm_speedup(self) -> float | None:
        if not self.gemm_latency_ratio:
            return None
        return 1.0 / self.gemm_latency_ratio

    @property
    def nongemm_slowdown_percent(self) -> float | None:
        if self.nongemm_latency_ratio is None:
            return None
        return 100.0 * (self.nongemm_latency_ratio - 1.0)


def quant_diff(baseline: Trace, quantized: Trace, ruleset: Ruleset,
               force: bool = False,
               view: AttributionView = AttributionView.COMBINED,
               seq_points: list[tuple[int, Trace]] | None = None) -> QuantReport:
    """Added non-GEMM operators, DQRQ count, and supergroup latency ratios.

    ``seq_points`` optionally attaches a per-sequence-length series of the
    element-wise arithmetic share to the report.
    """
    check_same_model(baseline, quantized, force)
    base_counts = nongemm_instance_counts(baseline, ruleset)
    quant_counts = nongemm_instance_counts(quantized, ruleset)
    base_total = sum(base_counts.values())
    if base_total == 0:
        raise EmptyBaseline("baseline trace contains no non-GEMM operator instances")
    added = max(0, sum(quant_counts.values()) - base_total)
    dqrq = sum(1 for e in quantized.events if e.kind is EventKind.CPU_OP and is_dqrq(e.name))

    before = compute_breakdown(baseline, ruleset, view=view)
    after = compute_breakdown(quantized, ruleset, view=view)
    gemm_ratio = after.gemm_us / before.gemm_us if before.gemm_us else None
    nongemm_ratio = after.nongemm_us / before.nongemm_us if before.nongemm_us else None
    series = None
    if seq_points is not None:
        series = seq_scaling_series(seq_points, ruleset,
                                    OperatorGroup.ELEMENTWISE_ARITHMETIC, view=view)
    return QuantReport(
        added_nongemm_ops=added, added_nongemm_ratio=added / base_total,
        dqrq_ops=dqrq,
        gemm_latency_ratio=gemm_ratio, nongemm_latency_ratio=nongemm_ratio,
        before=before, after=after, seq_series=series,
    )


def seq_scaling_series(traces: list[tuple[int, Trace]], ruleset: Ruleset,
                       group: OperatorGroup,
                       view: AttributionView = AttributionView.COMBINED) -> tuple[tuple[int, float], ...]:
    """Per-sequence-length share of total latency spent in one operator group."""
    if len(traces) < 2:
        raise UsageError("seq_scaling_series needs at least 2 (seq_len, trace) points")
    seen: set[int] = set()
    for seq_len, _ in traces:
        if seq_len in seen:
            raise DuplicateSeqLen(f"duplicate sequence length {seq_len}")
        seen.add(seq_len)
    points = []
    for seq_len, trace in sorted(traces, key=lambda p: p[0]):
        report = compute_breakdown(trace, ruleset, view=view)
        points.append((seq_len, report.percent(group)))
    return tuple(points)
