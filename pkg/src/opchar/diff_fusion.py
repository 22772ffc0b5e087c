"""Quantifies operator fusion between a baseline trace and a fused trace.

Matching is a (classified name, count) multiset diff, never event alignment:
traces from different runtimes cannot be aligned event by event. The fusion
rate denominator is non-GEMM operator *instances* by default (matching the
latency framing); ``count_basis="types"`` switches to unique op types.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Mapping

from .breakdown import AttributionView, BreakdownReport, compute_breakdown
from .errors import EmptyBaseline, ModelMismatch
from .taxonomy import OperatorGroup, Ruleset, classify_events, is_sync_wait
from .trace_model import EventKind, Trace, build_event_trees

DEFAULT_DELIMITERS = ("+", "_fused_", "·")


@dataclass(frozen=True)
class PatternSplit:
    fused_with_gemm: int
    fused_with_nongemm: int
    fused_with_gemm_share: float | None
    no_delimiter: int
    latency_weighted_gemm_share: float | None


@dataclass(frozen=True)
class FusionReport:
    nongemm_fusion_rate: float
    gemm_speedup: float | None
    nongemm_speedup: float | None
    absorbed_ops: Mapping[str, int]
    pattern_split: PatternSplit
    before: BreakdownReport
    after: BreakdownReport
    count_basis: str


def nongemm_instance_counts(trace: Trace, ruleset: Ruleset) -> Counter:
    """Per-name counts of non-GEMM CPU-op instances (sync waits excluded)."""
    groups = classify_events(ruleset, trace)
    counts: Counter = Counter()
    for e in trace.events:
        if e.kind is not EventKind.CPU_OP:
            continue
        if groups[e.id] is OperatorGroup.GEMM or is_sync_wait(e.name):
            continue
        counts[e.name] += 1
    return counts


def check_same_model(a: Trace, b: Trace, force: bool) -> None:
    ma, mb = a.meta.get("model"), b.meta.get("model")
    if not force and ma is not None and mb is not None and ma != mb:
        raise ModelMismatch(f"traces profile different models: {ma!r} vs {mb!r} (pass force to override)")


def fusion_rate(baseline: Trace, fused: Trace, ruleset: Ruleset,
                count_basis: str = "instances",
                delimiters: tuple[str, ...] = DEFAULT_DELIMITERS,
                force: bool = False,
                view: AttributionView = AttributionView.COMBINED) -> FusionReport:
    """Fusion rate, per-supergroup speedups, and fused-pattern classification."""
    if count_basis not in ("instances", "types"):
        raise ValueError(f"count_basis must be 'instances' or 'types', got {count_basis!r}")
    check_same_model(baseline, fused, force)

    base_counts = nongemm_instance_counts(baseline, ruleset)
    fused_counts = nongemm_instance_counts(fused, ruleset)
    total_base = sum(base_counts.values())
    if total_base == 0:
        raise EmptyBaseline("baseline trace contains no non-GEMM operator instances")

    absorbed = {
        name: base_counts[name] - fused_counts.get(name, 0)
        for name in sorted(base_counts)
        if base_counts[name] > fused_counts.get(name, 0)
    }
    if count_basis == "instances":
        rate = sum(absorbed.values()) / total_base
    else:
        vanished = sum(1 for name in base_counts if fused_counts.get(name, 0) == 0)
        rate = vanished / len(base_counts)

    before = compute_breakdown(baseline, ruleset, view=view)
    after = compute_breakdown(fused, ruleset, view=view)
    gemm_speedup = before.gemm_us / after.gemm_us if after.gemm_us else None
    nongemm_speedup = before.nongemm_us / after.nongemm_us if after.nongemm_us else None

    return FusionReport(
        nongemm_fusion_rate=rate,
        gemm_speedup=gemm_speedup,
        nongemm_speedup=nongemm_speedup,
        absorbed_ops=absorbed,
        pattern_split=classify_fusion_patterns(fused, ruleset, delimiters),
        before=before,
        after=after,
        count_basis=count_basis,
    )


def classify_fusion_patterns(fused: Trace, ruleset: Ruleset,
                             token_delimiters: tuple[str, ...] = DEFAULT_DELIMITERS) -> PatternSplit:
    """Split ops whose names encode fused constituents by whether any constituent is GEMM.

    By-count split is primary; a latency-weighted share is reported alongside
    (self time for CPU ops, duration for kernels). Events without a delimiter
    are excluded from the split and counted separately.
    """
    tree = build_event_trees(fused)
    with_gemm = 0
    with_nongemm = 0
    no_delim = 0
    lat_gemm = 0
    lat_total = 0
    for eid, event in tree.events.items():
        name = event.name
        tokens = [name]
        hit = False
        for delim in token_delimiters:
            next_tokens = []
            for tok in tokens:
                if delim in tok:
                    hit = True
                    next_tokens.extend(t for t in tok.split(delim) if t)
                else:
                    next_tokens.append(tok)
            tokens = next_tokens
        if not hit:
            no_delim += 1
            continue
        weight = tree.self_time_us.get(eid, event.duration_us)
        any_gemm = any(ruleset.match(tok) is not None and ruleset.match(tok).group is OperatorGroup.GEMM
                       for tok in tokens)
        lat_total += weight
        if any_gemm:
            with_gemm += 1
            lat_gemm += weight
        else:
            with_nongemm += 1
    split_total = with_gemm + with_nongemm
    return PatternSplit(
        fused_with_gemm=with_gemm,
        fused_with_nongemm=with_nongemm,
        fused_with_gemm_share=with_gemm / split_total if split_total else None,
        no_delimiter=no_delim,
        latency_weighted_gemm_share=lat_gemm / lat_total if lat_total else None,
    )
