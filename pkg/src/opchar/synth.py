"""Deterministic synthetic-trace generator with exactly known aggregates.

Traces produced here classify (under the builtin rules) into the requested
per-group latency totals and op counts with zero error, which makes them the
ground truth for every aggregate the analyses compute. Latency partitioning
uses largest-remainder allocation so per-op durations sum exactly to the
group target; the seed only permutes layout, never aggregates.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import InfeasibleSpec, MalformedJson
from .taxonomy import OperatorGroup, parse_group
from .trace_model import EventKind, OperatorEvent, Trace

DEFAULT_NAME_POOLS: dict[OperatorGroup, tuple[str, ...]] = {
    OperatorGroup.GEMM: (
        "aten::linear", "aten::addmm", "aten::bmm", "aten::conv2d",
        "volta_sgemm_128x64", "aten::matmul",
    ),
    OperatorGroup.NORMALIZATION: (
        "aten::layer_norm", "aten::batch_norm", "aten::group_norm", "aten::rms_norm",
    ),
    OperatorGroup.ACTIVATION: (
        "aten::relu", "aten::gelu", "aten::silu", "aten::sigmoid", "aten::tanh",
    ),
    OperatorGroup.MEMORY: (
        "aten::reshape", "aten::view", "aten::transpose", "aten::permute",
        "aten::cat", "aten::contiguous", "aten::copy_", "aten::expand",
        "aten::slice", "aten::gather",
    ),
    OperatorGroup.ELEMENTWISE_ARITHMETIC: (
        "aten::add", "aten::mul", "aten::div", "aten::sub", "aten::pow",
        "aten::where", "aten::nonzero",
    ),
    OperatorGroup.ROI_SELECTION: (
        "torchvision::nms", "torchvision::roi_align", "torchvision::roi_pool",
    ),
    OperatorGroup.LOGIT_COMPUTATION: ("aten::softmax", "aten::log_softmax"),
    OperatorGroup.SSM_SPECIFIC: (
        "selective_scan_fn", "causal_conv1d_fn", "mamba_inner_fn",
        "mamba_split_conv1d_scan_combined_fn",
    ),
    OperatorGroup.UNCATEGORIZED: ("custom::opaque_op",),
}


@dataclass(frozen=True)
class GroupTarget:
    total_us: int
    op_count: int


@dataclass(frozen=True)
class PhasePlan:
    prefill_us: int
    decode_tokens: int
    decode_gap_us: int


@dataclass(frozen=True)
class FusedPlan:
    """Absorption plan for the fused counterpart trace.

    ``absorb`` removes that many instances of each named op; remaining GEMM /
    non-GEMM latencies are re-partitioned to the explicit totals (defaulting
    to the baseline totals). ``fused_ops`` injects replacement fused kernels,
    e.g. {"Conv+BN+ReLU": GroupTarget(...)}.
    """

    absorb: Mapping[str, int] = field(default_factory=dict)
    gemm_total_us: int | None = None
    nongemm_total_us: int | None = None
    fused_ops: Mapping[str, GroupTarget] = field(default_factory=dict)


@dataclass(frozen=True)
class QuantPlan:
    """Added-operator plan for the quantized counterpart trace."""

    add: Mapping[str, int] = field(default_factory=dict)
    gemm_total_us: int | None = None
    nongemm_total_us: int | None = None


@dataclass(frozen=True)
class SynthSpec:
    seed: int
    groups: Mapping[OperatorGroup, GroupTarget]
    nesting_depth: int = 1
    phases: PhasePlan | None = None
    fused_variant: FusedPlan | None = None
    quant_variant: QuantPlan | None = None
    name_pools: Mapping[OperatorGroup, tuple[str, ...]] = field(default_factory=dict)
    meta: Mapping[str, str | int] = field(default_factory=dict)

    def pool(self, group: OperatorGroup) -> tuple[str, ...]:
        pool = self.name_pools.get(group) or DEFAULT_NAME_POOLS[group]
        if not pool:
            raise InfeasibleSpec(f"empty name pool for group {group.value}")
        return pool


@dataclass(frozen=True)
class SynthResult:
    trace: Trace
    fused: Trace | None = None
    quantized: Trace | None = None


def partition_exact(total: int, count: int) -> list[int]:
    """Split ``total`` into ``count`` non-negative ints summing exactly to it."""
    if count == 0:
        if total != 0:
            raise InfeasibleSpec(f"cannot distribute {total}us across 0 ops")
        return []
    base, rem = divmod(total, count)
    return [base + 1] * rem + [base] * (count - rem)


def _instances_for(spec: SynthSpec) -> list[tuple[str, OperatorGroup]]:
    """Deterministic (name, group) multiset realizing the per-group counts."""
    out: list[tuple[str, OperatorGroup]] = []
    for group in OperatorGroup:
        target = spec.groups.get(group)
        if target is None:
            continue
        if target.op_count < 0 or target.total_us < 0:
            raise InfeasibleSpec(f"negative target for {group.value}")
        if target.op_count == 0 and target.total_us > 0:
            raise InfeasibleSpec(f"{group.value}: nonzero latency with zero ops")
        pool = spec.pool(group)
        for i in range(target.op_count):
            out.append((pool[i % len(pool)], group))
    return out


def instance_counts(spec: SynthSpec) -> dict[str, int]:
    """Per-name instance counts the generator will emit, by construction."""
    counts: dict[str, int] = {}
    for name, _ in _instances_for(spec):
        counts[name] = counts.get(name, 0) + 1
    return counts


def absorption_plan(spec: SynthSpec, total_absorbed: int) -> dict[str, int]:
    """Distribute an absorption budget over the spec's non-GEMM instance names."""
    counts = [
        (name, n)
        for name, n in sorted(instance_counts(spec).items())
        if _name_group(spec, name) is not OperatorGroup.GEMM
    ]
    available = sum(n for _, n in counts)
    if total_absorbed > available:
        raise InfeasibleSpec(f"cannot absorb {total_absorbed} of {available} non-GEMM instances")
    plan: dict[str, int] = {}
    remaining = total_absorbed
    for name, n in counts:
        take = min(n, remaining)
        if take:
            plan[name] = take
        remaining -= take
    return plan


def _name_group(spec: SynthSpec, name: str) -> OperatorGroup:
    for group in OperatorGroup:
        if spec.groups.get(group) and name in spec.pool(group):
            return group
    raise InfeasibleSpec(f"name {name!r} not drawn from any active pool")


def _layout(instances: list[tuple[str, OperatorGroup, int]], nesting_depth: int,
            rng: random.Random, phases: PhasePlan | None,
            meta: Mapping[str, str | int]) -> Trace:
    """Place instances on one track, chaining same-group runs into nests."""
    order = list(instances)
    rng.shuffle(order)
    events: list[OperatorEvent] = []
    cursor = 0
    next_id = 1
    depth_cap = max(1, nesting_depth)
    i = 0
    while i < len(order):
        group = order[i][1]
        j = i
        while j < len(order) and j - i < depth_cap and order[j][1] is group:
            j += 1
        chain = order[i:j]
        # outermost first: each event contains the next, self time = own share
        tail_total = sum(d for _, _, d in chain)
        start = cursor
        parent_id: int | None = None
        for name, _, self_us in chain:
            dur = tail_total
            events.append(OperatorEvent(
                id=next_id, name=name, kind=EventKind.CPU_OP,
                start_us=start, duration_us=dur, track=(1, 1), parent_id=parent_id,
            ))
            parent_id = next_id
            next_id += 1
            start += self_us  # child occupies the tail of the parent interval
            tail_total -= self_us
        cursor += sum(d for _, _, d in chain) + 1
        i = j
    if phases is not None:
        events.append(OperatorEvent(
            id=next_id, name="prefill", kind=EventKind.MARKER,
            start_us=0, duration_us=phases.prefill_us, track=(1, 2),
        ))
        next_id += 1
        for t in range(phases.decode_tokens):
            events.append(OperatorEvent(
                id=next_id, name="decode", kind=EventKind.MARKER,
                start_us=phases.prefill_us + t * phases.decode_gap_us,
                duration_us=0, track=(1, 2),
            ))
            next_id += 1
    return Trace(events=tuple(events), meta=dict(meta))


def _durations(instances: list[tuple[str, OperatorGroup]], totals: Mapping[OperatorGroup, int],
               rng: random.Random) -> list[tuple[str, OperatorGroup, int]]:
    by_group: dict[OperatorGroup, list[int]] = {}
    out: list[tuple[str, OperatorGroup, int]] = []
    counts: dict[OperatorGroup, int] = {}
    for _, g in instances:
        counts[g] = counts.get(g, 0) + 1
    for g, n in counts.items():
        durs = partition_exact(totals.get(g, 0), n)
        rng.shuffle(durs)
        by_group[g] = durs
    cursor: dict[OperatorGroup, int] = {g: 0 for g in by_group}
    for name, g in instances:
        out.append((name, g, by_group[g][cursor[g]]))
        cursor[g] += 1
    return out


def generate(spec: SynthSpec) -> SynthResult:
    """Generate the trace (and counterparts) realizing the spec exactly."""
    instances = _instances_for(spec)
    totals = {g: t.total_us for g, t in spec.groups.items()}
    rng = random.Random(spec.seed)
    timed = _durations(instances, totals, rng)
    trace = _layout(timed, spec.nesting_depth, rng, spec.phases, spec.meta)

    fused = None
    if spec.fused_variant is not None:
        fused = _fused_trace(spec, instances)
    quantized = None
    if spec.quant_variant is not None:
        quantized = _quant_trace(spec, instances)
    return SynthResult(trace=trace, fused=fused, quantized=quantized)


def _supergroup_totals(spec: SynthSpec) -> tuple[int, int]:
    gemm = spec.groups.get(OperatorGroup.GEMM, GroupTarget(0, 0)).total_us
    nongemm = sum(t.total_us for g, t in spec.groups.items() if g is not OperatorGroup.GEMM)
    return gemm, nongemm


def _fused_trace(spec: SynthSpec, instances: list[tuple[str, OperatorGroup]]) -> Trace:
    plan = spec.fused_variant
    assert plan is not None
    counts = instance_counts(spec)
    for name, n in plan.absorb.items():
        if n < 0 or n > counts.get(name, 0):
            raise InfeasibleSpec(f"absorb {n} x {name!r} exceeds generated count {counts.get(name, 0)}")
    taken: dict[str, int] = dict(plan.absorb)
    kept: list[tuple[str, OperatorGroup]] = []
    for name, group in instances:
        if taken.get(name, 0) > 0:
            taken[name] -= 1
        else:
            kept.append((name, group))

    base_gemm, base_nongemm = _supergroup_totals(spec)
    gemm_total = plan.gemm_total_us if plan.gemm_total_us is not None else base_gemm
    nongemm_total = plan.nongemm_total_us if plan.nongemm_total_us is not None else base_nongemm

    gemm_instances = [(n, g) for n, g in kept if g is OperatorGroup.GEMM]
    nongemm_instances = [(n, g) for n, g in kept if g is not OperatorGroup.GEMM]
    rng = random.Random(spec.seed + 1)
    timed = _partition_supergroup(gemm_instances, gemm_total, rng)
    timed += _partition_supergroup(nongemm_instances, nongemm_total, rng)
    for name, target in sorted(plan.fused_ops.items()):
        durs = partition_exact(target.total_us, target.op_count)
        timed += [(name, OperatorGroup.UNCATEGORIZED, d) for d in durs]
    meta = dict(spec.meta)
    meta["variant"] = "fused"
    return _layout(timed, spec.nesting_depth, rng, None, meta)


def _quant_trace(spec: SynthSpec, instances: list[tuple[str, OperatorGroup]]) -> Trace:
    plan = spec.quant_variant
    assert plan is not None
    base_gemm, base_nongemm = _supergroup_totals(spec)
    gemm_total = plan.gemm_total_us if plan.gemm_total_us is not None else base_gemm
    nongemm_total = plan.nongemm_total_us if plan.nongemm_total_us is not None else base_nongemm

    combined = list(instances)
    for name, n in sorted(plan.add.items()):
        if n < 0:
            raise InfeasibleSpec(f"negative added count for {name!r}")
        combined += [(name, OperatorGroup.ELEMENTWISE_ARITHMETIC)] * n
    gemm_instances = [(n, g) for n, g in combined if g is OperatorGroup.GEMM]
    nongemm_instances = [(n, g) for n, g in combined if g is not OperatorGroup.GEMM]
    rng = random.Random(spec.seed + 2)
    timed = _partition_supergroup(gemm_instances, gemm_total, rng)
    timed += _partition_supergroup(nongemm_instances, nongemm_total, rng)
    meta = dict(spec.meta)
    meta["variant"] = "quantized"
    return _layout(timed, spec.nesting_depth, rng, None, meta)


def _partition_supergroup(instances: list[tuple[str, OperatorGroup]], total: int,
                          rng: random.Random) -> list[tuple[str, OperatorGroup, int]]:
    if not instances:
        if total > 0:
            raise InfeasibleSpec(f"cannot distribute {total}us across 0 remaining ops")
        return []
    durs = partition_exact(total, len(instances))
    rng.shuffle(durs)
    return [(name, g, d) for (name, g), d in zip(instances, durs)]


def spec_to_dict(spec: SynthSpec) -> dict:
    doc: dict = {
        "seed": spec.seed,
        "groups": {g.value: {"total_us": t.total_us, "op_count": t.op_count}
                   for g, t in spec.groups.items()},
        "nesting_depth": spec.nesting_depth,
    }
    if spec.phases:
        doc["phases"] = {"prefill_us": spec.phases.prefill_us,
                         "decode_tokens": spec.phases.decode_tokens,
                         "decode_gap_us": spec.phases.decode_gap_us}
    if spec.fused_variant:
        fv = spec.fused_variant
        doc["fused_variant"] = {
            "absorb": dict(fv.absorb),
            "gemm_total_us": fv.gemm_total_us,
            "nongemm_total_us": fv.nongemm_total_us,
            "fused_ops": {n: {"total_us": t.total_us, "op_count": t.op_count}
                          for n, t in fv.fused_ops.items()},
        }
    if spec.quant_variant:
        qv = spec.quant_variant
        doc["quant_variant"] = {"add": dict(qv.add),
                                "gemm_total_us": qv.gemm_total_us,
                                "nongemm_total_us": qv.nongemm_total_us}
    if spec.name_pools:
        doc["name_pools"] = {g.value: list(p) for g, p in spec.name_pools.items()}
    if spec.meta:
        doc["meta"] = dict(spec.meta)
    return doc


def spec_from_dict(doc: dict) -> SynthSpec:
    try:
        groups = {parse_group(k): GroupTarget(int(v["total_us"]), int(v["op_count"]))
                  for k, v in doc.get("groups", {}).items()}
        phases = None
        if doc.get("phases"):
            p = doc["phases"]
            phases = PhasePlan(int(p["prefill_us"]), int(p["decode_tokens"]), int(p["decode_gap_us"]))
        fused = None
        if doc.get("fused_variant"):
            f = doc["fused_variant"]
            fused = FusedPlan(
                absorb={str(k): int(v) for k, v in f.get("absorb", {}).items()},
                gemm_total_us=None if f.get("gemm_total_us") is None else int(f["gemm_total_us"]),
                nongemm_total_us=None if f.get("nongemm_total_us") is None else int(f["nongemm_total_us"]),
                fused_ops={str(k): GroupTarget(int(v["total_us"]), int(v["op_count"]))
                           for k, v in f.get("fused_ops", {}).items()},
            )
        quant = None
        if doc.get("quant_variant"):
            q = doc["quant_variant"]
            quant = QuantPlan(
                add={str(k): int(v) for k, v in q.get("add", {}).items()},
                gemm_total_us=None if q.get("gemm_total_us") is None else int(q["gemm_total_us"]),
                nongemm_total_us=None if q.get("nongemm_total_us") is None else int(q["nongemm_total_us"]),
            )
        pools = {parse_group(k): tuple(v) for k, v in doc.get("name_pools", {}).items()}
        return SynthSpec(
            seed=int(doc.get("seed", 0)),
            groups=groups,
            nesting_depth=int(doc.get("nesting_depth", 1)),
            phases=phases,
            fused_variant=fused,
            quant_variant=quant,
            name_pools=pools,
            meta=dict(doc.get("meta", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InfeasibleSpec(f"bad synth spec: {exc}") from exc


def load_spec(path: str | Path) -> SynthSpec:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InfeasibleSpec(f"cannot read synth spec {path}: {exc}") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedJson(f"{path}: {exc}") from exc
    return spec_from_dict(doc)
