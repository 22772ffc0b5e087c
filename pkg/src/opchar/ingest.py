"""Parsers for external profiler trace formats and the native JSONL format.

All parsers are pure bytes -> Trace functions: identical input bytes yield an
identical Trace, and every record in a file is either converted or counted in
the per-file skip summary (never silently dropped). Gzipped input is accepted
transparently.

Native format ("opchar/v1"): line 1 is {"schema":"opchar/v1","meta":{...}};
each following line is one event
{"id","name","kind","ts","dur","pid","tid","parent"?,"corr"?,"shapes"?,"attrs"}
with fixed field order, plus optional trailing {"energy":{"ts","w"}} lines.
Field order and sorted attr/meta keys make exports byte-deterministic.
"""

from __future__ import annotations

import bisect
import gzip
import json
import re
import zlib
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

from .errors import MalformedJson, SchemaVersionMismatch, UnrecognizedFormat
from .trace_model import EventKind, OperatorEvent, Trace, validate_trace

_GZIP_MAGIC = b"\x1f\x8b"
_FLOW_CORR_BASE = 1 << 62  # flow-derived correlation ids, clear of args-provided ones


class TraceFormat(Enum):
    CHROME_TRACE_EVENT = "chrome"
    ORT_PROFILE = "ort"
    NATIVE_JSONL = "native"


@dataclass
class IngestSummary:
    """Accounting for one parsed file: nothing drops silently."""

    converted: int = 0
    skipped: Counter = field(default_factory=Counter)
    noted: Counter = field(default_factory=Counter)
    warnings: list[str] = field(default_factory=list)

    def warn(self, message: str) -> None:
        self.warnings.append(message)

    def lines(self) -> list[str]:
        out = [f"converted {self.converted} events"]
        for reason, n in sorted(self.skipped.items()):
            out.append(f"skipped {n}: {reason}")
        for reason, n in sorted(self.noted.items()):
            out.append(f"noted {n}: {reason}")
        out.extend(self.warnings)
        return out


@dataclass(frozen=True)
class ChromeParseOptions:
    """Overridable predicates for event-kind detection (profilers differ)."""

    kernel_cat_pattern: str = r"(?i)kernel|gpu"
    device_track_pattern: str = r"(?i)stream\s*\d|\bgpu\b|\bcuda\b"
    power_counter_pattern: str = r"(?i)power|watt"
    # annotation spans (record_function phase markers) are markers, not ops;
    # checked before the kernel predicate so gpu_user_annotation stays a marker
    marker_cat_pattern: str = r"(?i)user_annotation"


def _decompress(raw: bytes) -> bytes:
    if raw[:2] == _GZIP_MAGIC:
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError, zlib.error) as exc:
            raise MalformedJson(f"bad gzip stream: {exc}") from exc
    return raw


def _loads(raw: bytes, what: str):
    try:
        return json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedJson(f"{what}: {exc}") from exc


def detect_format(raw: bytes) -> TraceFormat:
    """Map file content to exactly one accepted trace format."""
    raw = _decompress(raw)
    if not raw.strip():
        raise UnrecognizedFormat("empty input")
    first_line = raw.strip().split(b"\n", 1)[0]
    try:
        header = json.loads(first_line)
        if isinstance(header, dict) and header.get("schema") == "opchar/v1":
            return TraceFormat.NATIVE_JSONL
    except (json.JSONDecodeError, UnicodeDecodeError):
        pass
    try:
        doc = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError):
        excerpt = raw[:64].decode("utf-8", errors="replace")
        raise UnrecognizedFormat(f"not a recognized trace format; begins with: {excerpt!r}")
    if isinstance(doc, dict) and isinstance(doc.get("traceEvents"), list):
        return TraceFormat.CHROME_TRACE_EVENT
    if isinstance(doc, list):
        head = [e for e in doc[:50] if isinstance(e, dict)]
        for entry in head:
            args = entry.get("args")
            if entry.get("cat") in ("Node", "Session", "Kernel") and isinstance(args, dict) and "op_name" in args:
                return TraceFormat.ORT_PROFILE
        if any("ph" in e for e in head):
            return TraceFormat.CHROME_TRACE_EVENT
    excerpt = raw[:64].decode("utf-8", errors="replace")
    raise UnrecognizedFormat(f"not a recognized trace format; begins with: {excerpt!r}")


def parse(raw: bytes, fmt: TraceFormat | None = None,
          summary: IngestSummary | None = None,
          options: ChromeParseOptions | None = None) -> Trace:
    fmt = fmt or detect_format(raw)
    if fmt is TraceFormat.CHROME_TRACE_EVENT:
        return parse_chrome(raw, summary=summary, options=options)
    if fmt is TraceFormat.ORT_PROFILE:
        return parse_ort(raw, summary=summary)
    return parse_native(raw)


# ---------------------------------------------------------------------------
# Chrome Trace Event format
# ---------------------------------------------------------------------------

def _as_int_us(value) -> int:
    # Chrome traces occasionally carry fractional microseconds; storage is
    # integer microseconds, so round half away from zero deterministically.
    if isinstance(value, bool):
        raise MalformedJson(f"bad timestamp value {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        return int(value + 0.5) if value >= 0 else -int(-value + 0.5)
    raise MalformedJson(f"bad timestamp value {value!r}")


def _shapes_from(value) -> tuple[tuple[int, ...], ...] | None:
    if not isinstance(value, list):
        return None
    shapes = []
    for dims in value:
        if isinstance(dims, list) and all(isinstance(d, int) and not isinstance(d, bool) for d in dims):
            shapes.append(tuple(dims))
        else:
            return None
    return tuple(shapes)


def parse_chrome(raw: bytes, summary: IngestSummary | None = None,
                 options: ChromeParseOptions | None = None) -> Trace:
    """Parse Chrome Trace Event JSON (as exported e.g. by the PyTorch profiler)."""
    summary = summary if summary is not None else IngestSummary()
    options = options or ChromeParseOptions()
    try:
        kernel_cat = re.compile(options.kernel_cat_pattern)
        device_track = re.compile(options.device_track_pattern)
        power_name = re.compile(options.power_counter_pattern)
        marker_cat = re.compile(options.marker_cat_pattern)
    except re.error as exc:
        from .errors import BadPattern
        raise BadPattern(f"bad parse-option pattern: {exc}") from exc

    raw = _decompress(raw)
    doc = _loads(raw, "chrome trace")
    meta: dict[str, str | int] = {}
    if isinstance(doc, dict):
        records = doc.get("traceEvents")
        if not isinstance(records, list):
            raise MalformedJson("chrome trace: missing traceEvents array")
        for key, value in doc.items():
            if key != "traceEvents" and isinstance(value, (str, int)) and not isinstance(value, bool):
                meta[key] = value
    elif isinstance(doc, list):
        records = doc
    else:
        raise MalformedJson("chrome trace: top level must be an object or array")

    track_labels: dict[tuple[int, int], str] = {}
    process_labels: dict[int, str] = {}
    complete: list[dict] = []   # X or folded B/E, in file order
    instants: list[dict] = []
    counters: list[dict] = []
    flows: list[dict] = []
    be_stacks: dict[tuple[int, int], list[dict]] = {}

    for rec in records:
        if not isinstance(rec, dict):
            summary.skipped["non-object record"] += 1
            continue
        ph = rec.get("ph")
        pid = rec.get("pid", 0)
        tid = rec.get("tid", 0)
        if ph == "M":
            name = rec.get("name")
            args = rec.get("args") or {}
            label = args.get("name") or args.get("labels")
            try:
                if name in ("thread_name", "thread_sort_index") and isinstance(label, str):
                    track_labels[(_as_int_us(pid), _as_int_us(tid))] = label
                elif name in ("process_name", "process_labels") and isinstance(label, str):
                    process_labels[_as_int_us(pid)] = label
            except MalformedJson:
                summary.skipped["metadata event with bad pid/tid"] += 1
                continue
            summary.noted["metadata event"] += 1
        elif ph == "X":
            complete.append(rec)
        elif ph == "B":
            be_stacks.setdefault((pid, tid), []).append(rec)
        elif ph == "E":
            stack = be_stacks.get((pid, tid), [])
            if not stack:
                raise MalformedJson(f"chrome trace: unmatched 'E' event at ts={rec.get('ts')}")
            begin = stack.pop()
            folded = dict(begin)
            begin_ts = begin.get("ts", 0)
            end_ts = rec.get("ts", 0)
            if not isinstance(begin_ts, (int, float)) or not isinstance(end_ts, (int, float)):
                raise MalformedJson("chrome trace: B/E pair with non-numeric ts")
            folded["dur"] = end_ts - begin_ts
            complete.append(folded)
            summary.noted["begin/end pair folded"] += 1
        elif ph in ("i", "I", "R", "n"):
            instants.append(rec)
        elif ph == "C":
            counters.append(rec)
        elif ph in ("s", "t", "f"):
            if rec.get("cat") == "ac2g" or "bind_id" in rec or "id" in rec:
                flows.append(rec)
                summary.noted["flow event"] += 1
            else:
                summary.skipped["flow event without id"] += 1
        else:
            summary.skipped[f"unsupported phase {ph!r}"] += 1
    leftover = sum(len(s) for s in be_stacks.values())
    if leftover:
        raise MalformedJson(f"chrome trace: {leftover} unmatched 'B' event(s)")

    def is_device_track(pid: int, tid: int) -> bool:
        label = track_labels.get((pid, tid)) or process_labels.get(pid)
        return bool(label and device_track.search(label))

    events: list[OperatorEvent] = []
    next_id = 1
    corr_of: dict[int, int] = {}  # event id -> correlation
    for rec in complete:
        try:
            raw_ts = rec.get("ts", 0)
            raw_dur = rec.get("dur", 0)
            # round interval endpoints, not the width: monotone rounding
            # preserves containment for fractional-microsecond exports
            ts = _as_int_us(raw_ts)
            dur = _as_int_us(raw_ts + raw_dur) - ts if isinstance(raw_dur, (int, float)) \
                and not isinstance(raw_dur, bool) else _as_int_us(raw_dur)
            pid = _as_int_us(rec.get("pid", 0))
            tid = _as_int_us(rec.get("tid", 0))
        except (MalformedJson, TypeError):
            summary.skipped["record with bad ts/dur"] += 1
            continue
        if dur < 0:
            summary.skipped["record with negative duration"] += 1
            continue
        name = str(rec.get("name", ""))
        cat = rec.get("cat", "")
        args = rec.get("args") if isinstance(rec.get("args"), dict) else {}
        if isinstance(cat, str) and cat and marker_cat.search(cat):
            kind = EventKind.MARKER
        elif (isinstance(cat, str) and kernel_cat.search(cat)) or is_device_track(pid, tid):
            kind = EventKind.GPU_KERNEL
        else:
            kind = EventKind.CPU_OP
        attrs: dict[str, str] = {}
        if cat:
            attrs["cat"] = str(cat)
        shapes = _shapes_from(args.get("Input Dims"))
        corr = args.get("correlation", args.get("Correlation ID"))
        event = OperatorEvent(
            id=next_id, name=name, kind=kind, start_us=ts, duration_us=dur,
            track=(pid, tid), tensor_shapes=shapes, attrs=attrs,
        )
        if isinstance(corr, int) and not isinstance(corr, bool):
            corr_of[next_id] = corr
        events.append(event)
        next_id += 1
        summary.converted += 1

    for rec in instants:
        try:
            marker = OperatorEvent(
                id=next_id, name=str(rec.get("name", "")), kind=EventKind.MARKER,
                start_us=_as_int_us(rec.get("ts", 0)), duration_us=0,
                track=(_as_int_us(rec.get("pid", 0)), _as_int_us(rec.get("tid", 0))),
                attrs={"cat": str(rec["cat"])} if rec.get("cat") else {},
            )
        except MalformedJson:
            summary.skipped["instant with non-numeric pid/tid/ts"] += 1
            continue
        events.append(marker)
        next_id += 1
        summary.converted += 1

    energy: list[tuple[int, float]] = []
    for rec in counters:
        name = str(rec.get("name", ""))
        args = rec.get("args") if isinstance(rec.get("args"), dict) else {}
        numeric = [v for v in args.values() if isinstance(v, (int, float)) and not isinstance(v, bool)]
        try:
            if power_name.search(name) and numeric:
                energy.append((_as_int_us(rec.get("ts", 0)), float(numeric[0])))
                summary.converted += 1
            else:
                events.append(OperatorEvent(
                    id=next_id, name=name, kind=EventKind.COUNTER_SAMPLE,
                    start_us=_as_int_us(rec.get("ts", 0)), duration_us=0,
                    track=(_as_int_us(rec.get("pid", 0)), _as_int_us(rec.get("tid", 0))),
                    attrs={k: str(v) for k, v in args.items() if isinstance(v, (str, int, float))},
                ))
                next_id += 1
                summary.converted += 1
        except MalformedJson:
            summary.skipped["counter with non-numeric pid/tid/ts"] += 1

    events = _nest_by_containment(events, summary)
    events = _bind_flows(events, flows, corr_of, summary)
    events = _normalize_correlations(events, summary)
    trace = Trace(events=tuple(events), meta=meta, energy_samples=tuple(sorted(energy)))
    validate_trace(trace)
    return trace


def _nest_by_containment(events: list[OperatorEvent], summary: IngestSummary) -> list[OperatorEvent]:
    """Reconstruct CPU-op nesting per track from interval containment."""
    parent: dict[int, int] = {}
    by_track: dict[tuple[int, int], list[OperatorEvent]] = {}
    for e in events:
        if e.kind is EventKind.CPU_OP:
            by_track.setdefault(e.track, []).append(e)
    for track_events in by_track.values():
        track_events.sort(key=lambda e: (e.start_us, -e.duration_us, e.id))
        stack: list[OperatorEvent] = []
        for e in track_events:
            while stack and stack[-1].end_us <= e.start_us:
                stack.pop()
            if stack:
                top = stack[-1]
                if e.end_us <= top.end_us:
                    parent[e.id] = top.id
                else:
                    from .errors import OverlappingSiblings
                    raise OverlappingSiblings([(top.id, e.id)])
            stack.append(e)
    out = []
    for e in events:
        if e.id in parent:
            out.append(OperatorEvent(
                id=e.id, name=e.name, kind=e.kind, start_us=e.start_us,
                duration_us=e.duration_us, track=e.track, parent_id=parent[e.id],
                correlation_id=e.correlation_id, tensor_shapes=e.tensor_shapes, attrs=e.attrs,
            ))
        else:
            out.append(e)
    return out


def _bind_flows(events: list[OperatorEvent], flows: list[dict],
                corr_of: dict[int, int], summary: IngestSummary) -> list[OperatorEvent]:
    """Resolve launch->kernel flow pairs into correlation ids."""
    if flows:
        cpu_by_track: dict[tuple[int, int], list[OperatorEvent]] = {}
        kern_by_track: dict[tuple[int, int], list[OperatorEvent]] = {}
        for e in events:
            if e.kind is EventKind.CPU_OP:
                cpu_by_track.setdefault(e.track, []).append(e)
            elif e.kind is EventKind.GPU_KERNEL:
                kern_by_track.setdefault(e.track, []).append(e)
        for lst in cpu_by_track.values():
            lst.sort(key=lambda e: (e.start_us, -e.duration_us, e.id))
        for lst in kern_by_track.values():
            lst.sort(key=lambda e: (e.start_us, -e.duration_us, e.id))

        def locate(index: dict, pid, tid, ts) -> OperatorEvent | None:
            lane = index.get((pid, tid))
            if not lane:
                return None
            starts = [e.start_us for e in lane]
            pos = bisect.bisect_right(starts, ts)
            best = None
            for e in reversed(lane[:pos]):
                if e.end_us >= ts:
                    if best is None or e.start_us > best.start_us or (
                            e.start_us == best.start_us and e.duration_us < best.duration_us):
                        best = e
                elif best is not None and e.start_us < ts - 10_000_000:
                    break
            return best

        sources: dict[int, OperatorEvent] = {}
        sinks: dict[int, list[OperatorEvent]] = {}
        for rec in flows:
            flow_id = rec.get("id", rec.get("bind_id"))
            try:
                flow_id = int(flow_id)
                ts = _as_int_us(rec.get("ts", 0))
                pid = _as_int_us(rec.get("pid", 0))
                tid = _as_int_us(rec.get("tid", 0))
            except (MalformedJson, TypeError, ValueError):
                summary.skipped["flow with bad fields"] += 1
                continue
            if rec.get("ph") == "s":
                hit = locate(cpu_by_track, pid, tid, ts)
                if hit is not None:
                    sources[flow_id] = hit
                else:
                    summary.noted["flow start without enclosing op"] += 1
            else:
                hit = locate(kern_by_track, pid, tid, ts)
                if hit is not None:
                    sinks.setdefault(flow_id, []).append(hit)
                else:
                    summary.noted["flow end without kernel"] += 1
        for flow_id, src in sorted(sources.items()):
            kernels = sinks.get(flow_id)
            if not kernels:
                summary.noted["flow start without kernel side"] += 1
                continue
            corr = corr_of.get(src.id)
            if corr is None:
                corr = _FLOW_CORR_BASE + flow_id
                corr_of[src.id] = corr
            for k in kernels:
                corr_of.setdefault(k.id, corr)

    if not corr_of:
        return events
    return [
        OperatorEvent(
            id=e.id, name=e.name, kind=e.kind, start_us=e.start_us,
            duration_us=e.duration_us, track=e.track, parent_id=e.parent_id,
            correlation_id=corr_of.get(e.id, e.correlation_id),
            tensor_shapes=e.tensor_shapes, attrs=e.attrs,
        )
        for e in events
    ]


def _normalize_correlations(events: list[OperatorEvent], summary: IngestSummary) -> list[OperatorEvent]:
    """Enforce: a kernel correlation refers to exactly one CPU op."""
    cpu_corr_owner: dict[int, int] = {}
    drop_cpu: set[int] = set()
    for e in sorted(events, key=lambda e: (e.start_us, e.id)):
        if e.kind is EventKind.CPU_OP and e.correlation_id is not None:
            if e.correlation_id in cpu_corr_owner:
                drop_cpu.add(e.id)
                summary.noted["duplicate launch correlation cleared"] += 1
            else:
                cpu_corr_owner[e.correlation_id] = e.id
    out = []
    for e in events:
        if e.kind is EventKind.CPU_OP and e.id in drop_cpu:
            out.append(_with_corr(e, None))
        elif e.kind is EventKind.GPU_KERNEL and e.correlation_id is not None \
                and e.correlation_id not in cpu_corr_owner:
            summary.noted["kernel correlation without launcher cleared"] += 1
            out.append(_with_corr(e, None))
        else:
            out.append(e)
    return out


def _with_corr(e: OperatorEvent, corr: int | None) -> OperatorEvent:
    return OperatorEvent(
        id=e.id, name=e.name, kind=e.kind, start_us=e.start_us,
        duration_us=e.duration_us, track=e.track, parent_id=e.parent_id,
        correlation_id=corr, tensor_shapes=e.tensor_shapes, attrs=e.attrs,
    )


# ---------------------------------------------------------------------------
# ONNX Runtime execution-provider profiles
# ---------------------------------------------------------------------------

def parse_ort(raw: bytes, summary: IngestSummary | None = None) -> Trace:
    """Parse an ONNX Runtime profiling JSON array."""
    summary = summary if summary is not None else IngestSummary()
    raw = _decompress(raw)
    doc = _loads(raw, "ort profile")
    if isinstance(doc, dict) and isinstance(doc.get("traceEvents"), list):
        doc = doc["traceEvents"]
    if not isinstance(doc, list):
        raise MalformedJson("ort profile: top level must be a JSON array")

    events: list[OperatorEvent] = []
    next_id = 1
    for rec in doc:
        if not isinstance(rec, dict):
            summary.skipped["non-object record"] += 1
            continue
        cat = rec.get("cat")
        if cat not in ("Node", "Session", "Kernel"):
            summary.skipped[f"category {cat!r}"] += 1
            continue
        if "dur" not in rec:
            summary.skipped["entry without duration"] += 1
            summary.warn(f"dropped duration-less {cat} entry {rec.get('name')!r}")
            continue
        args = rec.get("args") if isinstance(rec.get("args"), dict) else {}
        raw_name = str(rec.get("name", ""))
        name = args.get("op_name")
        if not isinstance(name, str) or not name:
            name = raw_name
            if cat == "Node":
                summary.noted["node missing op_name"] += 1
                summary.warn(f"node entry without args.op_name; kept raw name {raw_name!r}")
        attrs: dict[str, str] = {"cat": str(cat)}
        if raw_name and raw_name != name:
            attrs["entry"] = raw_name
        provider = args.get("provider")
        if isinstance(provider, str) and provider:
            attrs["provider"] = provider
        kind = EventKind.GPU_KERNEL if cat == "Kernel" else (
            EventKind.MARKER if cat == "Session" else EventKind.CPU_OP)
        events.append(OperatorEvent(
            id=next_id, name=name, kind=kind,
            start_us=_as_int_us(rec.get("ts", 0)), duration_us=_as_int_us(rec.get("dur", 0)),
            track=(_as_int_us(rec.get("pid", 0)), _as_int_us(rec.get("tid", 0))),
            attrs=attrs,
        ))
        next_id += 1
        summary.converted += 1

    events = _nest_by_containment(events, summary)
    trace = Trace(events=tuple(events))
    validate_trace(trace)
    return trace


# ---------------------------------------------------------------------------
# Native JSONL
# ---------------------------------------------------------------------------

_KIND_TO_WIRE = {
    EventKind.CPU_OP: "cpu",
    EventKind.GPU_KERNEL: "gpu",
    EventKind.MARKER: "marker",
    EventKind.COUNTER_SAMPLE: "counter",
}
_WIRE_TO_KIND = {v: k for k, v in _KIND_TO_WIRE.items()}


def export_native(trace: Trace) -> bytes:
    """Serialize a trace to opchar/v1 JSONL; byte-deterministic for equal traces."""
    def dumps(obj) -> str:
        return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)

    lines = [dumps({"schema": "opchar/v1", "meta": {k: trace.meta[k] for k in sorted(trace.meta)}})]
    for e in trace.events:
        rec: dict = {
            "id": e.id, "name": e.name, "kind": _KIND_TO_WIRE[e.kind],
            "ts": e.start_us, "dur": e.duration_us,
            "pid": e.track[0], "tid": e.track[1],
        }
        if e.parent_id is not None:
            rec["parent"] = e.parent_id
        if e.correlation_id is not None:
            rec["corr"] = e.correlation_id
        if e.tensor_shapes is not None:
            rec["shapes"] = [list(s) for s in e.tensor_shapes]
        rec["attrs"] = {k: e.attrs[k] for k in sorted(e.attrs)}
        lines.append(dumps(rec))
    for ts, watts in trace.energy_samples:
        lines.append(dumps({"energy": {"ts": ts, "w": watts}}))
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_native(raw: bytes) -> Trace:
    """Parse opchar/v1 JSONL; parse(export(t)) structurally equals t."""
    raw = _decompress(raw)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedJson(f"not UTF-8 text: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SchemaVersionMismatch("missing opchar/v1 header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"line 1: {exc}") from exc
    if not isinstance(header, dict) or "schema" not in header:
        raise SchemaVersionMismatch("first line is not an opchar header")
    if header["schema"] != "opchar/v1":
        raise SchemaVersionMismatch(f"unsupported schema {header['schema']!r}")
    meta = header.get("meta", {})
    if not isinstance(meta, dict):
        raise MalformedJson("line 1: meta must be an object")

    events: list[OperatorEvent] = []
    energy: list[tuple[int, float]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedJson(f"line {lineno}: {exc}") from exc
        if not isinstance(rec, dict):
            raise MalformedJson(f"line {lineno}: expected an object")
        if "energy" in rec:
            sample = rec["energy"]
            try:
                energy.append((int(sample["ts"]), float(sample["w"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedJson(f"line {lineno}: bad energy sample") from exc
            continue
        try:
            kind = _WIRE_TO_KIND[rec["kind"]]
            shapes = rec.get("shapes")
            events.append(OperatorEvent(
                id=int(rec["id"]), name=str(rec["name"]), kind=kind,
                start_us=int(rec["ts"]), duration_us=int(rec["dur"]),
                track=(int(rec["pid"]), int(rec["tid"])),
                parent_id=None if rec.get("parent") is None else int(rec["parent"]),
                correlation_id=None if rec.get("corr") is None else int(rec["corr"]),
                tensor_shapes=None if shapes is None else tuple(tuple(int(d) for d in s) for s in shapes),
                attrs={str(k): str(v) for k, v in rec.get("attrs", {}).items()},
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedJson(f"line {lineno}: bad event record ({exc})") from exc
    trace = Trace(events=tuple(events), meta=meta, energy_samples=tuple(energy))
    validate_trace(trace)
    return trace
