"""Serializes reports to machine- and human-readable outputs.

Every emitter is byte-deterministic for a fixed input. The JSON schema is
versioned ("opchar-report/v1") and round-trips losslessly through the
in-memory report types. SVG stacked bars are hand-emitted SVG 1.1 markup
(one rect per group per bar, total latency in milliseconds captioned above
each bar); anything fancier should consume the plotdata output instead.

CSV columns:
  breakdown:   group,latency_us,percent,op_count
  comparison:  label,a_latency_us,b_latency_us,latency_ratio,a_percent,b_percent,delta_points
  fusion:      metric,value
  quant:       metric,value
  memory:      label,weights_bytes,kv_cache_bytes,activation_bytes,ssm_state_bytes,overhead_bytes,total_bytes
  seq-series:  seq_len,percent
"""

from __future__ import annotations

import csv
import io
import json
from typing import Sequence
from xml.sax.saxutils import escape

from .breakdown import (AttributionView, BreakdownComparison, BreakdownReport,
                        GroupStat, PhaseMetrics, TopOp)
from .diff_fusion import FusionReport
from .diff_quant import QuantReport
from .errors import MalformedJson, UnsupportedFormat
from .memmodel import MemFootprint
from .taxonomy import OperatorGroup

SCHEMA = "opchar-report/v1"

FORMATS = ("csv", "json", "md", "svg", "plotdata")

# Fixed palette so figures stay comparable across runs.
GROUP_COLORS = {
    OperatorGroup.GEMM: "#4e79a7",
    OperatorGroup.NORMALIZATION: "#f28e2b",
    OperatorGroup.ACTIVATION: "#e15759",
    OperatorGroup.MEMORY: "#76b7b2",
    OperatorGroup.ELEMENTWISE_ARITHMETIC: "#59a14f",
    OperatorGroup.ROI_SELECTION: "#edc948",
    OperatorGroup.LOGIT_COMPUTATION: "#b07aa1",
    OperatorGroup.SSM_SPECIFIC: "#ff9da7",
    OperatorGroup.UNCATEGORIZED: "#9c755f",
}

LabeledBreakdowns = Sequence[tuple[str, BreakdownReport]]


def emit(report, fmt: str) -> bytes:
    """Serialize a report (or labeled breakdown series) into one output format."""
    if fmt not in FORMATS:
        raise UnsupportedFormat(f"unknown format {fmt!r}; choose from {', '.join(FORMATS)}")
    series = _as_series(report)
    if fmt == "svg":
        if series is None:
            raise UnsupportedFormat("svg output is only defined for breakdown reports")
        return _svg_breakdown(series)
    if fmt == "plotdata":
        if series is None:
            raise UnsupportedFormat("plotdata output is only defined for breakdown reports")
        return _plotdata(series)
    if isinstance(report, BreakdownReport):
        return _dispatch(fmt, _breakdown_csv, _breakdown_md, breakdown_to_dict, report, "breakdown")
    if series is not None:
        # labeled series in tabular formats: concatenated per-label sections
        parts = []
        for label, r in series:
            if fmt == "md":
                parts.append(f"## {label}\n\n".encode("utf-8"))
            parts.append(emit(r, fmt))
        return b"".join(parts)
    if isinstance(report, BreakdownComparison):
        return _dispatch(fmt, _comparison_csv, _comparison_md, comparison_to_dict, report, "comparison")
    if isinstance(report, FusionReport):
        return _dispatch(fmt, _fusion_csv, _fusion_md, fusion_to_dict, report, "fusion")
    if isinstance(report, QuantReport):
        return _dispatch(fmt, _quant_csv, _quant_md, quant_to_dict, report, "quant")
    if _is_mem_table(report):
        return _dispatch(fmt, _memory_csv, _memory_md, memory_to_dict, report, "memory")
    if _is_seq_series(report):
        return _dispatch(fmt, _series_csv, _series_md, series_to_dict, report, "seq-series")
    raise UnsupportedFormat(f"cannot serialize {type(report).__name__}")


def _dispatch(fmt, to_csv, to_md, to_dict, report, kind) -> bytes:
    if fmt == "csv":
        return to_csv(report)
    if fmt == "md":
        return to_md(report)
    if fmt == "json":
        return _json_bytes(kind, to_dict(report))
    raise UnsupportedFormat(f"{fmt} output is not defined for {kind} reports")


def _as_series(report) -> list[tuple[str, BreakdownReport]] | None:
    if isinstance(report, BreakdownReport):
        return [(str(report.meta.get("model", "trace")), report)]
    if isinstance(report, Sequence) and report and all(
            isinstance(item, tuple) and len(item) == 2 and isinstance(item[1], BreakdownReport)
            for item in report):
        return [(str(label), r) for label, r in report]
    return None


def _is_mem_table(report) -> bool:
    if isinstance(report, MemFootprint):
        return True
    return (isinstance(report, Sequence) and bool(report) and all(
        isinstance(item, tuple) and len(item) == 2 and isinstance(item[1], MemFootprint)
        for item in report))


def _is_seq_series(report) -> bool:
    return (isinstance(report, Sequence) and bool(report) and all(
        isinstance(item, tuple) and len(item) == 2
        and isinstance(item[0], int) and isinstance(item[1], float)
        for item in report))


def _json_bytes(kind: str, data: dict) -> bytes:
    doc = {"schema": SCHEMA, "kind": kind, "data": data}
    return (json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n").encode("utf-8")


def _csv_bytes(header: list[str], rows: list[list]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue().encode("utf-8")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".6g")
    return str(value)


# -- breakdown ---------------------------------------------------------------

def _breakdown_rows(report: BreakdownReport) -> list[list]:
    return [
        [g.value, stat.latency_us, _fmt(stat.percent), stat.op_count]
        for g, stat in report.per_group.items()
    ]


def _breakdown_csv(report: BreakdownReport) -> bytes:
    return _csv_bytes(["group", "latency_us", "percent", "op_count"], _breakdown_rows(report))


def _breakdown_md(report: BreakdownReport) -> bytes:
    lines = [
        f"### Latency breakdown ({report.view.value} view, total {report.total_us} us)",
        "",
    ]
    if report.view is AttributionView.COMBINED:
        lines += ["Combined view stacks GPU kernel time on top of CPU self time; "
                  "totals are additive and can exceed wall-clock.", ""]
    lines += [
        "| group | latency (us) | percent | ops |",
        "|---|---:|---:|---:|",
    ]
    for g, stat in report.per_group.items():
        lines.append(f"| {g.value} | {stat.latency_us} | {_fmt(stat.percent)} | {stat.op_count} |")
    if report.sync_wait_count:
        lines += ["", f"Synchronization waits (reported separately): "
                      f"{report.sync_wait_us} us across {report.sync_wait_count} ops."]
    if report.top_nongemm:
        lines += ["", "| top non-GEMM op | group | latency (us) | percent |", "|---|---|---:|---:|"]
        for op in report.top_nongemm:
            lines.append(f"| {op.name} | {op.group.value} | {op.latency_us} | {_fmt(op.percent)} |")
    pm = report.phase_metrics
    if pm is not None:
        lines += ["", "| phase metric | value |", "|---|---:|",
                  f"| ttft_us | {pm.ttft_us} |",
                  f"| tpot_us | {_fmt(pm.tpot_us)} |",
                  f"| decode_tok_per_s | {_fmt(pm.decode_throughput_tok_per_s)} |",
                  f"| e2e_tok_per_s | {_fmt(pm.e2e_throughput_tok_per_s)} |",
                  f"| n_decode_tokens | {pm.n_decode_tokens} |",
                  f"| energy_j | {_fmt(pm.energy_j)} |"]
    return ("\n".join(lines) + "\n").encode("utf-8")


def breakdown_to_dict(report: BreakdownReport) -> dict:
    data = {
        "view": report.view.value,
        "total_us": report.total_us,
        "per_group": {
            g.value: {"latency_us": s.latency_us, "percent": s.percent, "op_count": s.op_count}
            for g, s in report.per_group.items()
        },
        "top_nongemm": [
            {"name": t.name, "group": t.group.value, "latency_us": t.latency_us, "percent": t.percent}
            for t in report.top_nongemm
        ],
        "sync_wait_us": report.sync_wait_us,
        "sync_wait_count": report.sync_wait_count,
        "meta": dict(report.meta),
    }
    pm = report.phase_metrics
    data["phase_metrics"] = None if pm is None else {
        "ttft_us": pm.ttft_us, "tpot_us": pm.tpot_us,
        "decode_throughput_tok_per_s": pm.decode_throughput_tok_per_s,
        "e2e_throughput_tok_per_s": pm.e2e_throughput_tok_per_s,
        "n_decode_tokens": pm.n_decode_tokens, "energy_j": pm.energy_j,
    }
    return data


def breakdown_from_dict(data: dict) -> BreakdownReport:
    try:
        pm = data.get("phase_metrics")
        return BreakdownReport(
            view=AttributionView(data["view"]),
            total_us=int(data["total_us"]),
            per_group={
                OperatorGroup(g): GroupStat(int(s["latency_us"]), float(s["percent"]), int(s["op_count"]))
                for g, s in data["per_group"].items()
            },
            top_nongemm=tuple(
                TopOp(t["name"], OperatorGroup(t["group"]), int(t["latency_us"]), float(t["percent"]))
                for t in data["top_nongemm"]
            ),
            sync_wait_us=int(data.get("sync_wait_us", 0)),
            sync_wait_count=int(data.get("sync_wait_count", 0)),
            phase_metrics=None if pm is None else PhaseMetrics(
                ttft_us=int(pm["ttft_us"]),
                tpot_us=None if pm["tpot_us"] is None else float(pm["tpot_us"]),
                decode_throughput_tok_per_s=pm["decode_throughput_tok_per_s"],
                e2e_throughput_tok_per_s=pm["e2e_throughput_tok_per_s"],
                n_decode_tokens=int(pm["n_decode_tokens"]),
                energy_j=pm["energy_j"],
            ),
            meta=dict(data.get("meta", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedJson(f"bad breakdown report payload: {exc}") from exc


def parse_report_json(raw: bytes):
    """Inverse of emit(..., 'json') for round-trippable report kinds."""
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedJson(str(exc)) from exc
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA:
        raise MalformedJson(f"expected {SCHEMA} document")
    kind, data = doc.get("kind"), doc.get("data")
    if kind == "breakdown":
        return breakdown_from_dict(data)
    raise MalformedJson(f"cannot reconstruct report kind {kind!r}")


# -- comparison ---------------------------------------------------------------

def _comparison_rows(cmp: BreakdownComparison) -> list[list]:
    return [
        [r.label, r.a_latency_us, r.b_latency_us, _fmt(r.latency_ratio),
         _fmt(r.a_percent), _fmt(r.b_percent), _fmt(r.delta_points)]
        for r in cmp.rows
    ]


def _comparison_csv(cmp: BreakdownComparison) -> bytes:
    return _csv_bytes(
        ["label", "a_latency_us", "b_latency_us", "latency_ratio", "a_percent", "b_percent", "delta_points"],
        _comparison_rows(cmp))


def _comparison_md(cmp: BreakdownComparison) -> bytes:
    lines = ["### Breakdown comparison (ratio = a/b, delta = b - a)", "",
             "| label | a (us) | b (us) | ratio | a % | b % | delta (pts) |",
             "|---|---:|---:|---:|---:|---:|---:|"]
    for r in cmp.rows:
        lines.append(f"| {r.label} | {r.a_latency_us} | {r.b_latency_us} | {_fmt(r.latency_ratio)} "
                     f"| {_fmt(r.a_percent)} | {_fmt(r.b_percent)} | {_fmt(r.delta_points)} |")
    lines += ["", f"Total speedup (a/b): {_fmt(cmp.total_speedup)}"]
    return ("\n".join(lines) + "\n").encode("utf-8")


def comparison_to_dict(cmp: BreakdownComparison) -> dict:
    return {
        "rows": [
            {"label": r.label, "a_latency_us": r.a_latency_us, "b_latency_us": r.b_latency_us,
             "latency_ratio": r.latency_ratio, "a_percent": r.a_percent,
             "b_percent": r.b_percent, "delta_points": r.delta_points}
            for r in cmp.rows
        ],
        "total_speedup": cmp.total_speedup,
    }


# -- fusion -------------------------------------------------------------------

def _fusion_metrics(report: FusionReport) -> list[list]:
    split = report.pattern_split
    rows = [
        ["nongemm_fusion_rate", _fmt(report.nongemm_fusion_rate)],
        ["count_basis", report.count_basis],
        ["gemm_speedup", _fmt(report.gemm_speedup)],
        ["nongemm_speedup", _fmt(report.nongemm_speedup)],
        ["before_nongemm_percent", _fmt(report.before.nongemm_percent)],
        ["after_nongemm_percent", _fmt(report.after.nongemm_percent)],
        ["absorbed_instances", sum(report.absorbed_ops.values())],
        ["fused_with_gemm", split.fused_with_gemm],
        ["fused_with_nongemm", split.fused_with_nongemm],
        ["fused_with_gemm_share", _fmt(split.fused_with_gemm_share)],
        ["latency_weighted_gemm_share", _fmt(split.latency_weighted_gemm_share)],
        ["no_delimiter", split.no_delimiter],
    ]
    return rows


def _fusion_csv(report: FusionReport) -> bytes:
    return _csv_bytes(["metric", "value"], _fusion_metrics(report))


def _fusion_md(report: FusionReport) -> bytes:
    lines = ["### Fusion diff", "", "| metric | value |", "|---|---:|"]
    lines += [f"| {m} | {v} |" for m, v in _fusion_metrics(report)]
    if report.absorbed_ops:
        lines += ["", "| absorbed op | instances |", "|---|---:|"]
        lines += [f"| {name} | {n} |" for name, n in report.absorbed_ops.items()]
    return ("\n".join(lines) + "\n").encode("utf-8")


def fusion_to_dict(report: FusionReport) -> dict:
    split = report.pattern_split
    return {
        "nongemm_fusion_rate": report.nongemm_fusion_rate,
        "count_basis": report.count_basis,
        "gemm_speedup": report.gemm_speedup,
        "nongemm_speedup": report.nongemm_speedup,
        "absorbed_ops": dict(report.absorbed_ops),
        "pattern_split": {
            "fused_with_gemm": split.fused_with_gemm,
            "fused_with_nongemm": split.fused_with_nongemm,
            "fused_with_gemm_share": split.fused_with_gemm_share,
            "no_delimiter": split.no_delimiter,
            "latency_weighted_gemm_share": split.latency_weighted_gemm_share,
        },
        "before": breakdown_to_dict(report.before),
        "after": breakdown_to_dict(report.after),
    }


# -- quant --------------------------------------------------------------------

def _quant_metrics(report: QuantReport) -> list[list]:
    rows = [
        ["added_nongemm_ops", report.added_nongemm_ops],
        ["added_nongemm_ratio", _fmt(report.added_nongemm_ratio)],
        ["dqrq_ops", report.dqrq_ops],
        ["gemm_latency_ratio", _fmt(report.gemm_latency_ratio)],
        ["gemm_reduction_percent", _fmt(report.gemm_reduction_percent)],
        ["gemm_speedup", _fmt(report.gemm_speedup)],
        ["nongemm_latency_ratio", _fmt(report.nongemm_latency_ratio)],
        ["nongemm_slowdown_percent", _fmt(report.nongemm_slowdown_percent)],
        ["before_nongemm_percent", _fmt(report.before.nongemm_percent)],
        ["after_nongemm_percent", _fmt(report.after.nongemm_percent)],
    ]
    if report.seq_series:
        for seq_len, pct in report.seq_series:
            rows.append([f"elementwise_percent@{seq_len}", _fmt(pct)])
    return rows


def _quant_csv(report: QuantReport) -> bytes:
    return _csv_bytes(["metric", "value"], _quant_metrics(report))


def _quant_md(report: QuantReport) -> bytes:
    lines = ["### Quantization diff", "", "| metric | value |", "|---|---:|"]
    lines += [f"| {m} | {v} |" for m, v in _quant_metrics(report)]
    return ("\n".join(lines) + "\n").encode("utf-8")


def quant_to_dict(report: QuantReport) -> dict:
    return {
        "added_nongemm_ops": report.added_nongemm_ops,
        "added_nongemm_ratio": report.added_nongemm_ratio,
        "dqrq_ops": report.dqrq_ops,
        "gemm_latency_ratio": report.gemm_latency_ratio,
        "nongemm_latency_ratio": report.nongemm_latency_ratio,
        "seq_series": None if report.seq_series is None else
            [{"seq_len": s, "percent": p} for s, p in report.seq_series],
        "before": breakdown_to_dict(report.before),
        "after": breakdown_to_dict(report.after),
    }


# -- memory -------------------------------------------------------------------

def _mem_entries(report) -> list[tuple[str, MemFootprint]]:
    if isinstance(report, MemFootprint):
        return [("total", report)]
    return list(report)


def _memory_csv(report) -> bytes:
    rows = [
        [label, fp.weights_bytes, fp.kv_cache_bytes, fp.activation_bytes,
         fp.ssm_state_bytes, fp.overhead_bytes, fp.total_bytes]
        for label, fp in _mem_entries(report)
    ]
    return _csv_bytes(["label", "weights_bytes", "kv_cache_bytes", "activation_bytes",
                       "ssm_state_bytes", "overhead_bytes", "total_bytes"], rows)


def _memory_md(report) -> bytes:
    lines = ["### Memory footprint", "",
             "| label | weights | kv cache | activations | state | overhead | total |",
             "|---|---:|---:|---:|---:|---:|---:|"]
    for label, fp in _mem_entries(report):
        cells = [fp.weights_bytes, fp.kv_cache_bytes, fp.activation_bytes,
                 fp.ssm_state_bytes, fp.overhead_bytes, fp.total_bytes]
        lines.append("| " + label + " | " + " | ".join(f"{_gb(c)}" for c in cells) + " |")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _gb(n: int) -> str:
    return f"{n / 1e9:.3f} GB" if n >= 1_000_000 else str(n)


def memory_to_dict(report) -> dict:
    return {
        "entries": [
            {"label": label, "weights_bytes": fp.weights_bytes, "kv_cache_bytes": fp.kv_cache_bytes,
             "activation_bytes": fp.activation_bytes, "ssm_state_bytes": fp.ssm_state_bytes,
             "overhead_bytes": fp.overhead_bytes, "total_bytes": fp.total_bytes}
            for label, fp in _mem_entries(report)
        ]
    }


# -- sequence-length series ----------------------------------------------------

def _series_csv(series) -> bytes:
    return _csv_bytes(["seq_len", "percent"], [[s, _fmt(p)] for s, p in series])


def _series_md(series) -> bytes:
    lines = ["### Share vs sequence length", "", "| seq_len | percent |", "|---:|---:|"]
    lines += [f"| {s} | {_fmt(p)} |" for s, p in series]
    return ("\n".join(lines) + "\n").encode("utf-8")


def series_to_dict(series) -> dict:
    return {"points": [{"seq_len": s, "percent": p} for s, p in series]}


# -- stacked-bar SVG and plotdata ----------------------------------------------

_BAR_W = 96
_BAR_GAP = 48
_PLOT_H = 320
_MARGIN = 56
_LEGEND_W = 230


def _svg_breakdown(series: LabeledBreakdowns) -> bytes:
    groups = [g for g in OperatorGroup if any(g in r.per_group for _, r in series)]
    if not groups:
        groups = [OperatorGroup.GEMM]
    max_total = max((r.total_us for _, r in series), default=0) or 1
    width = _MARGIN * 2 + len(series) * (_BAR_W + _BAR_GAP) + _LEGEND_W
    height = _PLOT_H + 2 * _MARGIN
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<text x="{_MARGIN}" y="{_MARGIN - 28}" font-size="14" font-family="sans-serif">'
        'Latency breakdown by operator group (bar captions: total latency, ms)</text>',
    ]
    for i, (label, report) in enumerate(series):
        x = _MARGIN + i * (_BAR_W + _BAR_GAP)
        y_base = _MARGIN + _PLOT_H
        y = y_base
        for g in groups:
            stat = report.per_group.get(g)
            us = stat.latency_us if stat else 0
            h = _PLOT_H * us / max_total
            y -= h
            out.append(
                f'<rect x="{x}" y="{y:.2f}" width="{_BAR_W}" height="{h:.2f}" '
                f'fill="{GROUP_COLORS[g]}"><title>{escape(g.value)}: {us} us</title></rect>'
            )
        out.append(f'<text x="{x + _BAR_W / 2:.2f}" y="{y - 6:.2f}" font-size="12" '
                   f'text-anchor="middle" font-family="sans-serif">{report.total_us / 1000:.1f}</text>')
        out.append(f'<text x="{x + _BAR_W / 2:.2f}" y="{y_base + 18}" font-size="12" '
                   f'text-anchor="middle" font-family="sans-serif">{escape(str(label))}</text>')
    lx = _MARGIN + len(series) * (_BAR_W + _BAR_GAP) + 24
    for j, g in enumerate(groups):
        ly = _MARGIN + 16 * j
        out.append(f'<circle cx="{lx}" cy="{ly}" r="5" fill="{GROUP_COLORS[g]}"/>')
        out.append(f'<text x="{lx + 12}" y="{ly + 4}" font-size="11" '
                   f'font-family="sans-serif">{escape(g.value)}</text>')
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")


def _plotdata(series: LabeledBreakdowns) -> bytes:
    groups = [g for g in OperatorGroup if any(g in r.per_group for _, r in series)]
    doc = {
        "schema": "opchar-plotdata/v1",
        "labels": [label for label, _ in series],
        "groups": [g.value for g in groups],
        "latency_us": [[r.latency(g) for g in groups] for _, r in series],
        "percent": [[r.percent(g) for g in groups] for _, r in series],
        "total_us": [r.total_us for _, r in series],
    }
    return (json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")
