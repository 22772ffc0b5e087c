"""Command-line interface exposing the full pipeline as subcommands.

All machine output goes to stdout (or -o); warnings and diagnostics go to
stderr. '-' means stdin/stdout. Input errors exit 2 with a diagnostic and
never a traceback. For a fixed input set the output bytes are identical
across runs and across single- vs multi-threaded execution.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import ingest, report as report_mod
from .breakdown import AttributionView, compute_breakdown
from .diff_fusion import fusion_rate
from .diff_quant import quant_diff, seq_scaling_series
from .errors import MalformedJson, OpcharError, UsageError
from .memmodel import compare_architectures, footprint, load_config, max_seq_len
from .synth import generate, load_spec
from .taxonomy import Ruleset, builtin_ruleset, load_rules, parse_group
from .trace_model import Trace

logger = logging.getLogger("opchar")

_VIEWS = {"cpu": AttributionView.CPU_ONLY, "gpu": AttributionView.GPU_ONLY,
          "combined": AttributionView.COMBINED}


def _read_input(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _write_output(data: bytes, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
        return
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from exc


def _load_ruleset(args) -> Ruleset:
    path = getattr(args, "rules", None) or os.environ.get("OPCHAR_RULES")
    if path:
        return load_rules(path)
    return builtin_ruleset()


def _load_trace(path: str, fmt: str = "auto") -> Trace:
    raw = _read_input(path)
    summary = ingest.IngestSummary()
    fmt_enum = None if fmt == "auto" else ingest.TraceFormat(fmt)
    trace = ingest.parse(raw, fmt=fmt_enum, summary=summary)
    for line in summary.warnings:
        logger.warning("%s: %s", path, line)
    return trace


def _stem(path: str) -> str:
    return "stdin" if path == "-" else Path(path).stem


# -- subcommand handlers -------------------------------------------------------

def _cmd_ingest(args) -> int:
    raw = _read_input(args.file)
    summary = ingest.IngestSummary()
    fmt = None if args.format == "auto" else ingest.TraceFormat(args.format)
    options = ingest.ChromeParseOptions()
    if args.kernel_cat_regex or args.device_track_regex:
        from dataclasses import replace
        if args.kernel_cat_regex:
            options = replace(options, kernel_cat_pattern=args.kernel_cat_regex)
        if args.device_track_regex:
            options = replace(options, device_track_pattern=args.device_track_regex)
    trace = ingest.parse(raw, fmt=fmt, summary=summary, options=options)
    if args.meta:
        import json
        try:
            extra = json.loads(_read_input(args.meta))
        except ValueError as exc:
            raise MalformedJson(f"{args.meta}: {exc}") from exc
        if not isinstance(extra, dict):
            raise MalformedJson(f"{args.meta}: metadata must be a JSON object")
        merged = dict(trace.meta)
        merged.update({k: v for k, v in extra.items() if isinstance(v, (str, int))})
        trace = Trace(events=trace.events, meta=merged, energy_samples=trace.energy_samples)
    for line in summary.lines():
        print(f"{args.file}: {line}", file=sys.stderr)
    _write_output(ingest.export_native(trace), args.output)
    return 0


def _cmd_breakdown(args) -> int:
    ruleset = _load_ruleset(args)
    view = _VIEWS[args.view]

    def run(path: str):
        trace = _load_trace(path)
        return compute_breakdown(trace, ruleset, view=view, k=args.top_k,
                                 include_phases=args.phases)

    if args.jobs > 1 and len(args.traces) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(run, args.traces))
    else:
        reports = [run(p) for p in args.traces]
    labeled = [(_stem(p), r) for p, r in zip(args.traces, reports)]

    if args.emit in ("svg", "plotdata"):
        data = report_mod.emit(labeled, args.emit)
        out = None if not args.output_dir else str(Path(args.output_dir) / f"breakdown.{args.emit}")
        _write_output(data, out)
        return 0
    for path, rep in zip(args.traces, reports):
        data = report_mod.emit(rep, args.emit)
        if args.output_dir:
            ext = args.emit
            _write_output(data, str(Path(args.output_dir) / f"{_stem(path)}.{ext}"))
        else:
            _write_output(data, None)
    return 0


def _cmd_diff_fusion(args) -> int:
    ruleset = _load_ruleset(args)
    baseline = _load_trace(args.baseline)
    fused = _load_trace(args.fused)
    delimiters = tuple(d for d in args.delims.split(",") if d)
    rep = fusion_rate(baseline, fused, ruleset, count_basis=args.count_basis,
                      delimiters=delimiters, force=args.force)
    _write_output(report_mod.emit(rep, args.emit), args.output)
    return 0


def _cmd_diff_quant(args) -> int:
    ruleset = _load_ruleset(args)
    baseline = _load_trace(args.baseline)
    quantized = _load_trace(args.quantized)
    rep = quant_diff(baseline, quantized, ruleset, force=args.force)
    _write_output(report_mod.emit(rep, args.emit), args.output)
    return 0


def _cmd_seq_series(args) -> int:
    ruleset = _load_ruleset(args)
    pairs = []
    for spec in args.traces:
        if "@" not in spec:
            raise UsageError(f"expected trace@seq_len, got {spec!r}")
        path, _, seq = spec.rpartition("@")
        try:
            seq_len = int(seq)
        except ValueError as exc:
            raise UsageError(f"bad sequence length in {spec!r}") from exc
        pairs.append((seq_len, _load_trace(path)))
    series = seq_scaling_series(pairs, ruleset, parse_group(args.group))
    _write_output(report_mod.emit(series, args.emit), args.output)
    return 0


def _cmd_memmodel(args) -> int:
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects field=value, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    cfg = load_config(args.config, overrides=overrides)
    cfgs = [cfg] + [load_config(p) for p in args.compare or []]

    if args.budget is not None:
        budget = int(float(args.budget))
        if len(cfgs) > 1:
            entries = compare_architectures(cfgs, args.batch, budget)
            lines = ["label,s_max,limited_by,ratio_vs_transformer"]
            for e in entries:
                ratio = "" if e.ratio_vs_transformer is None else f"{e.ratio_vs_transformer:.4f}"
                lines.append(f"{e.label},{e.s_max},{e.limited_by},{ratio}")
            _write_output(("\n".join(lines) + "\n").encode(), args.output)
        else:
            res = max_seq_len(cfg, args.batch, budget)
            _write_output(f"s_max={res.s_max} limited_by={res.limited_by}\n".encode(), args.output)
        return 0

    seq = args.seq if args.seq is not None else 0
    table = [(c.label or f"config{i}", footprint(c, args.batch, seq)) for i, c in enumerate(cfgs)]
    _write_output(report_mod.emit(table, args.emit), args.output)
    return 0


def _cmd_synth(args) -> int:
    spec = load_spec(args.spec)
    if args.seed is not None:
        from dataclasses import replace
        spec = replace(spec, seed=args.seed)
    result = generate(spec)
    _write_output(ingest.export_native(result.trace), args.output)
    if args.fused_out:
        if result.fused is None:
            raise UsageError("spec has no fused_variant; cannot write --fused-out")
        _write_output(ingest.export_native(result.fused), args.fused_out)
    if args.quant_out:
        if result.quantized is None:
            raise UsageError("spec has no quant_variant; cannot write --quant-out")
        _write_output(ingest.export_native(result.quantized), args.quant_out)
    return 0


def _cmd_rules(args) -> int:
    if args.action == "dump":
        lines = [f"{r.priority} {r.group.value} {r.pattern}" for r in builtin_ruleset().rules]
        _write_output(("\n".join(lines) + "\n").encode(), None)
        return 0
    ruleset = load_rules(args.file)
    user_rules = [r for r in ruleset.rules if r.source != "builtin"]
    print(f"{args.file}: OK ({len(user_rules)} user rules, {len(ruleset.rules)} total)", file=sys.stderr)
    return 0


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opchar",
        description="Operator-level GEMM/non-GEMM latency characterization for ML inference traces.",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="verbose diagnostics on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a profiler trace and export the native format")
    p.add_argument("file")
    p.add_argument("--format", choices=["auto", "chrome", "ort", "native"], default="auto")
    p.add_argument("--meta", help="sidecar JSON object merged into trace metadata")
    p.add_argument("--kernel-cat-regex", default=None,
                   help="override the chrome category pattern marking GPU kernels")
    p.add_argument("--device-track-regex", default=None,
                   help="override the track-label pattern marking device streams")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("breakdown", help="per-group latency breakdown of one or more traces")
    p.add_argument("traces", nargs="+")
    p.add_argument("--rules")
    p.add_argument("--view", choices=sorted(_VIEWS), default="combined")
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--phases", action="store_true", help="include generation-phase metrics")
    p.add_argument("--emit", choices=list(report_mod.FORMATS), default="md")
    p.add_argument("-o", "--output-dir", default=None)
    p.add_argument("--jobs", "-j", type=int, default=1)
    p.set_defaults(func=_cmd_breakdown)

    p = sub.add_parser("diff-fusion", help="fusion rate and speedups between baseline and fused traces")
    p.add_argument("baseline")
    p.add_argument("fused")
    p.add_argument("--rules")
    p.add_argument("--count-basis", choices=["instances", "types"], default="instances")
    p.add_argument("--delims", default="+,_fused_,·")
    p.add_argument("--force", action="store_true", help="skip the same-model check")
    p.add_argument("--emit", choices=["csv", "json", "md"], default="md")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_diff_fusion)

    p = sub.add_parser("diff-quant", help="quantization impact between baseline and quantized traces")
    p.add_argument("baseline")
    p.add_argument("quantized")
    p.add_argument("--rules")
    p.add_argument("--force", action="store_true")
    p.add_argument("--emit", choices=["csv", "json", "md"], default="md")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_diff_quant)

    p = sub.add_parser("seq-series", help="group share vs sequence length (args: trace@seqlen ...)")
    p.add_argument("traces", nargs="+", metavar="trace@S")
    p.add_argument("--group", required=True)
    p.add_argument("--rules")
    p.add_argument("--emit", choices=["csv", "json", "md"], default="csv")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_seq_series)

    p = sub.add_parser("memmodel", help="analytical memory footprint and max sequence length")
    p.add_argument("--config", required=True)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--seq", type=int, default=None)
    p.add_argument("--budget", default=None, help="device memory budget in bytes (e.g. 24e9)")
    p.add_argument("--compare", nargs="*", default=None, help="additional config files to rank")
    p.add_argument("--set", action="append", default=None, metavar="FIELD=VALUE")
    p.add_argument("--emit", choices=["csv", "json", "md"], default="md")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_memmodel)

    p = sub.add_parser("synth", help="generate a synthetic trace from a spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--fused-out", default=None)
    p.add_argument("--quant-out", default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("rules", help="validate a ruleset file or dump the builtin rules")
    p.add_argument("action", choices=["check", "dump"])
    p.add_argument("file", nargs="?")
    p.set_defaults(func=_cmd_rules)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, format="opchar: %(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    logger.setLevel(logging.DEBUG if args.verbose else logging.WARNING)
    if args.command == "rules" and args.action == "check" and not args.file:
        parser.error("rules check requires a file")
    try:
        return args.func(args)
    except OpcharError as exc:
        print(f"opchar: error: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        return 0


if __name__ == "__main__":
    sys.exit(main())
