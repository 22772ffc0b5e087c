"""CLI behavior: pipelines, stdin/stdout, exit codes, determinism."""

import json

import pytest

from opchar.breakdown import AttributionView, compute_breakdown
from opchar.ingest import parse_native
from opchar.memmodel import load_config, max_seq_len
from opchar.report import emit
from opchar.synth import generate
from opchar.taxonomy import builtin_ruleset

from conftest import CHROME_DIR, CONFIG_DIR, SPEC_DIR, TRACE_DIR, run_cli, spec_named


def test_synth_pipe_breakdown_matches_library():
    synth = run_cli("synth", "--spec", str(SPEC_DIR / "swinb_gpu_profile.json"), "-o", "-")
    assert synth.returncode == 0, synth.stderr
    piped = run_cli("breakdown", "-", "--emit", "csv", stdin=synth.stdout)
    assert piped.returncode == 0, piped.stderr
    trace = generate(spec_named("swinb_gpu_profile.json")).trace
    expected = emit(compute_breakdown(trace, builtin_ruleset(), view=AttributionView.COMBINED), "csv")
    assert piped.stdout == expected


def test_ingest_chrome_to_native(tmp_path):
    out = tmp_path / "out.jsonl"
    proc = run_cli("ingest", str(CHROME_DIR / "nested.json"), "-o", str(out))
    assert proc.returncode == 0, proc.stderr
    assert b"converted" in proc.stderr  # skip summary on stderr
    trace = parse_native(out.read_bytes())
    assert any(e.name == "aten::linear" for e in trace.events)


def test_ingest_meta_sidecar(tmp_path):
    sidecar = tmp_path / "meta.json"
    sidecar.write_text('{"model": "toy-mlp", "batch": 8}')
    proc = run_cli("ingest", str(CHROME_DIR / "minimal.json"), "--meta", str(sidecar), "-o", "-")
    assert proc.returncode == 0, proc.stderr
    trace = parse_native(proc.stdout)
    assert trace.meta["model"] == "toy-mlp"
    assert trace.meta["batch"] == 8


def test_memmodel_budget_matches_library():
    proc = run_cli("memmodel", "--config", str(CONFIG_DIR / "transformer_24gb.json"),
                   "--budget", "24e9")
    assert proc.returncode == 0, proc.stderr
    cfg = load_config(CONFIG_DIR / "transformer_24gb.json")
    expected = max_seq_len(cfg, 1, 24_000_000_000)
    assert proc.stdout.decode() == f"s_max={expected.s_max} limited_by={expected.limited_by}\n"


def test_memmodel_compare_ranking():
    proc = run_cli("memmodel", "--config", str(CONFIG_DIR / "transformer_24gb.json"),
                   "--compare", str(CONFIG_DIR / "ssm_24gb.json"), "--budget", "24e9")
    assert proc.returncode == 0, proc.stderr
    lines = proc.stdout.decode().splitlines()
    assert lines[0] == "label,s_max,limited_by,ratio_vs_transformer"
    assert lines[1].startswith("ssm-790m,")


def test_diff_fusion_cli_matches_library(tmp_path):
    base, fused = tmp_path / "base.jsonl", tmp_path / "fused.jsonl"
    proc = run_cli("synth", "--spec", str(SPEC_DIR / "detr_fusion.json"),
                   "-o", str(base), "--fused-out", str(fused))
    assert proc.returncode == 0, proc.stderr
    out = run_cli("diff-fusion", str(base), str(fused), "--emit", "md")
    assert out.returncode == 0, out.stderr
    text = out.stdout.decode()
    assert "| nongemm_fusion_rate | 0.3 |" in text
    assert "| nongemm_speedup | 13.5 |" in text
    # byte-equal to the equivalent library call on the same files
    from opchar.diff_fusion import fusion_rate
    from opchar.ingest import parse_native
    from opchar.report import emit
    from opchar.taxonomy import builtin_ruleset
    expected = emit(fusion_rate(parse_native(base.read_bytes()), parse_native(fused.read_bytes()),
                                builtin_ruleset()), "md")
    assert out.stdout == expected


def test_diff_quant_cli(tmp_path):
    base, quant = tmp_path / "base.jsonl", tmp_path / "quant.jsonl"
    run_cli("synth", "--spec", str(SPEC_DIR / "llama3_quant.json"),
            "-o", str(base), "--quant-out", str(quant))
    out = run_cli("diff-quant", str(base), str(quant), "--emit", "json")
    assert out.returncode == 0, out.stderr
    doc = json.loads(out.stdout)
    assert doc["data"]["added_nongemm_ops"] == 6510
    assert doc["data"]["nongemm_latency_ratio"] == pytest.approx(5.6)


def test_seq_series_cli(tmp_path):
    paths = []
    for name, seq in (("seq512.json", 512), ("seq8192.json", 8192)):
        out = tmp_path / f"s{seq}.jsonl"
        run_cli("synth", "--spec", str(SPEC_DIR / name), "-o", str(out))
        paths.append(f"{out}@{seq}")
    proc = run_cli("seq-series", *paths, "--group", "elementwise", "--emit", "csv")
    assert proc.returncode == 0, proc.stderr
    lines = proc.stdout.decode().splitlines()
    assert lines[1] == "512,31.8"
    assert lines[2] == "8192,63.8"


def test_rules_check_and_dump(tmp_path):
    dump = run_cli("rules", "dump")
    assert dump.returncode == 0
    assert b"gemm" in dump.stdout
    path = tmp_path / "rules.txt"
    path.write_text("1 memory my_special_op\n")
    check = run_cli("rules", "check", str(path))
    assert check.returncode == 0
    assert b"OK" in check.stderr
    bad = tmp_path / "bad.txt"
    bad.write_text("1 memory [unclosed\n")
    assert run_cli("rules", "check", str(bad)).returncode == 2


def test_malformed_input_exits_2_without_traceback(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_bytes(b'{"traceEvents":[{')
    proc = run_cli("breakdown", str(bad))
    assert proc.returncode == 2
    assert b"Traceback" not in proc.stderr
    assert b"error" in proc.stderr


def test_missing_file_exits_2():
    proc = run_cli("breakdown", "/nonexistent/path.json")
    assert proc.returncode == 2
    assert b"error" in proc.stderr


@pytest.mark.parametrize("argv", [
    ("rules", "check", "/nonexistent/rules.txt"),
    ("memmodel", "--config", "/nonexistent/cfg.json", "--budget", "1e9"),
    ("synth", "--spec", "/nonexistent/spec.json", "-o", "-"),
    ("breakdown", "tests/fixtures/traces/ssm.jsonl", "--top-k", "0"),
    ("seq-series", "no-at-sign", "--group", "elementwise"),
    ("diff-fusion", "/nonexistent/a.jsonl", "/nonexistent/b.jsonl"),
])
def test_bad_inputs_exit_2_without_traceback(argv):
    import pathlib
    proc = run_cli(*argv, cwd=pathlib.Path(__file__).parent.parent)
    assert proc.returncode == 2, proc.stderr
    assert b"Traceback" not in proc.stderr
    assert b"error" in proc.stderr


def test_breakdown_output_dir_and_svg(tmp_path):
    proc = run_cli("breakdown", str(TRACE_DIR / "transformer.jsonl"),
                   str(TRACE_DIR / "ssm.jsonl"), "--emit", "svg", "-o", str(tmp_path))
    assert proc.returncode == 0, proc.stderr
    svg = (tmp_path / "breakdown.svg").read_bytes()
    assert svg.startswith(b"<?xml")


def test_memmodel_footprint_table():
    proc = run_cli("memmodel", "--config", str(CONFIG_DIR / "dense_96l_fp16.json"),
                   "--seq", "2048", "--emit", "csv")
    assert proc.returncode == 0, proc.stderr
    import csv as csvmod
    import io
    rows = list(csvmod.DictReader(io.StringIO(proc.stdout.decode())))
    assert rows[0]["label"] == "dense-96l-fp16"
    assert int(rows[0]["activation_bytes"]) == 12_884_901_888


def test_breakdown_plotdata_to_dir(tmp_path):
    proc = run_cli("breakdown", str(TRACE_DIR / "transformer.jsonl"),
                   str(TRACE_DIR / "ssm.jsonl"), "--emit", "plotdata", "-o", str(tmp_path))
    assert proc.returncode == 0, proc.stderr
    doc = json.loads((tmp_path / "breakdown.plotdata").read_bytes())
    assert doc["labels"] == ["transformer", "ssm"]


def test_ingest_kernel_regex_override(tmp_path):
    # force every cpu_op-categorized event to be treated as a device kernel
    proc = run_cli("ingest", str(CHROME_DIR / "minimal.json"),
                   "--kernel-cat-regex", "cpu_op", "-o", "-")
    assert proc.returncode == 0, proc.stderr
    from opchar.ingest import parse_native
    from opchar.trace_model import EventKind
    trace = parse_native(proc.stdout)
    assert trace.events[0].kind is EventKind.GPU_KERNEL
    bad = run_cli("ingest", str(CHROME_DIR / "minimal.json"),
                  "--kernel-cat-regex", "[unclosed", "-o", "-")
    assert bad.returncode == 2


def test_memmodel_set_overrides():
    base = run_cli("memmodel", "--config", str(CONFIG_DIR / "transformer_24gb.json"),
                   "--budget", "24e9")
    bumped = run_cli("memmodel", "--config", str(CONFIG_DIR / "transformer_24gb.json"),
                     "--set", "activation_factor_c=434", "--budget", "24e9")
    assert bumped.returncode == 0, bumped.stderr
    s_base = int(base.stdout.split(b"=")[1].split()[0])
    s_bumped = int(bumped.stdout.split(b"=")[1].split()[0])
    assert s_bumped < s_base  # doubling C shrinks the max context


def test_ingest_forced_format():
    proc = run_cli("ingest", str(CHROME_DIR / "minimal.json"), "--format", "chrome", "-o", "-")
    assert proc.returncode == 0, proc.stderr
    wrong = run_cli("ingest", str(CHROME_DIR / "minimal.json"), "--format", "native", "-o", "-")
    assert wrong.returncode == 2


def test_breakdown_view_flag():
    combined = run_cli("breakdown", str(TRACE_DIR / "transformer.jsonl"), "--emit", "csv")
    cpu = run_cli("breakdown", str(TRACE_DIR / "transformer.jsonl"), "--view", "cpu", "--emit", "csv")
    gpu = run_cli("breakdown", str(TRACE_DIR / "transformer.jsonl"), "--view", "gpu", "--emit", "csv")
    assert cpu.returncode == combined.returncode == gpu.returncode == 0
    assert cpu.stdout == combined.stdout  # fixture has no GPU kernels
    assert gpu.stdout != cpu.stdout


def test_env_var_rules_default(tmp_path, monkeypatch_env=None):
    import os
    import subprocess
    import sys
    rules = tmp_path / "env_rules.txt"
    rules.write_text("0 gemm aten::reshape\n")  # absurd override, visible in output
    env = dict(os.environ, OPCHAR_RULES=str(rules))
    proc = subprocess.run(
        [sys.executable, "-m", "opchar", "breakdown", str(TRACE_DIR / "transformer.jsonl"),
         "--emit", "csv"],
        capture_output=True, env=env)
    assert proc.returncode == 0, proc.stderr
    base = run_cli("breakdown", str(TRACE_DIR / "transformer.jsonl"), "--emit", "csv")
    assert proc.stdout != base.stdout
