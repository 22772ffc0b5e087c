#!/usr/bin/env python3
"""Run the bundled case studies end to end and print their tables.

Covers the three study types the toolkit automates on the committed fixture
specs: operator-fusion diffs, the quantization diff with its sequence-length
series, and the analytical max-context comparison. Everything here goes
through the public library API; the CLI offers the same pipelines.
"""

from pathlib import Path

from opchar.breakdown import compare_breakdowns, compute_breakdown
from opchar.diff_fusion import fusion_rate
from opchar.diff_quant import quant_diff, seq_scaling_series
from opchar.memmodel import compare_architectures, load_config
from opchar.report import emit
from opchar.synth import generate, load_spec
from opchar.taxonomy import OperatorGroup, builtin_ruleset

ROOT = Path(__file__).resolve().parent.parent
SPECS = ROOT / "tests" / "fixtures" / "specs"
CONFIGS = ROOT / "configs"


def main() -> None:
    rules = builtin_ruleset()

    print("=" * 72)
    print("CPU-only vs GPU-accelerated share shift")
    print("=" * 72)
    cpu = compute_breakdown(generate(load_spec(SPECS / "compare_cpu.json")).trace, rules)
    gpu = compute_breakdown(generate(load_spec(SPECS / "compare_gpu.json")).trace, rules)
    print(emit(compare_breakdowns(cpu, gpu), "md").decode())

    print("=" * 72)
    print("Operator fusion case study")
    print("=" * 72)
    for spec_name in ("swinb_fusion.json", "detr_fusion.json", "segformer_fusion.json"):
        result = generate(load_spec(SPECS / spec_name))
        report = fusion_rate(result.trace, result.fused, rules)
        model = result.trace.meta.get("model", spec_name)
        print(f"--- {model} ---")
        print(emit(report, "md").decode())

    print("=" * 72)
    print("Quantization case study")
    print("=" * 72)
    result = generate(load_spec(SPECS / "llama3_quant.json"))
    print(emit(quant_diff(result.trace, result.quantized, rules), "md").decode())
    series = seq_scaling_series(
        [(512, generate(load_spec(SPECS / "seq512.json")).trace),
         (8192, generate(load_spec(SPECS / "seq8192.json")).trace)],
        rules, OperatorGroup.ELEMENTWISE_ARITHMETIC)
    print(emit(series, "md").decode())

    print("=" * 72)
    print("Max context length under a 24 GB budget")
    print("=" * 72)
    cfgs = [load_config(CONFIGS / "transformer_24gb.json"), load_config(CONFIGS / "ssm_24gb.json")]
    for entry in compare_architectures(cfgs, batch=1, budget_bytes=24_000_000_000):
        ratio = "n/a" if entry.ratio_vs_transformer is None else f"{entry.ratio_vs_transformer:.2f}x"
        print(f"{entry.label:26s} s_max={entry.s_max:>9,}  ({entry.limited_by}, {ratio} vs transformer)")


if __name__ == "__main__":
    main()
