#!/usr/bin/env python3
"""Regenerate the frozen native-format fixture traces from their synth specs.

The outputs are committed; rerunning this script must be a no-op unless a
spec changed (generation is deterministic per spec+seed).
"""

from pathlib import Path

from opchar.ingest import export_native
from opchar.synth import generate, load_spec

ROOT = Path(__file__).resolve().parent.parent
SPEC_DIR = ROOT / "tests" / "fixtures" / "specs"
TRACE_DIR = ROOT / "tests" / "fixtures" / "traces"

FROZEN = {
    "transformer.jsonl": "transformer_profile.json",
    "cnn_detector.jsonl": "cnn_detector_profile.json",
    "ssm.jsonl": "ssm_profile.json",
}


def main() -> None:
    TRACE_DIR.mkdir(parents=True, exist_ok=True)
    for out_name, spec_name in FROZEN.items():
        spec = load_spec(SPEC_DIR / spec_name)
        trace = generate(spec).trace
        out = TRACE_DIR / out_name
        out.write_bytes(export_native(trace))
        print(f"wrote {out} ({len(trace.events)} events)")


if __name__ == "__main__":
    main()
