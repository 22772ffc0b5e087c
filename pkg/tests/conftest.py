import subprocess
import sys
from pathlib import Path

import pytest
from hypothesis import settings

from opchar.synth import generate, load_spec
from opchar.taxonomy import Ruleset, builtin_ruleset
from opchar.trace_model import EventKind, OperatorEvent

settings.register_profile("suite", deadline=None)
settings.load_profile("suite")

FIXTURES = Path(__file__).parent / "fixtures"
SPEC_DIR = FIXTURES / "specs"
TRACE_DIR = FIXTURES / "traces"
CHROME_DIR = FIXTURES / "chrome"
CONFIG_DIR = Path(__file__).parent.parent / "configs"


def make_event(id, name, start, dur, kind=EventKind.CPU_OP, track=(1, 1),
               parent=None, corr=None, **attrs):
    return OperatorEvent(
        id=id, name=name, kind=kind, start_us=start, duration_us=dur,
        track=track, parent_id=parent, correlation_id=corr,
        attrs={k: str(v) for k, v in attrs.items()},
    )


@pytest.fixture(scope="session")
def rules() -> Ruleset:
    return builtin_ruleset()


def spec_named(name: str):
    return load_spec(SPEC_DIR / name)


@pytest.fixture(scope="session")
def swinb_pair():
    result = generate(spec_named("swinb_fusion.json"))
    return result.trace, result.fused


@pytest.fixture(scope="session")
def detr_pair():
    result = generate(spec_named("detr_fusion.json"))
    return result.trace, result.fused


@pytest.fixture(scope="session")
def segformer_pair():
    result = generate(spec_named("segformer_fusion.json"))
    return result.trace, result.fused


@pytest.fixture(scope="session")
def llama3_quant_pair():
    result = generate(spec_named("llama3_quant.json"))
    return result.trace, result.quantized


@pytest.fixture(scope="session")
def seq_series_traces():
    return [
        (512, generate(spec_named("seq512.json")).trace),
        (8192, generate(spec_named("seq8192.json")).trace),
    ]


def run_cli(*args: str, stdin: bytes = b"", cwd=None) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "opchar", *args],
        input=stdin, capture_output=True, cwd=cwd,
    )
