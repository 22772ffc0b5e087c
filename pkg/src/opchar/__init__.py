"""opchar: operator-level GEMM/non-GEMM latency characterization for ML inference traces."""

from .breakdown import (AttributionView, BreakdownComparison, BreakdownReport,
                        PhaseMetrics, compare_breakdowns, compute_breakdown,
                        compute_phase_metrics)
from .diff_fusion import FusionReport, classify_fusion_patterns, fusion_rate
from .diff_quant import QuantReport, quant_diff, seq_scaling_series
from .errors import OpcharError
from .ingest import (IngestSummary, TraceFormat, detect_format, export_native,
                     parse, parse_chrome, parse_native, parse_ort)
from .memmodel import (MemFootprint, ModelMemConfig, compare_architectures,
                       footprint, max_seq_len)
from .synth import FusedPlan, GroupTarget, PhasePlan, QuantPlan, SynthSpec, generate
from .taxonomy import (ClassificationRule, OperatorGroup, Ruleset,
                       builtin_ruleset, classify, classify_events, load_rules)
from .trace_model import (EventKind, EventTree, OperatorEvent, Trace,
                          build_event_trees, total_energy_joules)

__version__ = "0.1.0"

__all__ = [
    "AttributionView", "BreakdownComparison", "BreakdownReport", "ClassificationRule",
    "EventKind", "EventTree", "FusedPlan", "FusionReport", "GroupTarget",
    "IngestSummary", "MemFootprint", "ModelMemConfig", "OpcharError",
    "OperatorEvent", "OperatorGroup", "PhaseMetrics", "PhasePlan", "QuantPlan",
    "QuantReport", "Ruleset", "SynthSpec", "Trace", "TraceFormat",
    "build_event_trees", "builtin_ruleset", "classify", "classify_events",
    "classify_fusion_patterns", "compare_architectures", "compare_breakdowns",
    "compute_breakdown", "compute_phase_metrics", "detect_format", "export_native",
    "footprint", "fusion_rate", "generate", "load_rules", "max_seq_len", "parse",
    "parse_chrome", "parse_native", "parse_ort", "quant_diff", "seq_scaling_series",
    "total_energy_joules",
]
