"""Operator taxonomy: maps operator/kernel names to groups via an ordered rule set.

Classification is regex-based because profiler name prefixes vary across
deployment flows ("aten::layer_norm", "LayerNormalization", fused kernel
names); anchored cores keep one ruleset valid across formats. Lower priority
wins; the fallback group is Uncategorized.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import BadPattern, DuplicatePriority, MalformedJson
from .trace_model import EventKind, OperatorEvent, Trace


class OperatorGroup(Enum):
    GEMM = "gemm"
    NORMALIZATION = "normalization"
    ACTIVATION = "activation"
    MEMORY = "memory"
    ELEMENTWISE_ARITHMETIC = "elementwise_arithmetic"
    ROI_SELECTION = "roi_selection"
    LOGIT_COMPUTATION = "logit_computation"
    SSM_SPECIFIC = "ssm_specific"
    UNCATEGORIZED = "uncategorized"


NON_GEMM_GROUPS = tuple(g for g in OperatorGroup if g is not OperatorGroup.GEMM)

_GROUP_ALIASES = {
    "gemm": OperatorGroup.GEMM,
    "normalization": OperatorGroup.NORMALIZATION,
    "norm": OperatorGroup.NORMALIZATION,
    "activation": OperatorGroup.ACTIVATION,
    "memory": OperatorGroup.MEMORY,
    "elementwise_arithmetic": OperatorGroup.ELEMENTWISE_ARITHMETIC,
    "elementwisearithmetic": OperatorGroup.ELEMENTWISE_ARITHMETIC,
    "elementwise": OperatorGroup.ELEMENTWISE_ARITHMETIC,
    "arithmetic": OperatorGroup.ELEMENTWISE_ARITHMETIC,
    "roi_selection": OperatorGroup.ROI_SELECTION,
    "roiselection": OperatorGroup.ROI_SELECTION,
    "roi": OperatorGroup.ROI_SELECTION,
    "logit_computation": OperatorGroup.LOGIT_COMPUTATION,
    "logitcomputation": OperatorGroup.LOGIT_COMPUTATION,
    "logit": OperatorGroup.LOGIT_COMPUTATION,
    "ssm_specific": OperatorGroup.SSM_SPECIFIC,
    "ssmspecific": OperatorGroup.SSM_SPECIFIC,
    "ssm": OperatorGroup.SSM_SPECIFIC,
    "uncategorized": OperatorGroup.UNCATEGORIZED,
}


def parse_group(label: str) -> OperatorGroup:
    key = label.strip().lower()
    if key not in _GROUP_ALIASES:
        raise BadPattern(f"unknown operator group {label!r}")
    return _GROUP_ALIASES[key]


@dataclass(frozen=True)
class ClassificationRule:
    pattern: str
    group: OperatorGroup
    priority: int
    source: str = "builtin"
    regex: re.Pattern = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        try:
            object.__setattr__(self, "regex", re.compile(self.pattern))
        except re.error as exc:
            raise BadPattern(f"invalid pattern {self.pattern!r}: {exc}") from exc


@dataclass(frozen=True)
class Ruleset:
    """Ordered rule list; classification of any name is total and deterministic."""

    rules: tuple[ClassificationRule, ...]
    fallback: OperatorGroup = OperatorGroup.UNCATEGORIZED

    def __post_init__(self):
        ordered = tuple(sorted(self.rules, key=lambda r: r.priority))
        seen: dict[int, ClassificationRule] = {}
        for r in ordered:
            if r.priority in seen:
                raise DuplicatePriority(
                    f"priority {r.priority} used by both {seen[r.priority].pattern!r} and {r.pattern!r}"
                )
            seen[r.priority] = r
        object.__setattr__(self, "rules", ordered)

    def match(self, name: str) -> ClassificationRule | None:
        for rule in self.rules:
            if rule.regex.search(name):
                return rule
        return None


# Wait/synchronization ops are kept out of every real group and surfaced
# separately in breakdowns: they inflate whichever operator happens to block.
SYNC_WAIT_PATTERN = re.compile(
    r"(?i)(cuda|hip|cu|xpu)?\s*(stream|device|event|ctx)?_?synchronize|\bsync(hronize)?\b"
)

_DQRQ_PATTERNS = (
    r"(de|re|fake_?)?quantize(_|\b)",
    r"(de)?quantize_?linear",
    r"\bq(uant)?dq\b",
)
_DQRQ_REGEX = re.compile("|".join(f"(?:{p})" for p in _DQRQ_PATTERNS), re.IGNORECASE)


def is_sync_wait(name: str) -> bool:
    return SYNC_WAIT_PATTERN.search(name) is not None


def is_dqrq(name: str) -> bool:
    """True for dequantize/requantize operators inserted by quantized deployments."""
    return _DQRQ_REGEX.search(name) is not None


_BUILTIN_SPECS: tuple[tuple[int, str, OperatorGroup], ...] = (
    # Waits surface as Uncategorized on purpose; see module docstring.
    (1000, SYNC_WAIT_PATTERN.pattern, OperatorGroup.UNCATEGORIZED),
    # Fused SSM kernels win over the generic conv/scan cores they contain.
    (1010, r"(?i)selective_?scan", OperatorGroup.SSM_SPECIFIC),
    (1011, r"(?i)selective_?state_?update", OperatorGroup.SSM_SPECIFIC),
    (1012, r"(?i)causal_?conv1d", OperatorGroup.SSM_SPECIFIC),
    (1013, r"(?i)mamba_?inner_?fn", OperatorGroup.SSM_SPECIFIC),
    (1014, r"(?i)mamba_?split_?conv1d_?scan_?combined", OperatorGroup.SSM_SPECIFIC),
    (1015, r"(?i)mamba_?(chunk_?)?scan", OperatorGroup.SSM_SPECIFIC),
    (1016, r"(?i)\bssd_?(chunk|state|bmm|combined)", OperatorGroup.SSM_SPECIFIC),
    # RoI selection.
    (1100, r"(?i)\bnms\b|batched_nms|non_?max_?suppression", OperatorGroup.ROI_SELECTION),
    (1101, r"(?i)roi_?align|roi_?pool", OperatorGroup.ROI_SELECTION),
    # Logit computation (before activations: softmax is not an activation here).
    (1200, r"(?i)(log_?)?softmax", OperatorGroup.LOGIT_COMPUTATION),
    # Normalization.
    (1300, r"(?i)(layer_?|batch_?|group_?|rms_?|instance_?|l2_?)norm", OperatorGroup.NORMALIZATION),
    (1301, r"(?i)normalization|\bnormalize\b", OperatorGroup.NORMALIZATION),
    # Activations.
    (1400, r"(?i)\b(leaky_?relu|relu6?|gelu|silu|swish|mish|elu|celu|selu)(_|\b)", OperatorGroup.ACTIVATION),
    (1401, r"(?i)\b(sigmoid|logsigmoid|tanh|hard_?(sigmoid|swish|tanh))(_|\b)", OperatorGroup.ACTIVATION),
    # Dequantize/requantize spellings; kept ahead of GEMM so QuantizeLinear
    # does not classify as a linear layer.
    (1500, r"(?i)(de|re|fake_?)?quantize(_|\b)", OperatorGroup.ELEMENTWISE_ARITHMETIC),
    (1501, r"(?i)(de)?quantize_?linear", OperatorGroup.ELEMENTWISE_ARITHMETIC),
    # GEMM-backed operators and device GEMM kernel spellings.
    (1600, r"(?i)\blinear\b", OperatorGroup.GEMM),
    (1601, r"(?i)\b(addmm|baddbmm|bmm|mm|matmul|einsum)(_|\b)", OperatorGroup.GEMM),
    (1602, r"(?i)\bconv(_?transpose)?([123]d)?\b|\bconvolution\b", OperatorGroup.GEMM),
    (1603, r"(?i)gemm", OperatorGroup.GEMM),
    (1604, r"(?i)cutlass|\bwgmma|\bmma\b", OperatorGroup.GEMM),
    (1605, r"(?i)fmha|flash_?attn|attention.*matmul", OperatorGroup.GEMM),
    # Memory allocation / layout manipulation.
    (1700, r"(?i)\breshape\b|\bview(_as)?(_real|_complex)?\b|\bflatten\b", OperatorGroup.MEMORY),
    (1701, r"(?i)\btranspose\b|\bpermute\b|aten::t\b|\bas_strided\b", OperatorGroup.MEMORY),
    (1702, r"(?i)(::|\b)(cat|concat(enate)?|stack|split|chunk|unbind)(_|\b)", OperatorGroup.MEMORY),
    (1703, r"(?i)\bcontiguous\b|\bcopy_?\b|\bclone\b|\bexpand(_as)?\b|\brepeat\b", OperatorGroup.MEMORY),
    (1704, r"(?i)\bslice\b|\bgather\b|\bscatter\b|\bnarrow\b|\bselect\b|\bindex(_select|_put)?_?\b", OperatorGroup.MEMORY),
    (1705, r"(?i)aten::to\b|\b_?to_copy\b|\bcast\b|\btype_as\b", OperatorGroup.MEMORY),
    (1706, r"(?i)\b(un)?squeeze(_|\b)|\bunfold\b|\broll\b|\bpad(ding)?\b|\bshape\b|\bsize\b", OperatorGroup.MEMORY),
    (1707, r"(?i)\bempty(_like|_strided)?\b|\bresize_?\b|\bset_\b|\bdetach(_|\b)|\bpin_memory\b", OperatorGroup.MEMORY),
    (1708, r"(?i)memcpy|memset|\bresolve_conj\b|\bresolve_neg\b|\blift_fresh\b", OperatorGroup.MEMORY),
    # Element-wise arithmetic (and the cheap reductions profilers report with them).
    (1800, r"(?i)(::|\b)(add|sub|subtract|rsub|mul|multiply|div|divide|pow|sqrt|rsqrt)(_|\b|\.)", OperatorGroup.ELEMENTWISE_ARITHMETIC),
    (1801, r"(?i)(::|\b)(neg|abs|exp|log|log1p|sin|cos|erf|reciprocal|sign)(_|\b)", OperatorGroup.ELEMENTWISE_ARITHMETIC),
    (1802, r"(?i)(::|\b)(clamp|clip|floor|ceil|round|trunc|remainder|fmod)(_|\b)", OperatorGroup.ELEMENTWISE_ARITHMETIC),
    (1803, r"(?i)(::|\b)(nonzero|where|masked_fill|fill|cumsum|sum|mean|prod)(_|\b)", OperatorGroup.ELEMENTWISE_ARITHMETIC),
    (1804, r"(?i)(::|\b)(maximum|minimum|min|max|amax|amin|argmax|argmin|eq|ne|lt|gt|le|ge|bitwise_\w+)(_|\b)", OperatorGroup.ELEMENTWISE_ARITHMETIC),
    (1805, r"(?i)(::|\b)(arange|ones(_like)?|zeros(_like)?|full(_like)?|scalar_?tensor)(_|\b)", OperatorGroup.ELEMENTWISE_ARITHMETIC),
    (1806, r"(?i)(adaptive_?)?(avg|max|lp)_?pool([123]d)?|reduce_?(sum|mean|max|min|prod|l2)", OperatorGroup.ELEMENTWISE_ARITHMETIC),
    (1807, r"(?i)\b(native_)?dropout\b", OperatorGroup.ELEMENTWISE_ARITHMETIC),
    (1709, r"(?i)\bembedding(_|\b)|\bidentity\b", OperatorGroup.MEMORY),
)


def builtin_ruleset() -> Ruleset:
    """The default taxonomy covering common PyTorch/ORT/kernel spellings."""
    return Ruleset(rules=tuple(ClassificationRule(p, g, prio) for prio, p, g in _BUILTIN_SPECS))


def classify_name(ruleset: Ruleset, name: str) -> tuple[OperatorGroup, bool]:
    """Group for a raw name plus whether any rule matched (vs the fallback)."""
    rule = ruleset.match(name)
    if rule is None:
        return ruleset.fallback, False
    return rule.group, True


def classify(ruleset: Ruleset, event: OperatorEvent, launcher: OperatorEvent | None = None) -> OperatorGroup:
    """Classify one event; an unmatched GPU kernel inherits its launcher's group.

    Kernel names are often opaque ("elementwise_kernel"), so device time is
    attributed to the operator that launched the kernel when the kernel name
    itself matches no rule.
    """
    group, matched = classify_name(ruleset, event.name)
    if matched or event.kind is not EventKind.GPU_KERNEL or launcher is None:
        return group
    launcher_group, launcher_matched = classify_name(ruleset, launcher.name)
    return launcher_group if launcher_matched else group


def classify_events(ruleset: Ruleset, trace: Trace) -> dict[int, OperatorGroup]:
    """Classify every event in a trace, resolving kernel inheritance.

    Inheritance walks from the launching CPU op up its ancestor chain to the
    nearest rule-matched name, so a kernel launched under
    cudaLaunchKernel <- aten::gelu lands in the activation group.
    """
    by_id = trace.event_by_id()
    memo: dict[str, tuple[OperatorGroup, bool]] = {}

    def lookup(name: str) -> tuple[OperatorGroup, bool]:
        if name not in memo:
            memo[name] = classify_name(ruleset, name)
        return memo[name]

    launcher_by_corr: dict[int, OperatorEvent] = {}
    for e in trace.events:
        if e.kind is EventKind.CPU_OP and e.correlation_id is not None:
            launcher_by_corr[e.correlation_id] = e

    out: dict[int, OperatorGroup] = {}
    for e in trace.events:
        group, matched = lookup(e.name)
        if not matched and e.kind is EventKind.GPU_KERNEL and e.correlation_id is not None:
            node = launcher_by_corr.get(e.correlation_id)
            while node is not None:
                node_group, node_matched = lookup(node.name)
                if node_matched:
                    group = node_group
                    break
                node = by_id.get(node.parent_id) if node.parent_id is not None else None
        out[e.id] = group
    return out


# Builtin priorities start at 1000; auto-assigned user rules land at 0..999 and
# therefore win over the builtins.
def parse_rules_text(text: str, source: str = "<rules>") -> list[ClassificationRule]:
    """Parse the plain-text rules grammar.

    One rule per line: ``[priority] group pattern`` (whitespace separated;
    the pattern is the rest of the line). Lines starting with '#' and blank
    lines are ignored. Omitted priorities are assigned 0,1,2,... in file order.
    """
    rules: list[ClassificationRule] = []
    auto = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(None, 1)
        priority: int | None = None
        rest = line
        try:
            priority = int(fields[0])
            rest = fields[1] if len(fields) > 1 else ""
        except ValueError:
            priority = None
        parts = rest.split(None, 1)
        if len(parts) != 2:
            raise BadPattern(f"{source}:{lineno}: expected '[priority] group pattern', got {raw!r}")
        group = parse_group(parts[0])
        pattern = parts[1].strip()
        if priority is None:
            priority = auto
            auto += 1
        try:
            rules.append(ClassificationRule(pattern, group, priority, source=source))
        except BadPattern as exc:
            raise BadPattern(f"{source}:{lineno}: {exc}") from exc
    return rules


def parse_rules_json(text: str, source: str = "<rules>") -> list[ClassificationRule]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"{source}: {exc}") from exc
    if isinstance(doc, dict):
        doc = doc.get("rules", [])
    if not isinstance(doc, list):
        raise BadPattern(f"{source}: expected a JSON list of rules")
    rules = []
    auto = 0
    for i, entry in enumerate(doc):
        if not isinstance(entry, dict) or "pattern" not in entry or "group" not in entry:
            raise BadPattern(f"{source}: rule {i} must have 'pattern' and 'group'")
        priority = entry.get("priority")
        if priority is None:
            priority = auto
            auto += 1
        rules.append(ClassificationRule(str(entry["pattern"]), parse_group(str(entry["group"])), int(priority), source=source))
    return rules


def load_rules(path: str | Path, merge_builtin: bool = True) -> Ruleset:
    """Load user rules from a file and (by default) merge them with the builtins.

    User rules auto-assigned a priority land below the builtin band and
    therefore win; explicit priorities are honored as given.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise BadPattern(f"cannot read rules file {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise BadPattern(f"rules file {path} is not UTF-8 text: {exc}") from exc
    stripped = text.lstrip()
    if stripped.startswith("{") or stripped.startswith("["):
        rules = parse_rules_json(text, source=str(path))
    else:
        rules = parse_rules_text(text, source=str(path))
    if merge_builtin:
        rules = rules + list(builtin_ruleset().rules)
    return Ruleset(rules=tuple(rules))
