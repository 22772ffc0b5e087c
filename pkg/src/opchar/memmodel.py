"""Analytical memory-footprint decomposition and max-context solver.

Footprint = weights + KV cache + activations + recurrent state + overhead:

    weights     = n_params * p
    kv_cache    = B * S * L_attn * D_kv * 2 * p   (D_kv = n_kv_heads * head_dim under GQA)
    activations = B * S * D * C * p
    state       = n_layers_total * state_bytes_per_layer   (sequence-independent)

The activation factor C depends on model architecture and runtime
implementation, so it is always a config input with documented presets and
never invented here. All byte math is arbitrary-precision integer arithmetic;
GB figures are reported decimal (1 GB = 1e9 bytes).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .errors import BadConfig, MalformedJson

SEQ_CAP = 2**31 - 1


@dataclass(frozen=True)
class ModelMemConfig:
    n_params: int
    p_bytes: int
    n_layers_attention: int
    n_layers_total: int
    hidden_dim: int
    n_kv_heads: int | None = None
    head_dim: int | None = None
    activation_factor_c: int = 0
    ssm_state_bytes_per_layer: int = 0
    overhead_bytes: int = 0
    label: str = ""

    def __post_init__(self):
        for name in ("n_params", "n_layers_attention", "n_layers_total", "hidden_dim",
                     "activation_factor_c", "ssm_state_bytes_per_layer", "overhead_bytes"):
            if getattr(self, name) < 0:
                raise BadConfig(f"{name} must be >= 0")
        if self.p_bytes not in (1, 2, 4):
            raise BadConfig(f"p_bytes must be 1, 2 or 4, got {self.p_bytes}")
        if (self.n_kv_heads is None) != (self.head_dim is None):
            raise BadConfig("n_kv_heads and head_dim must be set together")
        if self.n_kv_heads is not None and (self.n_kv_heads < 0 or self.head_dim < 0):
            raise BadConfig("n_kv_heads and head_dim must be >= 0")

    @property
    def kv_width(self) -> int:
        """Effective KV hidden width: n_kv_heads*head_dim under GQA, else hidden_dim."""
        if self.n_kv_heads is not None:
            return self.n_kv_heads * self.head_dim
        return self.hidden_dim


@dataclass(frozen=True)
class MemFootprint:
    weights_bytes: int
    kv_cache_bytes: int
    activation_bytes: int
    ssm_state_bytes: int
    overhead_bytes: int

    @property
    def total_bytes(self) -> int:
        return (self.weights_bytes + self.kv_cache_bytes + self.activation_bytes
                + self.ssm_state_bytes + self.overhead_bytes)


def footprint(cfg: ModelMemConfig, batch: int, seq: int) -> MemFootprint:
    if batch < 1:
        raise BadConfig(f"batch must be >= 1, got {batch}")
    if seq < 0:
        raise BadConfig(f"seq must be >= 0, got {seq}")
    return MemFootprint(
        weights_bytes=cfg.n_params * cfg.p_bytes,
        kv_cache_bytes=batch * seq * cfg.n_layers_attention * cfg.kv_width * 2 * cfg.p_bytes,
        activation_bytes=batch * seq * cfg.hidden_dim * cfg.activation_factor_c * cfg.p_bytes,
        ssm_state_bytes=cfg.n_layers_total * cfg.ssm_state_bytes_per_layer,
        overhead_bytes=cfg.overhead_bytes,
    )


def per_token_bytes(cfg: ModelMemConfig, batch: int) -> int:
    """Constant marginal cost of one additional sequence position."""
    return batch * (cfg.n_layers_attention * cfg.kv_width * 2
                    + cfg.hidden_dim * cfg.activation_factor_c) * cfg.p_bytes


@dataclass(frozen=True)
class MaxSeqResult:
    s_max: int
    limited_by: str  # "budget" | "sequence-independent" | "over-budget" | "capped"

    @property
    def usable(self) -> bool:
        return self.limited_by != "over-budget"


def max_seq_len(cfg: ModelMemConfig, batch: int, budget_bytes: int) -> MaxSeqResult:
    """Largest S whose total footprint fits the budget (closed form)."""
    if budget_bytes <= 0:
        raise BadConfig(f"budget_bytes must be > 0, got {budget_bytes}")
    fixed = footprint(cfg, batch, 0).total_bytes
    if fixed > budget_bytes:
        return MaxSeqResult(0, "over-budget")
    marginal = per_token_bytes(cfg, batch)
    if marginal == 0:
        return MaxSeqResult(SEQ_CAP, "sequence-independent")
    s = (budget_bytes - fixed) // marginal
    if s >= SEQ_CAP:
        return MaxSeqResult(SEQ_CAP, "capped")
    return MaxSeqResult(s, "budget")


@dataclass(frozen=True)
class ArchEntry:
    label: str
    s_max: int
    limited_by: str
    ratio_vs_transformer: float | None


def is_transformer(cfg: ModelMemConfig) -> bool:
    """A config with a growing KV cache counts as a transformer entry."""
    return cfg.n_layers_attention > 0 and cfg.kv_width > 0


def compare_architectures(cfgs: Sequence[ModelMemConfig], batch: int,
                          budget_bytes: int) -> tuple[ArchEntry, ...]:
    """Rank configs by achievable sequence length under one memory budget."""
    if len(cfgs) == 0:
        raise BadConfig("compare_architectures needs at least one config")
    results = [(cfg, max_seq_len(cfg, batch, budget_bytes)) for cfg in cfgs]
    transformer_best = max(
        (r.s_max for cfg, r in results if is_transformer(cfg)), default=None)
    entries = [
        ArchEntry(
            label=cfg.label or f"config{i}",
            s_max=r.s_max,
            limited_by=r.limited_by,
            ratio_vs_transformer=(r.s_max / transformer_best) if transformer_best else None,
        )
        for i, (cfg, r) in enumerate(results)
    ]
    entries.sort(key=lambda e: (-e.s_max, e.label))
    return tuple(entries)


_CONFIG_FIELDS = (
    "n_params", "p_bytes", "n_layers_attention", "n_layers_total", "hidden_dim",
    "n_kv_heads", "head_dim", "activation_factor_c", "ssm_state_bytes_per_layer",
    "overhead_bytes", "label",
)


def config_from_dict(doc: dict) -> ModelMemConfig:
    unknown = set(doc) - set(_CONFIG_FIELDS)
    if unknown:
        raise BadConfig(f"unknown config fields: {sorted(unknown)}")
    kwargs = {}
    for name in _CONFIG_FIELDS:
        if name not in doc or doc[name] is None:
            continue
        value = doc[name]
        kwargs[name] = str(value) if name == "label" else int(value)
    try:
        return ModelMemConfig(**kwargs)
    except TypeError as exc:
        raise BadConfig(f"bad memory config: {exc}") from exc


def load_config(path: str | Path, overrides: dict | None = None) -> ModelMemConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise BadConfig(f"cannot read config {path}: {exc}") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedJson(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise BadConfig(f"{path}: expected a JSON object")
    cfg = config_from_dict(doc)
    if overrides:
        try:
            cfg = replace(cfg, **{
                k: (str(v) if k == "label" else int(v)) for k, v in overrides.items()
            })
        except TypeError as exc:
            raise BadConfig(f"bad override: {exc}") from exc
    return cfg
