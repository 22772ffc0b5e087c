#!/usr/bin/env python3
"""Profile a model under the PyTorch profiler and export a Chrome trace.

Runs a preset toy model (or any importable model factory) for configurable
warm-up and measured iterations, injects generation-phase markers via
record_function ("prefill" span, one "decode" span per generated token), and
writes the profiler's own Chrome export untouched plus a metadata sidecar
(<out>.meta.json) that `opchar ingest --meta` merges into the trace metadata.

Usage:
  python capture.py --model toy-mlp --batch 8 --seq 64 --warmup 3 --iters 5 \
      --device cpu -o trace.json
  python capture.py --model toy-generator --seq 16 --decode-tokens 8 -o gen.json
  python capture.py --model mypkg.models:build --batch 2 --seq 32 -o trace.json

A `module:callable` model factory is called as factory(batch, seq) and must
return (torch.nn.Module, example_input_tensor).
"""

from __future__ import annotations

import argparse
import importlib
import json
import sys
from pathlib import Path

import torch
from torch import nn
from torch.profiler import ProfilerActivity, profile, record_function


class ToyMlp(nn.Module):
    # wide enough that compute dwarfs per-op dispatch overhead on CPU
    def __init__(self, width: int = 1024):
        super().__init__()
        self.fc1 = nn.Linear(width, width)
        self.fc2 = nn.Linear(width, width)

    def forward(self, x):
        return self.fc2(torch.relu(self.fc1(x)))


class ToyGenerator(nn.Module):
    """Tiny autoregressive token model: embedding -> linear head."""

    VOCAB = 8192

    def __init__(self, dim: int = 512):
        super().__init__()
        self.embed = nn.Embedding(self.VOCAB, dim)
        self.norm = nn.LayerNorm(dim)
        self.ff = nn.Linear(dim, dim)
        self.head = nn.Linear(dim, self.VOCAB)

    def forward(self, tokens):
        h = self.norm(self.embed(tokens))
        h = torch.relu(self.ff(h))
        return self.head(h)

    @torch.no_grad()
    def generate(self, prompt: torch.Tensor, n_tokens: int) -> int:
        with record_function("prefill"):
            logits = self(prompt)
            next_token = logits[:, -1, :].argmax(dim=-1, keepdim=True)
        generated = 0
        for _ in range(n_tokens):
            with record_function("decode"):
                logits = self(next_token)
                next_token = logits[:, -1, :].argmax(dim=-1, keepdim=True)
                generated += 1
        return generated


def build_model(spec: str, batch: int, seq: int):
    if spec == "toy-mlp":
        return ToyMlp(), torch.randn(max(batch, 1) * 64, 1024)
    if spec == "toy-generator":
        model = ToyGenerator()
        prompt = torch.randint(0, ToyGenerator.VOCAB, (batch, seq))
        return model, prompt
    if ":" not in spec:
        raise SystemExit(f"capture: unknown preset {spec!r}; use toy-mlp, toy-generator, "
                         f"or a module:callable factory")
    mod_name, _, attr = spec.partition(":")
    try:
        factory = getattr(importlib.import_module(mod_name), attr)
        model, example = factory(batch, seq)
    except Exception as exc:  # surface load failures as a clean exit
        raise SystemExit(f"capture: failed to load model {spec!r}: {exc}")
    return model, example


def run(args) -> None:
    device = torch.device(args.device)
    if device.type == "cuda" and not torch.cuda.is_available():
        raise SystemExit("capture: --device cuda requested but CUDA is unavailable")
    model, example = build_model(args.model, args.batch, args.seq)
    model = model.to(device).eval()
    example = example.to(device)
    generative = hasattr(model, "generate")

    def one_iteration():
        if generative:
            return model.generate(example, args.decode_tokens)
        with torch.no_grad():
            model(example)
        return 0

    for _ in range(args.warmup):
        one_iteration()

    activities = [ProfilerActivity.CPU]
    if device.type == "cuda":
        activities.append(ProfilerActivity.CUDA)
    decode_total = 0
    with profile(activities=activities, record_shapes=True) as prof:
        for _ in range(args.iters):
            with record_function("iteration"):
                decode_total += one_iteration()

    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    prof.export_chrome_trace(str(out))
    meta = {
        "model": args.model,
        "batch": args.batch,
        "seq": args.seq,
        "precision": args.precision,
        "device": args.device,
        "warmup": args.warmup,
        "iters": args.iters,
        "decode_tokens": decode_total,
    }
    out.with_name(out.name + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n",
                                                      encoding="utf-8")
    print(f"capture: wrote {out} (+ sidecar), {args.iters} measured iteration(s)", file=sys.stderr)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--model", required=True,
                        help="preset (toy-mlp, toy-generator) or module:callable factory")
    parser.add_argument("--batch", type=int, default=1)
    parser.add_argument("--seq", type=int, default=16)
    parser.add_argument("--warmup", type=int, default=0)
    parser.add_argument("--iters", type=int, default=1)
    parser.add_argument("--decode-tokens", type=int, default=8,
                        help="tokens generated per iteration for generative models")
    parser.add_argument("--device", choices=["cpu", "cuda"], default="cpu")
    parser.add_argument("--precision", default="fp32")
    parser.add_argument("-o", "--output", required=True)
    args = parser.parse_args(argv)
    try:
        run(args)
    except SystemExit:
        raise
    except (RuntimeError, MemoryError) as exc:  # OOM and friends
        print(f"capture: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
