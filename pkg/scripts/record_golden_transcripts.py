"""Record golden wire-protocol transcripts for evaluator plugins.

Writes one JSON line per eval request to tests/golden/transcripts.jsonl.
Plugins replaying these requests must answer with well-formed progress and
result messages; the serializer test pins the exact bytes so the wire
format cannot drift silently.
"""
from pathlib import Path

from nars.protocol import EvalRequest, serialize_request
from nars.space import build_candidate, free_params, load_space

SMOKE_SPACE = """
version: 1
name: plugin-smoke
resolution: 32
sgd_lr_multiplier: 4.0
stages:
  - {block: conv, kernel: [3], channels: 8, depth: 1, stride: 2, se: false, activation: hswish}
  - {block: mbconv, kernel: [3, 5], expansion: {low: 2, high: 3}, channels: {low: 8, high: 16, step: 8}, depth: {low: 1, high: 2}, stride: 2, se: true, activation: hswish}
  - {block: mbconv, kernel: [3], expansion: 2, channels: 16, depth: 1, stride: 1, se: false, activation: hswish}
  - {block: mbpool, kernel: [3], expansion: 3, channels: 64, depth: 1, activation: hswish}
  - {block: fc, channels: 4, depth: 1}
recipe:
  lr: {low: 20, high: 30, unit: 1.0e-3}
  optimizer: [rmsprop, sgd]
  ema: [true, false]
  dropout: {low: 1, high: 31, unit: 1.0e-2}
  stochastic_depth: {low: 10, high: 31, unit: 1.0e-1}
  mixup: {low: 0, high: 41, unit: 1.0e-1}
  weight_decay: {low: 7, high: 21, unit: 1.0e-6}
"""


def smoke_space():
    return load_space(SMOKE_SPACE)


def transcript_requests() -> list[EvalRequest]:
    space = smoke_space()
    base = {p.key: p.values[0] for p in free_params(space)}

    variants = [
        dict(base),
        {**base, "stage1.kernel": 5, "stage1.expansion": 3.0, "recipe.optimizer": "sgd",
         "recipe.lr": 25, "recipe.mixup": 20},
        {**base, "stage1.channels": 16, "stage1.depth": 2, "recipe.ema": False,
         "recipe.dropout": 20, "recipe.stochastic_depth": 20},
    ]
    return [EvalRequest(id=i + 1, candidate=build_candidate(space, genes), epoch_budget=2, seed=41 + i)
            for i, genes in enumerate(variants)]


def main() -> None:
    space = smoke_space()
    out = Path(__file__).resolve().parent.parent / "tests" / "golden" / "transcripts.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [serialize_request(req, space) for req in transcript_requests()]
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {len(lines)} requests to {out}")


if __name__ == "__main__":
    main()
