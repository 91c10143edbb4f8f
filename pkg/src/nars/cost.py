"""Analytic FLOP and parameter counting for architecture configs.

Counting conventions (documented because "FLOPs" is overloaded in the
model-efficiency literature):

* one FLOP = one multiply-accumulate (MAC); batch norm, activations and
  residual adds are free,
* same padding, ceil-mode spatial arithmetic: out = ceil(in / stride),
* convolutions carry no bias (folded into batch norm) but do carry the
  batch-norm affine pair (2 params per output channel) so parameter totals
  equal a built model's trainable-parameter count,
* squeeze-excitation reduces to max(8, nearest multiple of 8, ties up) of
  a quarter of the block's input channels; its two pointwise convs carry
  biases (they are not followed by batch norm),
* the fully-connected classifier carries a bias,
* an MBConv block is expansion 1x1 conv -> depthwise kxk (stride lives
  here) -> optional SE -> projection 1x1 conv; expanded width is
  round(expansion * c_in),
* the pooled head (mbpool) is expansion 1x1 -> optional depthwise kxk ->
  global average pool (counted as one MAC per pooled element) -> 1x1 conv
  with bias to the head width,
* a skip stage is free when channels match, otherwise a 1x1 conv + BN.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .space import ArchConfig, StageConfig


@dataclass(frozen=True)
class LayerCost:
    label: str
    out_resolution: tuple[int, int]
    flops: int
    params: int


@dataclass(frozen=True)
class CostReport:
    layers: tuple[LayerCost, ...]
    total_flops: int
    total_params: int


@dataclass(frozen=True)
class Constraint:
    metric: str  # "flops" | "params"
    bound: int

    def __post_init__(self):
        if self.metric not in ("flops", "params"):
            raise ValueError(f"unknown constraint metric {self.metric!r}")
        if self.bound <= 0:
            raise ValueError("constraint bound must be positive")


ConstraintSet = tuple[Constraint, ...]


def _out_hw(h: int, w: int, stride: int) -> tuple[int, int]:
    return -(-h // stride), -(-w // stride)


def se_channels(c_in: int) -> int:
    """Reduction width of a squeeze-excitation block for a given block input."""
    return max(8, 8 * int(math.floor(c_in / 4 / 8 + 0.5)))


def mid_channels(expansion: float, c_in: int) -> int:
    return max(1, int(expansion * c_in + 0.5))


class _Tally:
    def __init__(self, resolution: int):
        self.h = self.w = resolution
        self.layers: list[LayerCost] = []

    def add(self, label: str, flops: int, params: int) -> None:
        self.layers.append(LayerCost(label, (self.h, self.w), flops, params))

    def conv(self, label: str, k: int, c_in: int, c_out: int, stride: int = 1,
             *, bn: bool = True, bias: bool = False) -> None:
        self.h, self.w = _out_hw(self.h, self.w, stride)
        flops = self.h * self.w * c_in * c_out * k * k
        params = k * k * c_in * c_out + (c_out if bias else 0) + (2 * c_out if bn else 0)
        self.add(label, flops, params)

    def dwconv(self, label: str, k: int, channels: int, stride: int = 1) -> None:
        self.h, self.w = _out_hw(self.h, self.w, stride)
        self.add(label, self.h * self.w * channels * k * k, k * k * channels + 2 * channels)

    def se(self, label: str, channels: int, c_base: int) -> None:
        c_se = se_channels(c_base)
        area = self.h * self.w
        flops = area * channels + channels * c_se + c_se * channels + area * channels
        params = channels * c_se + c_se + c_se * channels + channels
        self.add(label, flops, params)


def _mbconv_block(t: _Tally, label: str, cfg: StageConfig, c_in: int, expansion: float, stride: int) -> None:
    c_mid = mid_channels(expansion, c_in)
    t.conv(f"{label}.expand", 1, c_in, c_mid)
    t.dwconv(f"{label}.dw", cfg.kernel, c_mid, stride)
    if cfg.se:
        t.se(f"{label}.se", c_mid, c_in)
    t.conv(f"{label}.project", 1, c_mid, cfg.channels)


def cost(arch: ArchConfig) -> CostReport:
    """Per-layer and total multiply-accumulate / parameter counts."""
    t = _Tally(arch.resolution)
    c = 3
    for si, cfg in enumerate(arch.stages):
        name = f"stage{si}"
        if cfg.block == "conv":
            for b in range(cfg.depth):
                t.conv(f"{name}.b{b}.conv", cfg.kernel, c, cfg.channels, cfg.stride if b == 0 else 1)
                c = cfg.channels
        elif cfg.block == "mbconv":
            for b in range(cfg.depth):
                e = cfg.expansion_first if b == 0 else cfg.expansion_rest
                _mbconv_block(t, f"{name}.b{b}", cfg, c, e, cfg.stride if b == 0 else 1)
                c = cfg.channels
        elif cfg.block == "mbpool":
            c_mid = mid_channels(cfg.expansion_first, c)
            t.conv(f"{name}.expand", 1, c, c_mid)
            if cfg.kernel is not None:
                t.dwconv(f"{name}.dw", cfg.kernel, c_mid)
            t.add(f"{name}.pool", t.h * t.w * c_mid, 0)
            t.h = t.w = 1
            t.conv(f"{name}.head", 1, c_mid, cfg.channels, bn=False, bias=True)
            c = cfg.channels
        elif cfg.block == "fc":
            t.add(f"{name}.fc", c * cfg.channels, c * cfg.channels + cfg.channels)
            c = cfg.channels
        elif cfg.block == "skip":
            if cfg.channels != c:
                t.conv(f"{name}.skip", 1, c, cfg.channels)
                c = cfg.channels
            else:
                t.add(f"{name}.skip", 0, 0)
        else:
            raise ValueError(f"unknown block kind {cfg.block!r}")
    return CostReport(
        layers=tuple(t.layers),
        total_flops=sum(l.flops for l in t.layers),
        total_params=sum(l.params for l in t.layers),
    )


def check_constraints(arch: ArchConfig, constraints: ConstraintSet) -> tuple[bool, list[tuple[str, int, int]]]:
    """Inclusive bound check; returns (satisfied, [(metric, value, bound), ...])."""
    report = cost(arch)
    return check_report(report, constraints)


def check_report(report: CostReport, constraints: ConstraintSet) -> tuple[bool, list[tuple[str, int, int]]]:
    values = {"flops": report.total_flops, "params": report.total_params}
    violations = [(c.metric, values[c.metric], c.bound) for c in constraints if values[c.metric] > c.bound]
    return not violations, violations
