"""Candidate -> feature-vector encoding.

Categorical parameters (kernel choices, optimizer, ema) become one-hot
groups; numeric grids become min-max normalized slots, (v - low) / (high -
low) in file units.  Architecture slots precede recipe slots so the
predictor's encoder can consume the architecture prefix alone.  Fixed
parameters contribute no slots.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._util import canonical_json, sha256_hex
from .errors import ValidationError
from .space import Candidate, SearchSpaceDef, extract_genes, free_params, validate_candidate


@dataclass(frozen=True)
class Slot:
    """One vector position: a one-hot choice or a min-max normalized value."""

    key: str
    kind: str  # "onehot" | "minmax"
    choice: object = None
    low: float = 0.0
    high: float = 1.0


@dataclass(frozen=True)
class EncodingLayout:
    arch_slots: tuple[Slot, ...]
    recipe_slots: tuple[Slot, ...]

    @property
    def arch_dim(self) -> int:
        return len(self.arch_slots)

    @property
    def recipe_dim(self) -> int:
        return len(self.recipe_slots)

    @property
    def dim(self) -> int:
        return self.arch_dim + self.recipe_dim

    @property
    def slots(self) -> tuple[Slot, ...]:
        return self.arch_slots + self.recipe_slots

    def fingerprint(self) -> str:
        desc = [(s.key, s.kind, repr(s.choice), s.low, s.high) for s in self.slots]
        return sha256_hex(canonical_json(desc))


def build_layout(space: SearchSpaceDef) -> EncodingLayout:
    arch: list[Slot] = []
    recipe: list[Slot] = []
    for p in free_params(space):
        dest = recipe if p.key.startswith("recipe.") else arch
        if p.kind == "onehot":
            dest.extend(Slot(p.key, "onehot", choice=c) for c in p.values)
        else:
            dest.append(Slot(p.key, "minmax", low=float(p.values[0]), high=float(p.values[-1])))
    return EncodingLayout(arch_slots=tuple(arch), recipe_slots=tuple(recipe))


def encode(space: SearchSpaceDef, candidate: Candidate, layout: EncodingLayout | None = None,
           check: bool = True) -> np.ndarray:
    """Encode one candidate; raises ValidationError naming any off-grid field.

    `check=False` skips grid validation for candidates known valid by
    construction (sampling and mutation output).
    """
    if check:
        validate_candidate(space, candidate)
    if layout is None:
        layout = build_layout(space)
    genes = extract_genes(space, candidate)
    vec = np.empty(layout.dim, dtype=np.float64)
    for i, slot in enumerate(layout.slots):
        value = genes[slot.key]
        if slot.kind == "onehot":
            vec[i] = 1.0 if value == slot.choice else 0.0
        else:
            vec[i] = (value - slot.low) / (slot.high - slot.low)
    return vec


def encode_batch(space: SearchSpaceDef, candidates: Sequence[Candidate],
                 layout: EncodingLayout | None = None, check: bool = True) -> np.ndarray:
    if layout is None:
        layout = build_layout(space)
    out = np.empty((len(candidates), layout.dim), dtype=np.float64)
    for i, cand in enumerate(candidates):
        out[i] = encode(space, cand, layout, check=check)
    return out


class CandidateEncoder(BaseEstimator, TransformerMixin):
    """Transformer turning Candidates into the predictor's feature matrix."""

    def __init__(self, space: SearchSpaceDef):
        self.space = space

    def fit(self, X=None, y=None) -> "CandidateEncoder":
        self.layout_ = build_layout(self.space)
        return self

    def transform(self, X: Sequence[Candidate]) -> np.ndarray:
        if not hasattr(self, "layout_"):
            self.fit()
        return encode_batch(self.space, X, self.layout_)

    def transform_one(self, candidate: Candidate) -> np.ndarray:
        if not hasattr(self, "layout_"):
            self.fit()
        return encode(self.space, candidate, self.layout_)


def check_vector(vec: np.ndarray, dim: int, what: str) -> np.ndarray:
    """Validate and coerce a 1-D float vector of the expected length."""
    arr = np.asarray(vec, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != dim:
        from .errors import ShapeError

        raise ShapeError(f"{what}: expected shape ({dim},), got {arr.shape}")
    return arr


def check_matrix(mat: np.ndarray, dim: int, what: str) -> np.ndarray:
    """Validate and coerce a 2-D float matrix with the expected column count."""
    arr = np.asarray(mat, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        from .errors import ShapeError

        raise ShapeError(f"{what}: expected shape (n, {dim}), got {arr.shape}")
    return arr
