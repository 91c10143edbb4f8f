"""Spearman rank correlation and early-stop epoch detection."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import UndefinedCorrelationError


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties.

    Computed as the Pearson correlation of the rank vectors, which stays
    exact under ties (the classic 1 - 6*sum(d^2)/... shortcut does not).
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.ndim != 1 or x.size < 2:
        raise ValueError("need two 1-D sequences of length >= 2")
    rx = rankdata(x, method="average")
    ry = rankdata(y, method="average")
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        raise UndefinedCorrelationError("rank correlation undefined for constant input")
    return float((dx @ dy) / np.sqrt(vx * vy))


@dataclass(frozen=True)
class EarlyStopResult:
    epoch: int                       # 1-based epoch index
    reached: bool                    # False when the threshold was never crossed
    correlations: tuple[float, ...]  # per-epoch rho (nan where undefined)
    skipped_epochs: tuple[int, ...]  # epochs with degenerate (constant) accuracies


def determine_early_stop(curves: Sequence[Sequence[float]], threshold: float) -> EarlyStopResult:
    """Smallest epoch whose accuracy ranking matches the final ranking.

    Scans epochs in order and returns the first one where the Spearman
    correlation between epoch-e accuracies and final accuracies reaches the
    threshold.  The final epoch is excluded from the scan (it correlates
    with itself by definition); when the threshold is never crossed the
    final epoch is returned with reached=False.
    """
    if len(curves) < 2:
        raise ValueError("need at least two curves")
    lengths = {len(c) for c in curves}
    if len(lengths) != 1:
        raise ValueError(f"curves have unequal lengths: {sorted(lengths)}")
    epochs = lengths.pop()
    if epochs < 1:
        raise ValueError("curves are empty")

    finals = [c[-1] for c in curves]
    rhos: list[float] = []
    skipped: list[int] = []
    found: int | None = None
    for e in range(epochs - 1):
        at_e = [c[e] for c in curves]
        try:
            rho = spearman(at_e, finals)
        except UndefinedCorrelationError:
            skipped.append(e + 1)
            rhos.append(float("nan"))
            continue
        rhos.append(rho)
        if found is None and rho >= threshold:
            found = e + 1
    return EarlyStopResult(
        epoch=found if found is not None else epochs,
        reached=found is not None,
        correlations=tuple(rhos),
        skipped_epochs=tuple(skipped),
    )
