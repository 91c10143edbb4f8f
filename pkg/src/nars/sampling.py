"""Uniform and quasi-Monte-Carlo candidate sampling.

QMC points come from a Sobol sequence (scipy), one dimension per free
parameter; shared groups therefore consume a single dimension.  Points map
onto grids by floor(u * grid_size) indexing so every sample lands exactly
on a grid value.
"""
from __future__ import annotations

import warnings

import numpy as np
from scipy.stats import qmc

from .space import Candidate, SearchSpaceDef, build_candidate, free_params


def sobol_sequence(dim: int, n: int, seed: int | None = None) -> np.ndarray:
    """(n, dim) Sobol points.

    With a seed the sequence is Owen-scrambled (different per seed,
    deterministic).  Without one it is the plain sequence with the leading
    all-zeros point skipped.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # non power-of-two draw sizes are fine here
        if seed is None:
            engine = qmc.Sobol(d=dim, scramble=False)
            engine.fast_forward(1)
            return engine.random(n)
        engine = qmc.Sobol(d=dim, scramble=True, seed=seed)
        return engine.random(n)


def _map_to_grid(u: np.ndarray, size: int) -> np.ndarray:
    idx = np.floor(u * size).astype(int)
    return np.minimum(idx, size - 1)


def sample_uniform(space: SearchSpaceDef, seed: int) -> Candidate:
    """One candidate with every grid value equally likely (shared groups drawn once)."""
    rng = np.random.default_rng(seed)
    genes = {p.key: p.values[rng.integers(len(p.values))] for p in free_params(space)}
    return build_candidate(space, genes)


def sample_uniform_many(space: SearchSpaceDef, n: int, seed: int) -> list[Candidate]:
    rng = np.random.default_rng(seed)
    params = free_params(space)
    out = []
    for _ in range(n):
        genes = {p.key: p.values[rng.integers(len(p.values))] for p in params}
        out.append(build_candidate(space, genes))
    return out


def sample_qmc_pool(space: SearchSpaceDef, n: int, seed: int | None = None) -> list[Candidate]:
    """n candidates from a scrambled Sobol sequence over the free parameters."""
    params = free_params(space)
    u = sobol_sequence(len(params), n, seed=seed)
    pool = []
    for row in u:
        genes = {p.key: p.values[_map_to_grid(row[j], len(p.values))] for j, p in enumerate(params)}
        pool.append(build_candidate(space, genes))
    return pool
