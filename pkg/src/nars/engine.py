"""Search orchestration: constrained iterative optimization and the
predictor-guided evolutionary stage.

Stage 2 loop per iteration: pick a batch of promising pool candidates
(random in iteration 1, best-per-FLOP-bin afterwards), evaluate them
through the evaluator at the early-stop budget (full budget in iteration
1, which also calibrates the early-stop epoch), extend the labeled
dataset, and refit the accuracy predictor from its pretrained weights.

Stage 3 evolves a population seeded with the best measured candidates plus
random valid ones; children are mutations rejection-sampled against the
resource constraints and survival is by predicted score.  The mutation
rate halves when the best predicted score stalls and doubles while it
improves.

All randomness is derived from (seed, purpose, iteration) so an
interrupted run resumed from a checkpoint reproduces the uninterrupted
results exactly.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from ._util import canonical_json, derive_seed, sha256_hex, short_id
from .correlation import EarlyStopResult, determine_early_stop, spearman  # noqa: F401  (re-exported)
from .cost import ConstraintSet, check_report, cost
from .encoding import EncodingLayout, build_layout, encode_batch
from .errors import CheckpointError
from .predictor import TwoHeadPredictor
from .protocol import EvalRequest, EvalResult
from .sampling import sample_qmc_pool, sample_uniform
from .space import (
    Candidate,
    SearchSpaceDef,
    build_candidate,
    candidate_from_dict,
    candidate_to_dict,
    extract_genes,
    free_params,
)

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class Evaluator(Protocol):
    def evaluate(self, requests: Sequence[EvalRequest]) -> list[EvalResult]: ...


@dataclass(frozen=True)
class Stage1Config:
    split: float = 0.8
    epochs: int = 100

    def __post_init__(self):
        if not 0 < self.split < 1:
            raise ValueError("split must be in (0, 1)")


@dataclass(frozen=True)
class Stage2Config:
    pool_size: int = 20000
    batch: int = 48
    iterations: int = 5
    early_stop_threshold: float = 0.92
    epochs_full: int = 150
    constraints: ConstraintSet = ()
    flop_window: tuple[float, float] | None = (400e6, 800e6)

    def __post_init__(self):
        if self.batch > self.pool_size:
            raise ValueError("batch must not exceed pool_size")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 < self.early_stop_threshold <= 1:
            raise ValueError("early_stop_threshold must be in (0, 1]")
        if self.flop_window is not None and self.flop_window[0] > self.flop_window[1]:
            raise ValueError("flop_window inverted")


@dataclass(frozen=True)
class Stage3Config:
    p_best: int = 50
    q_random: int = 50
    children_per_candidate: int = 24
    top_k: int = 40
    epsilon: float = 1e-6
    constraints: ConstraintSet = ()
    max_generations: int = 100
    initial_mutation_rate: float = 0.1
    mutation_retry_cap: int = 100

    def __post_init__(self):
        if self.p_best + self.q_random < self.top_k:
            raise ValueError("p_best + q_random must be >= top_k")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class LabeledSample:
    candidate: Candidate
    accuracy: float
    epochs_trained: int
    full_budget: bool
    curve: tuple[float, ...] | None = None


@dataclass
class SearchState:
    space: SearchSpaceDef
    config: Stage2Config
    seed: int
    pool: list[Candidate]
    pool_X: np.ndarray
    pool_flops: np.ndarray
    pool_params: np.ndarray
    predictor: TwoHeadPredictor
    refit_base: dict[str, np.ndarray]
    dataset: list[LabeledSample] = field(default_factory=list)
    evaluated_keys: set[str] = field(default_factory=set)
    failures: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    iteration: int = 0
    early_stop_epoch: int | None = None
    next_request_id: int = 0

    def pool_hash(self) -> str:
        return sha256_hex(canonical_json([c.key() for c in self.pool]))


# ---------------------------------------------------------------------------
# Pool construction


def build_pool(space: SearchSpaceDef, n: int, seed: int, layout: EncodingLayout,
               flop_window: tuple[float, float] | None = None):
    """QMC pool with cost labels, optionally filtered to a FLOP window."""
    candidates = sample_qmc_pool(space, n, seed=seed)
    reports = [cost(c.arch) for c in candidates]
    keep = range(len(candidates))
    if flop_window is not None:
        lo, hi = flop_window
        keep = [i for i in keep if lo <= reports[i].total_flops <= hi]
        candidates = [candidates[i] for i in keep]
        reports = [reports[i] for i in keep]
    X = encode_batch(space, candidates, layout)
    flops = np.array([r.total_flops for r in reports], dtype=np.float64)
    params = np.array([r.total_params for r in reports], dtype=np.float64)
    return candidates, X, flops, params


# ---------------------------------------------------------------------------
# Batch selection


def _lex_key(vec: np.ndarray) -> tuple:
    return tuple(vec.tolist())


def select_batch(state: SearchState, m: int, rng: np.random.Generator) -> list[int]:
    """Pool indexes to evaluate this iteration.

    Iteration 1 picks uniformly at random.  Later iterations split the
    FLOP window into m equal-width bins and take the unevaluated candidate
    with the highest predicted score in each bin; empty bins are backfilled
    with the globally next-best unevaluated candidates.  Ties break toward
    the lexicographically smallest encoded vector.
    """
    unevaluated = [i for i in range(len(state.pool)) if state.pool[i].key() not in state.evaluated_keys]
    if not unevaluated:
        state.warnings.append("pool exhausted")
        return []

    picked: list[int] = []
    picked_keys: set[str] = set()

    def take(i: int) -> None:
        picked.append(i)
        picked_keys.add(state.pool[i].key())

    if state.iteration == 0:
        order = rng.permutation(len(unevaluated))
        for j in order:
            i = unevaluated[j]
            if state.pool[i].key() not in picked_keys:
                take(i)
            if len(picked) == m:
                break
        if len(picked) < m:
            state.warnings.append("pool exhausted")
        return picked

    scores = state.predictor.predict(state.pool_X[unevaluated])
    ranked = sorted(
        range(len(unevaluated)),
        key=lambda j: (-scores[j], _lex_key(state.pool_X[unevaluated[j]])),
    )

    window = state.config.flop_window
    if window is not None and window[1] > window[0]:
        lo, hi = window
        span = hi - lo
        best_per_bin: dict[int, int] = {}
        for j in ranked:
            i = unevaluated[j]
            b = min(int((state.pool_flops[i] - lo) / span * m), m - 1)
            if b not in best_per_bin:
                best_per_bin[b] = j
        for b in sorted(best_per_bin):
            j = best_per_bin[b]
            if state.pool[unevaluated[j]].key() not in picked_keys:
                take(unevaluated[j])

    for j in ranked:
        if len(picked) >= m:
            break
        i = unevaluated[j]
        if state.pool[i].key() not in picked_keys:
            take(i)
    if len(picked) < m:
        state.warnings.append("pool exhausted")
    return picked[:m]


# ---------------------------------------------------------------------------
# Stage 2


def _fit_target(sample: LabeledSample, early_stop_epoch: int | None) -> float:
    """Budget-consistent training target.

    Full-budget samples are re-read at the early-stop epoch so every label
    the predictor sees reflects the same training budget; the stored
    accuracy stays full-budget for reporting.
    """
    if (early_stop_epoch is not None and sample.curve is not None
            and len(sample.curve) >= early_stop_epoch):
        return sample.curve[early_stop_epoch - 1]
    return sample.accuracy


def _refit(state: SearchState, t: int) -> None:
    """Retrain the accuracy predictor on the full dataset from its pretrained base."""
    X = encode_batch(state.space, [s.candidate for s in state.dataset], check=False)
    y = np.array([_fit_target(s, state.early_stop_epoch) for s in state.dataset])
    state.predictor.restore_weights(state.refit_base)
    state.predictor.fit(X, y, seed=derive_seed(state.seed, "refit", t))


def stage2_run(space: SearchSpaceDef, evaluator: Evaluator, predictor: TwoHeadPredictor,
               config: Stage2Config, seed: int,
               checkpoint_dir: str | Path | None = None,
               resume_from: str | Path | None = None,
               pool=None) -> SearchState:
    """Constrained iterative optimization (select -> evaluate -> refit)."""
    layout = build_layout(space)
    if resume_from is not None:
        state = load_checkpoint(resume_from, space, config)
    else:
        if pool is None:
            pool = build_pool(space, config.pool_size, derive_seed(seed, "pool"), layout,
                              flop_window=config.flop_window)
        candidates, X, flops, params = pool
        state = SearchState(
            space=space, config=config, seed=seed,
            pool=candidates, pool_X=X, pool_flops=flops, pool_params=params,
            predictor=predictor, refit_base=predictor.clone_weights(),
        )

    for t in range(state.iteration + 1, config.iterations + 1):
        rng = np.random.default_rng(derive_seed(seed, "select", t))
        idxs = select_batch(state, config.batch, rng)
        if not idxs:
            break
        budget = config.epochs_full
        if t > 1 and state.early_stop_epoch is not None:
            budget = state.early_stop_epoch
        requests = []
        for i in idxs:
            requests.append(EvalRequest(
                id=state.next_request_id,
                candidate=state.pool[i],
                epoch_budget=budget,
                seed=derive_seed(seed, "eval", t, state.next_request_id),
            ))
            state.next_request_id += 1
        results = evaluator.evaluate(requests)

        curves = []
        for i, res in zip(idxs, results):
            cand = state.pool[i]
            state.evaluated_keys.add(cand.key())
            if not res.ok:
                state.failures.append((cand.key(), res.reason or "failed"))
                logger.warning("evaluation failed for %s: %s", short_id(cand.key()), res.reason)
                continue
            curves.append(res.curve)
            state.dataset.append(LabeledSample(
                candidate=cand,
                accuracy=res.curve[-1],
                epochs_trained=len(res.curve),
                full_budget=(t == 1),
                curve=res.curve,
            ))
        if t == 1 and len(curves) >= 2:
            early = determine_early_stop(curves, config.early_stop_threshold)
            state.early_stop_epoch = early.epoch
            if not early.reached:
                state.warnings.append(
                    f"early-stop threshold {config.early_stop_threshold} never reached; "
                    f"using full budget {early.epoch}")
        if state.dataset:
            _refit(state, t)
        state.iteration = t
        if checkpoint_dir is not None:
            save_checkpoint(state, Path(checkpoint_dir) / f"stage2_iter{t}.json")
    return state


# ---------------------------------------------------------------------------
# Mutation


def mutate(space: SearchSpaceDef, candidate: Candidate, rate: float,
           rng: np.random.Generator) -> Candidate:
    """Independently perturb each free parameter with probability `rate`.

    Numeric grids move one step up or down (reflecting at the ends);
    categorical choices resample uniformly among the other values.  Shared
    groups mutate atomically because they are a single free parameter.
    """
    if not 0 < rate <= 1:
        raise ValueError("rate must be in (0, 1]")
    genes = extract_genes(space, candidate)
    for p in free_params(space):
        if rng.random() >= rate:
            continue
        values = p.values
        current = genes[p.key]
        if p.kind == "onehot":
            others = [v for v in values if v != current]
            genes[p.key] = others[rng.integers(len(others))]
        else:
            i = values.index(current)
            if i == 0:
                i = 1
            elif i == len(values) - 1:
                i -= 1
            else:
                i += 1 if rng.random() < 0.5 else -1
            genes[p.key] = values[i]
    return build_candidate(space, genes)


# ---------------------------------------------------------------------------
# Stage 3


@dataclass(frozen=True)
class ScoredCandidate:
    candidate: Candidate
    score: float
    flops: int
    params: int


def _constraint_checker(constraints: ConstraintSet) -> Callable[[Candidate], tuple[bool, int, int]]:
    cache: dict[str, tuple[bool, int, int]] = {}

    def check(cand: Candidate) -> tuple[bool, int, int]:
        key = cand.key()
        if key not in cache:
            report = cost(cand.arch)
            ok, _ = check_report(report, constraints)
            cache[key] = (ok, report.total_flops, report.total_params)
        return cache[key]

    return check


def stage3_evolve(space: SearchSpaceDef, predictor: TwoHeadPredictor,
                  dataset_top: Sequence[LabeledSample], config: Stage3Config,
                  seed: int, layout: EncodingLayout | None = None,
                  warnings_out: list[str] | None = None) -> list[ScoredCandidate]:
    """Predictor-guided evolutionary search under resource constraints.

    Returns the final population (at most top_k candidates, all
    constraint-satisfying) with predicted scores, best first.
    """
    layout = layout or build_layout(space)
    warnings_out = warnings_out if warnings_out is not None else []
    rng = np.random.default_rng(derive_seed(seed, "stage3"))
    check = _constraint_checker(config.constraints)

    def encode_score(cands: list[Candidate]) -> tuple[np.ndarray, np.ndarray]:
        X = encode_batch(space, cands, layout, check=False)
        return X, predictor.predict(X)

    # Population seeds: best measured candidates that satisfy the constraints...
    ranked = sorted(dataset_top, key=lambda s: (-s.accuracy, s.candidate.key()))
    seeds: list[Candidate] = []
    seen: set[str] = set()
    for s in ranked:
        if len(seeds) == config.p_best:
            break
        ok, _, _ = check(s.candidate)
        if ok and s.candidate.key() not in seen:
            seeds.append(s.candidate)
            seen.add(s.candidate.key())
    if len(seeds) < config.p_best:
        warnings_out.append(
            f"only {len(seeds)} of {config.p_best} measured seeds available; backfilling randomly")

    # ... plus random valid candidates (rejection sampling).
    want_random = config.q_random + (config.p_best - len(seeds))
    randoms: list[Candidate] = []
    attempts = 0
    cap = max(1000, 200 * max(want_random, 1))
    while len(randoms) < want_random and attempts < cap:
        cand = sample_uniform(space, int(rng.integers(2**62)))
        attempts += 1
        ok, _, _ = check(cand)
        if ok and cand.key() not in seen:
            randoms.append(cand)
            seen.add(cand.key())
    if len(randoms) < want_random:
        warnings_out.append(
            f"random initialization found only {len(randoms)} of {want_random} valid candidates")
    population = seeds + randoms
    if not population:
        warnings_out.append("no constraint-satisfying candidate found; constraints look infeasible")
        return []

    def order(scores: np.ndarray, X: np.ndarray) -> list[int]:
        return sorted(range(len(scores)), key=lambda i: (-scores[i], _lex_key(X[i])))

    pop_X, scores = encode_score(population)
    idx = order(scores, pop_X)
    population = [population[i] for i in idx]
    pop_X, scores = pop_X[idx], scores[idx]

    s_star = float(scores[0])
    s_prev = 0.0
    rate = config.initial_mutation_rate
    generation = 0
    while (s_star - s_prev) > config.epsilon and generation < config.max_generations:
        generation += 1
        pop_keys = {c.key() for c in population}
        children: list[Candidate] = []
        child_keys: set[str] = set()
        for parent in population:
            for _ in range(config.children_per_candidate):
                for _attempt in range(config.mutation_retry_cap):
                    child = mutate(space, parent, rate, rng)
                    ok, _, _ = check(child)
                    if ok:
                        key = child.key()
                        if key not in child_keys and key not in pop_keys:
                            children.append(child)
                            child_keys.add(key)
                        break
        if not children:
            warnings_out.append(f"generation {generation}: no constraint-satisfying child; stopping")
            break

        child_X, child_scores = encode_score(children)
        all_cands = population + children
        all_X = np.vstack([pop_X, child_X])
        all_scores = np.concatenate([scores, child_scores])
        idx = order(all_scores, all_X)[:config.top_k]
        population = [all_cands[i] for i in idx]
        pop_X, scores = all_X[idx], all_scores[idx]

        s_prev, s_star = s_star, float(scores[0])
        gain = s_star - s_prev
        rate = max(rate / 2, 0.01) if gain < 10 * config.epsilon else min(rate * 2, 0.5)

    out = []
    for cand, score in zip(population, scores):
        _, fl, pa = check(cand)
        out.append(ScoredCandidate(candidate=cand, score=float(score), flops=fl, params=pa))
    return out


# ---------------------------------------------------------------------------
# Full pipeline


@dataclass
class ResultBundle:
    state: SearchState
    per_constraint: list[list[ScoredCandidate]]
    pretrain_report: object | None
    warnings: list[str]


def run_nars(space: SearchSpaceDef, evaluator: Evaluator,
             constraint_sets: Sequence[ConstraintSet], seed: int,
             stage1: Stage1Config = Stage1Config(),
             stage2: Stage2Config = Stage2Config(),
             stage3: Stage3Config = Stage3Config(),
             predictor_kwargs: dict | None = None,
             checkpoint_dir: str | Path | None = None,
             pool=None) -> ResultBundle:
    """All three stages; stage 3 runs once per constraint set on one predictor."""
    if not constraint_sets:
        raise ValueError("need at least one constraint set")
    layout = build_layout(space)
    if pool is None:
        pool = build_pool(space, stage2.pool_size, derive_seed(seed, "pool"), layout,
                          flop_window=stage2.flop_window)

    warnings: list[str] = []
    net = TwoHeadPredictor(
        arch_dim=layout.arch_dim, recipe_dim=layout.recipe_dim,
        layout_fingerprint=layout.fingerprint(), seed=derive_seed(seed, "init"),
        **(predictor_kwargs or {}),
    )
    pretrain_report = None
    if layout.arch_dim > 0 and len(pool[0]) > 0:
        pretrain_report = net.pretrain(
            pool[1][:, :layout.arch_dim], pool[2], pool[3],
            split=stage1.split, epochs=stage1.epochs, seed=derive_seed(seed, "pretrain"))
    elif layout.arch_dim == 0:
        warnings.append("architecture fully fixed: skipping proxy pretraining (recipe-only search)")

    state = stage2_run(space, evaluator, net, stage2, seed,
                       checkpoint_dir=checkpoint_dir, pool=pool)
    warnings.extend(state.warnings)

    per_constraint = []
    for j, constraints in enumerate(constraint_sets):
        cfg = replace(stage3, constraints=tuple(constraints))
        per_constraint.append(stage3_evolve(
            space, net, state.dataset, cfg, derive_seed(seed, "constraint", j),
            layout=layout, warnings_out=warnings))
    return ResultBundle(state=state, per_constraint=per_constraint,
                        pretrain_report=pretrain_report, warnings=warnings)


# ---------------------------------------------------------------------------
# Checkpointing (atomic write-new-then-rename)


def save_checkpoint(state: SearchState, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": CHECKPOINT_VERSION,
        "space_fingerprint": state.space.fingerprint(),
        "seed": state.seed,
        "pool_hash": state.pool_hash(),
        "iteration": state.iteration,
        "early_stop_epoch": state.early_stop_epoch,
        "next_request_id": state.next_request_id,
        "dataset": [
            {
                "candidate": candidate_to_dict(s.candidate),
                "accuracy": s.accuracy,
                "epochs_trained": s.epochs_trained,
                "full_budget": s.full_budget,
                "curve": list(s.curve) if s.curve is not None else None,
            }
            for s in state.dataset
        ],
        "evaluated_keys": sorted(state.evaluated_keys),
        "failures": state.failures,
        "warnings": state.warnings,
        "predictor": {
            "weights": {k: v.tolist() for k, v in state.predictor.weights.items()},
            "norm": state.predictor.norm_,
            "pretrained": state.predictor.pretrained_,
            "params": {
                "arch_dim": state.predictor.arch_dim,
                "recipe_dim": state.predictor.recipe_dim,
                "width": state.predictor.width,
                "learning_rate": state.predictor.learning_rate,
                "phase2_lr_scale": state.predictor.phase2_lr_scale,
                "momentum": state.predictor.momentum,
                "batch_size": state.predictor.batch_size,
                "phase_epochs": state.predictor.phase_epochs,
                "pretrain_epochs": state.predictor.pretrain_epochs,
                "fit_l2": state.predictor.fit_l2,
                "layout_fingerprint": state.predictor.layout_fingerprint,
                "seed": state.predictor.seed,
            },
        },
        "refit_base": {k: v.tolist() for k, v in state.refit_base.items()},
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload))
    os.replace(tmp, path)


def load_checkpoint(path: str | Path, space: SearchSpaceDef, config: Stage2Config) -> SearchState:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {payload.get('version')!r}")
    if payload["space_fingerprint"] != space.fingerprint():
        raise CheckpointError("checkpoint was produced with a different space definition")

    layout = build_layout(space)
    seed = payload["seed"]
    pool = build_pool(space, config.pool_size, derive_seed(seed, "pool"), layout,
                      flop_window=config.flop_window)
    candidates, X, flops, params = pool

    p = payload["predictor"]
    net = TwoHeadPredictor(**p["params"])
    net.weights = {k: np.asarray(v, dtype=np.float64) for k, v in p["weights"].items()}
    net.norm_ = p["norm"]
    net.pretrained_ = p["pretrained"]

    state = SearchState(
        space=space, config=config, seed=seed,
        pool=candidates, pool_X=X, pool_flops=flops, pool_params=params,
        predictor=net,
        refit_base={k: np.asarray(v, dtype=np.float64) for k, v in payload["refit_base"].items()},
        dataset=[
            LabeledSample(
                candidate=candidate_from_dict(s["candidate"]),
                accuracy=s["accuracy"],
                epochs_trained=s["epochs_trained"],
                full_budget=s["full_budget"],
                curve=tuple(s["curve"]) if s["curve"] is not None else None,
            )
            for s in payload["dataset"]
        ],
        evaluated_keys=set(payload["evaluated_keys"]),
        failures=[tuple(f) for f in payload["failures"]],
        warnings=list(payload["warnings"]),
        iteration=payload["iteration"],
        early_stop_epoch=payload["early_stop_epoch"],
        next_request_id=payload["next_request_id"],
    )
    if state.pool_hash() != payload["pool_hash"]:
        raise CheckpointError("regenerated pool does not match the checkpointed pool hash")
    return state


# ---------------------------------------------------------------------------
# Results export


def export_results(bundle: ResultBundle, out_dir: str | Path) -> list[Path]:
    """Write the CSV exports for accuracy-vs-cost front plots; returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    measured = {s.candidate.key(): s.accuracy for s in bundle.state.dataset}

    summary = out_dir / "summary.csv"
    lines = ["constraint_index,rank,candidate_id,predicted_score,measured_accuracy,flops,params"]
    for ci, ranked in enumerate(bundle.per_constraint):
        for rank, sc in enumerate(ranked):
            key = sc.candidate.key()
            acc = measured.get(key)
            lines.append(",".join([
                str(ci), str(rank), short_id(key), repr(sc.score),
                "" if acc is None else repr(acc), str(sc.flops), str(sc.params),
            ]))
    summary.write_text("\n".join(lines) + "\n")
    written.append(summary)

    dataset = out_dir / "dataset.csv"
    lines = ["candidate_id,measured_accuracy,epochs_trained,full_budget,flops,params"]
    for s in bundle.state.dataset:
        report = cost(s.candidate.arch)
        lines.append(",".join([
            short_id(s.candidate.key()), repr(s.accuracy), str(s.epochs_trained),
            str(int(s.full_budget)), str(report.total_flops), str(report.total_params),
        ]))
    dataset.write_text("\n".join(lines) + "\n")
    written.append(dataset)

    for ci, ranked in enumerate(bundle.per_constraint):
        path = out_dir / f"constraint_{ci:02d}_topk.jsonl"
        with path.open("w") as fh:
            for sc in ranked:
                fh.write(json.dumps({
                    "candidate": candidate_to_dict(sc.candidate),
                    "predicted_score": sc.score,
                    "flops": sc.flops,
                    "params": sc.params,
                }) + "\n")
        written.append(path)
    return written
