"""Acceptance suite: one test per criterion, one printed PASS line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines.  Desk-scale analogues use the deterministic synthetic oracle; no
external trainer is required.
"""
import time
from pathlib import Path

import numpy as np
import pytest

from cost_oracle import oracle_cost
from nars.correlation import determine_early_stop
from nars.cost import Constraint, check_constraints, cost
from nars.encoding import build_layout, encode_batch
from nars.engine import (
    LabeledSample,
    Stage1Config,
    Stage2Config,
    Stage3Config,
    export_results,
    run_nars,
    stage2_run,
    stage3_evolve,
)
from nars.oracle import (
    SyntheticEvaluator,
    asymptote_batch,
    normalized_cost,
    reference_candidates,
    space_cost_range,
    synthetic_oracle,
    true_accuracy,
)
from nars.predictor import TwoHeadPredictor, gradient_check, huber
from nars.sampling import sample_uniform_many
from nars.space import cardinality, enumerate_candidates, free_params
from nars.engine import build_pool
from nars._util import derive_seed

from conftest import FIXTURES


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


# -- 1 ----------------------------------------------------------------------

def test_criterion_1_huber_exact_values():
    l0, g0 = huber(0.3, 0.3)
    l1, g1 = huber(0.5, 0.0)
    l2, g2 = huber(2.0, 0.0)
    exact = (l0, l1, l2) == (0.0, 0.125, 1.5)
    bounded = all(abs(g) <= 1.0 for g in (g0, g1, g2))
    report(1, exact and bounded,
           f"huber losses {(l0, l1, l2)} == (0, 0.125, 1.5), |grad| <= 1")


# -- 2 ----------------------------------------------------------------------

def test_criterion_2_gradient_check():
    start = time.time()
    worst = 0.0
    for seed in range(20):
        net = TwoHeadPredictor(arch_dim=6, recipe_dim=4, seed=seed)
        rng = np.random.default_rng(1000 + seed)
        rep = gradient_check(net, rng.random(10), float(rng.random() * 0.5), step=1e-5)
        assert not rep.skipped_kink
        worst = max(worst, rep.max_rel_error)
    report(2, worst < 1e-4,
           f"max relative gradient error {worst:.2e} over 20 nets ({time.time()-start:.1f}s)")


# -- 3 ----------------------------------------------------------------------

def test_criterion_3_cost_oracle_equivalence(default_space):
    start = time.time()
    mismatches = 0
    for cand in sample_uniform_many(default_space, 100, 17):
        rep = cost(cand.arch)
        if (rep.total_flops, rep.total_params) != oracle_cost(cand.arch):
            mismatches += 1
    from nars.space import ArchConfig, StageConfig
    stem = ArchConfig(resolution=224, stages=(StageConfig(
        "conv", 3, None, None, 16, 1, 2, False, "hswish"),))
    stem_ok = cost(stem).layers[0].flops == 5_419_008
    report(3, mismatches == 0 and stem_ok,
           f"100/100 archs match the naive oracle exactly; stem = 5,419,008 MACs "
           f"({time.time()-start:.1f}s)")


# -- 4 ----------------------------------------------------------------------

def test_criterion_4_cardinality_windows(default_space):
    arch_log10, recipe_log10 = cardinality(default_space)
    ok = 15 <= arch_log10 <= 19 and 5.5 <= recipe_log10 <= 8.5
    report(4, ok, f"arch_log10 = {arch_log10:.4f} in [15, 19], "
                  f"recipe_log10 = {recipe_log10:.4f} in [5.5, 8.5]")


# -- 5 ----------------------------------------------------------------------

def test_criterion_5_pretraining_sample_efficiency(default_space):
    start = time.time()
    layout = build_layout(default_space)
    cr = space_cost_range(default_space)
    pool = build_pool(default_space, 2048, 99, layout, flop_window=None)
    cands, X, fl, pa = pool
    finals = np.array([
        synthetic_oracle(c, default_space, 30, seed=derive_seed(5, "lab", i),
                         layout=layout, cost_range=cr).curve[-1]
        for i, c in enumerate(cands)
    ])
    val_idx = np.arange(1500, 1756)

    medians = {}
    for n_labeled in (50, 100, 200):
        for pretrained in (True, False):
            mses = []
            for seed in range(5):
                rng = np.random.default_rng(seed)
                tr = rng.choice(1500, size=n_labeled, replace=False)
                net = TwoHeadPredictor(arch_dim=layout.arch_dim, recipe_dim=layout.recipe_dim,
                                       seed=seed)
                if pretrained:
                    net.pretrain(X[:, :layout.arch_dim], fl, pa, seed=derive_seed(seed, "pre"))
                rep = net.fit(X[tr], finals[tr], X[val_idx], finals[val_idx],
                              seed=derive_seed(seed, "fit"))
                mses.append(rep.val_mse)
            medians[(n_labeled, pretrained)] = float(np.median(mses))

    per_n = all(medians[(n, True)] <= medians[(n, False)] for n in (50, 100, 200))
    efficiency = (medians[(50, True)] <= medians[(200, False)]
                  or medians[(100, True)] <= medians[(200, False)])
    detail = ", ".join(f"N={n}: {medians[(n, True)]:.2e} (pre) vs {medians[(n, False)]:.2e}"
                       for n in (50, 100, 200))
    report(5, per_n and efficiency, f"{detail}; pretrained@<=100 beats plain@200 "
                                    f"({time.time()-start:.0f}s)")


# -- 6 ----------------------------------------------------------------------

def test_criterion_6_early_stop_detection():
    from test_correlation import make_curves

    checks = 0
    cases = [(3, 0), (3, 1), (3, 2), (7, 3), (7, 4), (7, 5), (12, 6), (12, 7), (12, 8), (7, 9)]
    for crossing, seed in cases:
        curves = make_curves(crossing, 16, 12, seed)
        result = determine_early_stop(curves, 0.92)
        assert result.reached
        checks += result.epoch == crossing
    report(6, checks == 10, f"{checks}/10 constructions detected at the exact epoch")


# -- 7 ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def toy_enumeration(toy_space):
    layout = build_layout(toy_space)
    cands = list(enumerate_candidates(toy_space))
    assert len(cands) <= 100_000
    X = encode_batch(toy_space, cands, layout, check=False)
    by_arch = {}
    flops, params = [], []
    for c in cands:
        if c.arch not in by_arch:
            by_arch[c.arch] = cost(c.arch)
        flops.append(by_arch[c.arch].total_flops)
        params.append(by_arch[c.arch].total_params)
    fl01, pa01 = normalized_cost(toy_space, np.array(flops), np.array(params))
    truth = asymptote_batch(layout, X, fl01, pa01)
    return cands, np.array(flops), truth


def _toy_pipeline(toy_space, seed, bound):
    layout = build_layout(toy_space)
    ev = SyntheticEvaluator(toy_space)
    net = TwoHeadPredictor(arch_dim=layout.arch_dim, recipe_dim=layout.recipe_dim,
                           phase_epochs=100, layout_fingerprint=layout.fingerprint(),
                           seed=derive_seed(seed, "init"))
    window = (0.0, float(bound))
    pool = build_pool(toy_space, 512, derive_seed(seed, "pool"), layout, flop_window=window)
    net.pretrain(pool[1][:, :layout.arch_dim], pool[2], pool[3], seed=derive_seed(seed, "pre"))
    cfg2 = Stage2Config(pool_size=512, batch=48, iterations=3, epochs_full=50,
                        early_stop_threshold=0.95, flop_window=window)
    state = stage2_run(toy_space, ev, net, cfg2, seed, pool=pool)
    cfg3 = Stage3Config(p_best=24, q_random=24, children_per_candidate=20, top_k=32,
                        max_generations=80, constraints=(Constraint("flops", bound),))
    ranked = stage3_evolve(toy_space, net, state.dataset, cfg3, seed, layout=layout)
    winner_true = float(ev.true_accuracy_batch([ranked[0].candidate])[0])
    stage2_best = float(ev.true_accuracy_batch([s.candidate for s in state.dataset]).max())
    return winner_true, stage2_best


def test_criterion_7_stage3_uplift(toy_space, toy_enumeration):
    start = time.time()
    _, flops, truth = toy_enumeration
    bound = 60_000_000
    feasible = truth[flops <= bound]

    uplift = 0
    top1 = []
    for seed in range(5):
        winner_true, stage2_best = _toy_pipeline(toy_space, seed, bound)
        uplift += winner_true >= stage2_best
        top1.append((feasible > winner_true).mean() <= 0.01)
    top1_first3 = sum(top1[:3])
    report(7, uplift >= 4 and top1_first3 == 3,
           f"uplift {uplift}/5 seeds (need >=4), top-1% of enumeration {top1_first3}/3 seeds "
           f"({time.time()-start:.0f}s)")


# -- 8 ----------------------------------------------------------------------

def test_criterion_8_constraint_soundness_fuzz(toy_space):
    start = time.time()
    layout = build_layout(toy_space)
    rng = np.random.default_rng(2024)
    seeds_pool = sample_uniform_many(toy_space, 64, 1)
    violations = 0
    runs_with_output = 0
    for i in range(1000):
        net = TwoHeadPredictor(arch_dim=layout.arch_dim, recipe_dim=layout.recipe_dim,
                               seed=int(rng.integers(100)))
        constraints = [Constraint("flops", int(rng.uniform(20e6, 95e6)))]
        if rng.random() < 0.5:
            constraints.append(Constraint("params", int(rng.uniform(8e5, 4e6))))
        cfg = Stage3Config(p_best=3, q_random=3, children_per_candidate=2, top_k=4,
                           max_generations=3, constraints=tuple(constraints))
        samples = [LabeledSample(candidate=c, accuracy=0.5, epochs_trained=1, full_budget=True)
                   for c in rng.choice(np.array(seeds_pool, dtype=object), size=6, replace=False)]
        ranked = stage3_evolve(toy_space, net, samples, cfg, seed=i, layout=layout)
        runs_with_output += bool(ranked)
        for r in ranked:
            ok, _ = check_constraints(r.candidate.arch, cfg.constraints)
            violations += not ok
    report(8, violations == 0,
           f"0 violations in 1000 fuzzed runs ({runs_with_output} produced candidates, "
           f"{time.time()-start:.0f}s)")


# -- 9 ----------------------------------------------------------------------

def test_criterion_9_ranking_swap_and_recipe_only_search(default_space, baseline_space):
    start = time.time()
    # part 1: the two reference architectures swap under the two reference recipes
    a1r1, a2r1, a1r2, a2r2 = reference_candidates(default_space)
    acc = [true_accuracy(default_space, c) for c in (a1r1, a2r1, a1r2, a2r2)]
    swap = acc[0] > acc[1] and acc[2] < acc[3]

    # part 2: recipe-only search on the fixed baseline reaches the enumerated optimum
    layout = build_layout(baseline_space)
    params = free_params(baseline_space)
    sizes = [len(p.values) for p in params]
    total = int(np.prod(sizes))

    def chunk_matrix(lin_idx):
        idxs = np.unravel_index(lin_idx, sizes)
        cols = []
        for p, idx in zip(params, idxs):
            if p.kind == "onehot":
                onehot = np.zeros((len(lin_idx), len(p.values)))
                onehot[np.arange(len(lin_idx)), idx] = 1.0
                cols.append(onehot)
            else:
                lo, hi = float(p.values[0]), float(p.values[-1])
                vals = np.asarray(p.values, dtype=np.float64)[idx]
                cols.append(((vals - lo) / (hi - lo)).reshape(-1, 1))
        return np.hstack(cols)

    optimum = -1.0
    for chunk_start in range(0, total, 2_000_000):
        lin = np.arange(chunk_start, min(chunk_start + 2_000_000, total))
        A = asymptote_batch(layout, chunk_matrix(lin), np.zeros(len(lin)), np.zeros(len(lin)))
        optimum = max(optimum, float(A.max()))

    seed = 0
    ev = SyntheticEvaluator(baseline_space)
    net = TwoHeadPredictor(arch_dim=0, recipe_dim=layout.recipe_dim, phase_epochs=100,
                           fit_l2=1e-3, layout_fingerprint=layout.fingerprint(),
                           seed=derive_seed(seed, "init"))
    pool = build_pool(baseline_space, 2048, derive_seed(seed, "pool"), layout, flop_window=None)
    cfg2 = Stage2Config(pool_size=2048, batch=48, iterations=4, epochs_full=100,
                        early_stop_threshold=0.98, flop_window=None)
    state = stage2_run(baseline_space, ev, net, cfg2, seed, pool=pool)
    cfg3 = Stage3Config(p_best=24, q_random=24, children_per_candidate=16, top_k=24,
                        max_generations=80)
    ranked = stage3_evolve(baseline_space, net, state.dataset, cfg3, seed, layout=layout)
    winner_true = float(ev.true_accuracy_batch([ranked[0].candidate])[0])
    gap = optimum - winner_true
    report(9, swap and gap <= 0.005,
           f"reference ranking swaps ({acc[0]:.3f}>{acc[1]:.3f}, {acc[2]:.3f}<{acc[3]:.3f}); "
           f"recipe-only winner within {gap:.4f} (<= 0.005) of enumerated optimum "
           f"({time.time()-start:.0f}s)")


# -- 10 ---------------------------------------------------------------------

def test_criterion_10_multi_constraint_reuse(default_space):
    start = time.time()
    layout = build_layout(default_space)
    ev = SyntheticEvaluator(default_space)
    net = TwoHeadPredictor(arch_dim=layout.arch_dim, recipe_dim=layout.recipe_dim,
                           layout_fingerprint=layout.fingerprint(), seed=derive_seed(0, "init"))
    window = (400e6, 800e6)
    pool = build_pool(default_space, 1000, derive_seed(0, "pool"), layout, flop_window=window)
    net.pretrain(pool[1][:, :layout.arch_dim], pool[2], pool[3], epochs=40,
                 seed=derive_seed(0, "pre"))
    cfg2 = Stage2Config(pool_size=1000, batch=16, iterations=2, epochs_full=30, flop_window=window)
    state = stage2_run(default_space, ev, net, cfg2, seed=0, pool=pool)
    calls_after_stage2 = ev.calls

    timings = []
    for j, bound in enumerate((450e6, 550e6, 650e6, 750e6)):
        cfg3 = Stage3Config(constraints=(Constraint("flops", int(bound)),), max_generations=60)
        t0 = time.time()
        ranked = stage3_evolve(default_space, net, state.dataset, cfg3,
                               derive_seed(0, "constraint", j), layout=layout)
        timings.append(time.time() - t0)
        assert ranked, f"no candidates for bound {bound}"
        assert all(r.flops <= bound for r in ranked)
    no_new_calls = ev.calls == calls_after_stage2
    report(10, no_new_calls and max(timings) < 60.0,
           f"4 evolutionary runs from one predictor, max {max(timings):.1f}s < 60s, "
           f"0 extra evaluator calls ({time.time()-start:.0f}s)")


# -- 11 ---------------------------------------------------------------------

def test_criterion_11_end_to_end_determinism(toy_space, tmp_path):
    start = time.time()

    def one_run(out_dir: Path) -> list[Path]:
        bundle = run_nars(
            toy_space, SyntheticEvaluator(toy_space),
            [(Constraint("flops", 55_000_000),), (Constraint("flops", 70_000_000),)],
            seed=2718,
            stage1=Stage1Config(epochs=40),
            stage2=Stage2Config(pool_size=256, batch=12, iterations=3, epochs_full=20,
                                flop_window=None),
            stage3=Stage3Config(p_best=8, q_random=8, children_per_candidate=6, top_k=8,
                                max_generations=10),
        )
        return export_results(bundle, out_dir)

    files_a = one_run(tmp_path / "a")
    files_b = one_run(tmp_path / "b")
    identical = all(fa.read_bytes() == fb.read_bytes() for fa, fb in zip(files_a, files_b))
    report(11, identical and len(files_a) == len(files_b) == 4,
           f"two full runs export {len(files_a)} bit-identical files ({time.time()-start:.0f}s)")
