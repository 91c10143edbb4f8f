import itertools

import numpy as np
import pytest

from nars.correlation import determine_early_stop, spearman
from nars.errors import UndefinedCorrelationError


def brute_force_spearman(xs, ys):
    """Pearson on average ranks, with ranks built by explicit enumeration."""
    def avg_ranks(vals):
        ranks = []
        for v in vals:
            less = sum(1 for o in vals if o < v)
            equal = sum(1 for o in vals if o == v)
            ranks.append(less + (equal + 1) / 2)
        return ranks

    rx, ry = avg_ranks(xs), avg_ranks(ys)
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = sum((a - mx) ** 2 for a in rx)
    vy = sum((b - my) ** 2 for b in ry)
    return cov / (vx * vy) ** 0.5


class TestSpearman:
    def test_monotone_is_one(self):
        assert spearman([1, 2, 3], [10, 20, 30]) == 1.0

    def test_reversed_is_minus_one(self):
        assert spearman([1, 2, 3], [3, 2, 1]) == -1.0

    def test_tie_handling_matches_brute_force(self):
        xs, ys = [1, 2, 2, 4], [1, 3, 2, 4]
        expected = brute_force_spearman(xs, ys)
        assert spearman(xs, ys) == pytest.approx(expected)
        assert spearman(xs, ys) == pytest.approx(0.9486832980505139)

    def test_random_cases_match_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            xs = rng.integers(0, 5, size=8).tolist()  # plenty of ties
            ys = rng.random(8).tolist()
            if len(set(xs)) < 2:
                continue
            assert spearman(xs, ys) == pytest.approx(brute_force_spearman(xs, ys))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            spearman([1, 2], [1, 2, 3])

    def test_constant_input_is_undefined(self):
        with pytest.raises(UndefinedCorrelationError):
            spearman([2, 2, 2], [1, 2, 3])


def make_curves(crossing_epoch, epochs, n_curves, seed):
    """Curve family whose rank correlation with finals first reaches 0.92
    exactly at `crossing_epoch` (verified by direct scan at construction)."""
    rng = np.random.default_rng(seed)
    finals = np.sort(0.5 + 0.4 * rng.random(n_curves))
    curves = np.empty((n_curves, epochs))
    for e in range(epochs):
        if e + 1 >= crossing_epoch:
            curves[:, e] = finals * (0.8 + 0.2 * (e + 1) / epochs)
        else:
            while True:  # scrambled epoch: correlation must stay below threshold
                perm = rng.permutation(n_curves)
                try:
                    rho = spearman(finals[perm], finals)
                except UndefinedCorrelationError:
                    continue
                if rho < 0.5:
                    break
            curves[:, e] = finals[perm] * 0.5
    curves[:, -1] = finals
    return [list(c) for c in curves]


class TestDetermineEarlyStop:
    def test_already_aligned_curves_stop_at_one(self):
        curves = [[0.1, 0.2, 0.3], [0.2, 0.4, 0.6], [0.3, 0.5, 0.9]]
        result = determine_early_stop(curves, 0.92)
        assert result.epoch == 1 and result.reached

    def test_constructed_crossing_epochs(self):
        for crossing in (3, 7, 12):
            for seed in (0, 1, 2):
                curves = make_curves(crossing, 15, 12, seed)
                result = determine_early_stop(curves, 0.92)
                assert result.epoch == crossing, (crossing, seed)
                assert result.reached

    def test_unreachable_threshold_returns_final_epoch(self):
        rng = np.random.default_rng(5)
        curves = [list(rng.random(6)) for _ in range(5)]
        result = determine_early_stop(curves, 1.0)
        if result.reached:  # a random tie of perfect rank order is astronomically unlikely
            pytest.fail("threshold 1.0 should not be reachable on noise")
        assert result.epoch == 6

    def test_degenerate_epoch_skipped_and_recorded(self):
        curves = [[0.5, 0.1, 0.3], [0.5, 0.2, 0.6], [0.5, 0.3, 0.9]]
        result = determine_early_stop(curves, 0.92)
        assert result.skipped_epochs == (1,)
        assert result.epoch == 2

    def test_unequal_lengths_rejected(self):
        with pytest.raises(ValueError):
            determine_early_stop([[0.1, 0.2], [0.1]], 0.9)

    def test_needs_two_curves(self):
        with pytest.raises(ValueError):
            determine_early_stop([[0.1, 0.2]], 0.9)
