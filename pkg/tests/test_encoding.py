import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nars.encoding import CandidateEncoder, build_layout, encode, encode_batch
from nars.errors import ValidationError
from nars.sampling import sample_uniform
from nars.space import build_candidate, candidate_from_dict, candidate_to_dict, extract_genes, free_params


def test_layout_dimensions(default_space):
    layout = build_layout(default_space)
    assert layout.arch_dim == 38
    assert layout.recipe_dim == 9
    # arch slots strictly precede recipe slots
    assert all(not s.key.startswith("recipe.") for s in layout.arch_slots)
    assert all(s.key.startswith("recipe.") for s in layout.recipe_slots)


def test_recipe_only_space_has_no_arch_slots(baseline_space):
    layout = build_layout(baseline_space)
    assert layout.arch_dim == 0
    assert layout.recipe_dim == 9


def test_optimizer_one_hot(default_space):
    layout = build_layout(default_space)
    cand = sample_uniform(default_space, 0)
    genes = extract_genes(default_space, cand)
    genes["recipe.optimizer"] = "rmsprop"
    vec = encode(default_space, build_candidate(default_space, genes), layout)
    keys = [s.key for s in layout.slots]
    i = keys.index("recipe.optimizer")
    assert vec[i] == 1.0 and vec[i + 1] == 0.0


def test_lr_normalization_reference_value(default_space):
    genes = extract_genes(default_space, sample_uniform(default_space, 0))
    genes["recipe.lr"] = 26
    vec = encode(default_space, build_candidate(default_space, genes))
    layout = build_layout(default_space)
    i = [s.key for s in layout.slots].index("recipe.lr")
    assert vec[i] == 0.6


def test_channels_at_grid_minimum_encode_to_zero(default_space):
    genes = extract_genes(default_space, sample_uniform(default_space, 0))
    genes["stage0.channels"] = 16
    vec = encode(default_space, build_candidate(default_space, genes))
    layout = build_layout(default_space)
    i = [s.key for s in layout.slots].index("stage0.channels")
    assert vec[i] == 0.0


def test_encode_is_bit_identical(default_space):
    cand = sample_uniform(default_space, 9)
    a = encode(default_space, cand)
    b = encode(default_space, candidate_from_dict(candidate_to_dict(cand)))
    assert np.array_equal(a, b)


def test_off_grid_value_raises_named_error(default_space):
    d = candidate_to_dict(sample_uniform(default_space, 1))
    d["arch"]["stages"][2]["channels"] = 22
    with pytest.raises(ValidationError, match="stage2.channels"):
        encode(default_space, candidate_from_dict(d))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_one_hot_groups_sum_to_one(default_space, seed):
    layout = build_layout(default_space)
    vec = encode(default_space, sample_uniform(default_space, seed), layout)
    assert np.all(vec >= 0.0) and np.all(vec <= 1.0)
    start = 0
    keys = [s.key for s in layout.slots]
    kinds = [s.kind for s in layout.slots]
    while start < len(keys):
        if kinds[start] == "onehot":
            end = start
            while end < len(keys) and keys[end] == keys[start]:
                end += 1
            group = vec[start:end]
            assert group.sum() == 1.0
            assert set(np.unique(group)) <= {0.0, 1.0}
            start = end
        else:
            start += 1


def test_estimator_transform_matches_encode(default_space):
    cands = [sample_uniform(default_space, s) for s in range(5)]
    enc = CandidateEncoder(default_space).fit()
    X = enc.transform(cands)
    assert X.shape == (5, build_layout(default_space).dim)
    assert np.array_equal(X, encode_batch(default_space, cands))
    assert enc.get_params()["space"] is default_space
