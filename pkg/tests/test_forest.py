import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import oracle_tree
from libscan.forest import (
    DecisionTree,
    EmptyNode,
    Forest,
    ForestConfig,
    TrainingSample,
    bootstrap_indices,
    fit_forest,
    fit_tree,
    gini,
    predict,
)
from libscan.kb import PatternLabel

NONE = 8


def test_gini_examples():
    assert gini([5] + [0] * 8) == 0.0
    assert gini([1] * 9) == pytest.approx(8 / 9, abs=1e-12)
    assert gini([3, 1] + [0] * 7) == pytest.approx(0.375, abs=1e-15)
    with pytest.raises(EmptyNode):
        gini([0] * 9)


@given(st.lists(st.integers(0, 50), min_size=9, max_size=9).filter(lambda c: sum(c) > 0), st.randoms())
def test_gini_bounds_and_permutation(counts, rnd):
    g = gini(counts)
    assert 0.0 <= g <= 8 / 9 + 1e-12
    shuffled = counts[:]
    rnd.shuffle(shuffled)
    assert gini(shuffled) == g


def random_dataset(rng, size):
    llm_pool = rng.sample(range(9), rng.randint(1, 4))
    static_pool = rng.sample(range(9), rng.randint(1, 4))
    truth_pool = rng.sample(range(9), rng.randint(1, 3))
    return [TrainingSample(rng.choice(llm_pool), rng.choice(static_pool), rng.choice(truth_pool))
            for _ in range(size)]


def as_sequence(tree: DecisionTree):
    out = []

    def visit(i, depth):
        node = tree.nodes[i]
        if "label" in node:
            out.append(("leaf", node["label"]))
            return
        out.append(("split", node["feature"], node["category"], depth))
        visit(node["left"], depth + 1)
        visit(node["right"], depth + 1)

    visit(0, 0)
    return out


@pytest.mark.parametrize("min_leaf", [1, 2, 3])
def test_cart_matches_exhaustive_oracle(min_leaf):
    rng = random.Random(100 + min_leaf)
    for _ in range(25):
        data = random_dataset(rng, rng.randint(1, 16))
        config = ForestConfig(n_trees=1, max_depth=3, min_samples_leaf=min_leaf)
        triples = [(s.llm_label, s.static_label, s.true_label) for s in data]
        assert as_sequence(fit_tree(data, config)) == oracle_tree(triples, 3, min_leaf)


def test_pure_samples_make_single_leaf():
    tree = fit_tree([TrainingSample(i % 9, (i * 5) % 9, 2) for i in range(30)])
    assert tree.nodes == [{"label": 2, "n": 30}]


def test_separable_dataset_fits_perfectly():
    samples = [TrainingSample(l, s, l) for l in range(9) for s in range(9) for _ in range(5)]
    tree = fit_tree(samples, ForestConfig(max_depth=10, min_samples_leaf=5))
    assert tree.depth <= 9
    assert all(tree.predict_code(s.llm_label, s.static_label) == s.true_label for s in samples)


def test_depth_and_leaf_size_limits():
    rng = random.Random(5)
    samples = [TrainingSample(rng.randrange(9), rng.randrange(9), rng.randrange(9)) for _ in range(400)]
    config = ForestConfig(max_depth=4, min_samples_leaf=7)
    tree = fit_tree(samples, config)
    assert tree.depth <= 4
    for node in tree.nodes:
        if "label" in node:
            assert node["n"] >= 7


def test_bootstrap_size_and_seed_dependence():
    idx = bootstrap_indices(1018, seed=3, tree_index=0)
    assert len(idx) == 1018 and idx.min() >= 0 and idx.max() < 1018
    assert sorted(idx) != sorted(bootstrap_indices(1018, seed=4, tree_index=0))
    assert list(idx) == list(bootstrap_indices(1018, seed=2, tree_index=1))


def rule_dataset(n=600, seed=11):
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        llm, static = rng.randrange(9), rng.randrange(9)
        out.append(TrainingSample(llm, static, static if llm == NONE else llm))
    return out


def test_forest_is_reproducible():
    data = rule_dataset(200)
    config = ForestConfig(n_trees=5, seed=42)
    a, b = fit_forest(data, config), fit_forest(data, config)
    assert a.to_json() == b.to_json()
    single = ForestConfig(n_trees=1, seed=9)
    assert fit_forest(data, single).trees[0].nodes == fit_forest(data, single).trees[0].nodes


def test_rule_recoverable_dataset():
    data = rule_dataset()
    forest = fit_forest(data, ForestConfig(n_trees=25, seed=1))
    assert predict(forest, NONE, PatternLabel.P5.code) is PatternLabel.P5
    agree = sum(predict(forest, s.llm_label, s.static_label).code == s.true_label for s in data)
    assert agree / len(data) >= 0.95


def test_vote_examples():
    leaf = lambda c: DecisionTree([{"label": c, "n": 1}])
    forest = Forest([leaf(0), leaf(0), leaf(NONE)], ForestConfig(n_trees=3))
    assert predict(forest, 3, 3) is PatternLabel.P1
    tied = Forest([leaf(NONE), leaf(4)], ForestConfig(n_trees=2))
    assert predict(tied, 0, 0) is PatternLabel.P5
    pure = fit_forest([TrainingSample(i % 9, i % 7, 6) for i in range(20)], ForestConfig(n_trees=3))
    assert {predict(pure, l, s) for l in range(9) for s in range(9)} == {PatternLabel.P7}


def test_json_round_trip(tmp_path):
    forest = fit_forest(rule_dataset(120), ForestConfig(n_trees=4, seed=3))
    path = tmp_path / "forest.json"
    forest.save(path)
    loaded = Forest.load(path)
    assert loaded.to_json() == forest.to_json()
    assert all(predict(loaded, l, s) is predict(forest, l, s) for l in range(9) for s in range(9))


def test_invalid_inputs():
    with pytest.raises(ValueError):
        TrainingSample(9, 0, 0)
    with pytest.raises(ValueError):
        ForestConfig(n_trees=0)
    with pytest.raises(ValueError):
        Forest.from_dict({"config": {}, "feature_schema_version": 99, "trees": []})
