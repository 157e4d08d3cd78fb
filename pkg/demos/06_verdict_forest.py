"""Fuse the two channel verdicts with a random forest trained on a verdict table."""
import random

from libscan import ForestConfig, PatternLabel, TrainingSample, fit_forest, fit_tree, gini
from libscan.forest import Forest

print("gini of a pure node:", gini([5, 0, 0]))
print("gini of a uniform 9-way node:", gini([1] * 9))

# Synthetic table: trust the LLM when it names a pattern, the static channel otherwise.
rng = random.Random(0)
samples = []
for _ in range(500):
    llm, static = rng.randrange(9), rng.randrange(9)
    truth = static if llm == 8 else llm
    if rng.random() < 0.1:
        truth = rng.randrange(9)
    samples.append(TrainingSample(llm, static, truth))

tree = fit_tree(samples, ForestConfig(max_depth=2))
print("single tree, depth", tree.depth, "splits:", tree.splits())

forest = fit_forest(samples, ForestConfig(n_trees=50, seed=1))
hits = sum(forest.predict(s.llm_label, s.static_label).code == s.true_label for s in samples)
print(f"training accuracy: {hits / len(samples):.3f}")

print("LLM says P3, static says NONE ->", forest.predict(PatternLabel.P3, PatternLabel.NONE))
print("LLM says NONE, static says P4 ->", forest.predict(PatternLabel.NONE, PatternLabel.P4))

# Forests persist as JSON and reload identically.
again = Forest.from_dict(forest.to_dict())
assert again.to_json() == forest.to_json()
