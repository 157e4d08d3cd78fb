"""Random forest over the two categorical channel outputs.

Each sample is ``(llm_label, static_label) -> true_label`` with labels
integer-encoded 0..8. Trees split one-vs-rest on a single category
(``feature == c`` goes left) and pick the split with the lowest weighted Gini
impurity. Impurities are compared as exact fractions, so ties are real ties
and resolve to the first candidate in (feature, category) order.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .kb import N_CLASSES, PatternLabel, decode_label, encode_label

FEATURE_SCHEMA_VERSION = 1
FEATURES = ("llm", "static")


class EmptyNode(ValueError):
    pass


def gini(counts: Sequence[int]) -> float:
    """``1 - sum(p_c ** 2)`` over the class counts of a node."""
    return float(gini_exact(counts))


def gini_exact(counts: Sequence[int]) -> Fraction:
    total = sum(int(c) for c in counts)
    if total <= 0:
        raise EmptyNode("gini of an empty node")
    return 1 - Fraction(sum(int(c) ** 2 for c in counts), total * total)


@dataclass(frozen=True)
class TrainingSample:
    llm_label: int
    static_label: int
    true_label: int

    def __post_init__(self):
        for name in ("llm_label", "static_label", "true_label"):
            decode_label(getattr(self, name))  # validates the encoding

    @classmethod
    def of(cls, llm: PatternLabel | str | int, static: PatternLabel | str | int,
           true: PatternLabel | str | int) -> "TrainingSample":
        enc = lambda v: v if isinstance(v, int) else encode_label(v)
        return cls(enc(llm), enc(static), enc(true))

    def features(self) -> tuple[int, int]:
        return (self.llm_label, self.static_label)


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 10
    min_samples_leaf: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError("n_trees, max_depth and min_samples_leaf must all be >= 1")


@dataclass(frozen=True)
class Split:
    feature: int  # index into FEATURES
    category: int


@dataclass
class DecisionTree:
    """Node arena; node 0 is the root.

    Internal nodes: ``{"feature", "category", "left", "right"}`` where ``left``
    holds samples whose feature equals the category. Leaves: ``{"label", "n"}``.
    """

    nodes: list[dict] = field(default_factory=list)

    @property
    def depth(self) -> int:
        def d(i: int) -> int:
            node = self.nodes[i]
            return 0 if "label" in node else 1 + max(d(node["left"]), d(node["right"]))
        return d(0)

    def predict_code(self, llm: int, static: int) -> int:
        x = (llm, static)
        node = self.nodes[0]
        while "label" not in node:
            node = self.nodes[node["left"] if x[node["feature"]] == node["category"] else node["right"]]
        return node["label"]

    def splits(self) -> list[tuple[Split, int]]:
        """Pre-order list of (split, depth); used to compare tree structure."""
        out = []
        def visit(i: int, depth: int) -> None:
            node = self.nodes[i]
            if "label" in node:
                return
            out.append((Split(node["feature"], node["category"]), depth))
            visit(node["left"], depth + 1)
            visit(node["right"], depth + 1)
        visit(0, 0)
        return out

    def leaves(self) -> list[int]:
        """Leaf labels in pre-order."""
        out = []
        def visit(i: int) -> None:
            node = self.nodes[i]
            if "label" in node:
                out.append(node["label"])
            else:
                visit(node["left"])
                visit(node["right"])
        visit(0)
        return out


def _class_counts(samples: Sequence[TrainingSample]) -> list[int]:
    counts = [0] * N_CLASSES
    for s in samples:
        counts[s.true_label] += 1
    return counts


def majority_code(counts: Sequence[int]) -> int:
    """Most frequent class; ties to the lowest encoding."""
    return max(range(len(counts)), key=lambda c: (counts[c], -c))


def best_split(samples: Sequence[TrainingSample], min_samples_leaf: int) -> Optional[Split]:
    """Lowest weighted child impurity among valid one-vs-rest splits.

    Returns ``None`` when no split leaves both children with at least
    ``min_samples_leaf`` samples or none strictly lowers the impurity.
    """
    n = len(samples)
    totals = _class_counts(samples)
    best: Optional[Split] = None
    best_impurity = gini_exact(totals)
    for f in range(len(FEATURES)):
        # class tallies of the samples whose feature f equals each category
        by_category: dict[int, list[int]] = {}
        for s in samples:
            by_category.setdefault(s.features()[f], [0] * N_CLASSES)[s.true_label] += 1
        for c in sorted(by_category):
            left = by_category[c]
            right = [t - l for t, l in zip(totals, left)]
            n_left = sum(left)
            if n_left < min_samples_leaf or n - n_left < min_samples_leaf:
                continue
            impurity = (n_left * gini_exact(left) + (n - n_left) * gini_exact(right)) / n
            if impurity < best_impurity:
                best, best_impurity = Split(f, c), impurity
    return best


def fit_tree(samples: Sequence[TrainingSample], config: ForestConfig = ForestConfig()) -> DecisionTree:
    if not samples:
        raise ValueError("cannot fit a tree on zero samples")
    tree = DecisionTree()

    def grow(subset: Sequence[TrainingSample], depth: int) -> int:
        index = len(tree.nodes)
        counts = _class_counts(subset)
        tree.nodes.append({"label": majority_code(counts), "n": len(subset)})
        if depth >= config.max_depth or max(counts) == len(subset):
            return index
        split = best_split(subset, config.min_samples_leaf)
        if split is None:
            return index
        left = [s for s in subset if s.features()[split.feature] == split.category]
        right = [s for s in subset if s.features()[split.feature] != split.category]
        node = {"feature": split.feature, "category": split.category}
        tree.nodes[index] = node
        node["left"] = grow(left, depth + 1)
        node["right"] = grow(right, depth + 1)
        return index

    grow(list(samples), 0)
    return tree


def bootstrap_indices(n: int, seed: int, tree_index: int) -> np.ndarray:
    """Indices of a size-``n`` resample with replacement for one tree."""
    rng = np.random.default_rng(seed + tree_index)
    return rng.integers(0, n, size=n)


@dataclass
class Forest:
    trees: list[DecisionTree]
    config: ForestConfig
    feature_schema_version: int = FEATURE_SCHEMA_VERSION

    def votes(self, llm: int, static: int) -> list[int]:
        counts = [0] * N_CLASSES
        for t in self.trees:
            counts[t.predict_code(llm, static)] += 1
        return counts

    def predict(self, llm: PatternLabel | int, static: PatternLabel | int) -> PatternLabel:
        return predict(self, llm, static)

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "feature_schema_version": self.feature_schema_version,
            "features": list(FEATURES),
            "trees": [{"nodes": t.nodes} for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), "utf-8")

    @classmethod
    def from_dict(cls, data: dict) -> "Forest":
        version = data.get("feature_schema_version")
        if version != FEATURE_SCHEMA_VERSION:
            raise ValueError(f"unsupported feature schema version {version!r}")
        config = ForestConfig(**data["config"])
        trees = [DecisionTree([dict(n) for n in t["nodes"]]) for t in data["trees"]]
        if not trees:
            raise ValueError("forest has no trees")
        return cls(trees, config, version)

    @classmethod
    def load(cls, path: str | Path) -> "Forest":
        return cls.from_dict(json.loads(Path(path).read_text("utf-8")))


def fit_forest(samples: Sequence[TrainingSample], config: ForestConfig = ForestConfig()) -> Forest:
    if not samples:
        raise ValueError("cannot fit a forest on zero samples")
    samples = list(samples)
    trees = []
    for i in range(config.n_trees):
        idx = bootstrap_indices(len(samples), config.seed, i)
        trees.append(fit_tree([samples[j] for j in idx], config))
    return Forest(trees, config)


def predict(forest: Forest, llm: PatternLabel | int, static: PatternLabel | int) -> PatternLabel:
    """Majority vote of the trees; ties to the lowest encoding."""
    llm_code = llm if isinstance(llm, int) else encode_label(llm)
    static_code = static if isinstance(static, int) else encode_label(static)
    decode_label(llm_code), decode_label(static_code)
    return decode_label(majority_code(forest.votes(llm_code, static_code)))
