"""Brute-force reference implementations used as test oracles.

Each one is written from the formula alone, in the most direct (slow) form,
and shares no code with the package beyond the label enum.
"""
from __future__ import annotations

import math
from fractions import Fraction

LABELS = ["P1", "P2", "P3", "P4", "P5", "P6", "P7", "P8", "NONE"]


# ---------------------------------------------------------------- metrics


def tally_metrics(pairs, all_classes=False):
    """Accuracy and macro P/R/F1 by counting per class with explicit loops."""
    pairs = [(str(t), str(p)) for t, p in pairs]
    n = len(pairs)
    correct = 0
    for t, p in pairs:
        if t == p:
            correct += 1
    classes = LABELS if all_classes else [c for c in LABELS if any(c in pair for pair in pairs)]
    precisions, recalls, f1s = [], [], []
    for c in classes:
        tp = fp = fn = 0
        for t, p in pairs:
            if p == c and t == c:
                tp += 1
            elif p == c and t != c:
                fp += 1
            elif t == c and p != c:
                fn += 1
        prec = tp / (tp + fp) if (tp + fp) > 0 else 0.0
        rec = tp / (tp + fn) if (tp + fn) > 0 else 0.0
        f1 = (2 * prec * rec / (prec + rec)) if (prec + rec) > 0 else 0.0
        precisions.append(prec)
        recalls.append(rec)
        f1s.append(f1)
    k = len(classes)
    return {
        "accuracy": correct / n,
        "precision": sum(precisions) / k,
        "recall": sum(recalls) / k,
        "f1": sum(f1s) / k,
    }


def outcome_rule(true, pred):
    """The four confusion rules, each written as its own condition."""
    true, pred = str(true), str(pred)
    if true == pred and true != "NONE":
        return "TP"
    if true == pred and true == "NONE":
        return "TN"
    if true != pred and true != "NONE":
        return "FN"
    if true != pred and true == "NONE":
        return "FP"
    raise AssertionError("rules are exhaustive")


# ---------------------------------------------------------------- tf-idf


def dense_tfidf(documents):
    """Dense matrix of L2-normalised tf*idf rows over a sorted vocabulary."""
    vocab = sorted({t for d in documents for t in d})
    n = len(documents)
    idf = []
    for term in vocab:
        df = 0
        for d in documents:
            if term in d:
                df += 1
        idf.append(math.log((1 + n) / (1 + df)) + 1)
    rows = []
    for d in documents:
        row = []
        for j, term in enumerate(vocab):
            row.append(d.count(term) * idf[j])
        norm = math.sqrt(sum(x * x for x in row))
        rows.append([x / norm for x in row] if norm else row)
    return vocab, idf, rows


def dense_cosine(a, b):
    dot = 0.0
    for x, y in zip(a, b):
        dot += x * y
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    if na == 0 or nb == 0:
        return 0.0
    return dot / (na * nb)


# ---------------------------------------------------------------- CART


def oracle_gini(labels):
    n = len(labels)
    return 1 - sum(Fraction(labels.count(c), n) ** 2 for c in set(labels))


def oracle_majority(labels):
    best = None
    for c in range(9):
        cnt = labels.count(c)
        if cnt and (best is None or cnt > labels.count(best)):
            best = c
    return best


def oracle_tree(samples, max_depth, min_leaf, depth=0, path=None, out=None):
    """Exhaustive CART over every one-vs-rest split.

    ``samples`` are ``(llm, static, truth)`` triples. Returns the pre-order
    list of ``("split", feature, category, depth)`` and ``("leaf", label)``.
    """
    out = [] if out is None else out
    labels = [s[2] for s in samples]
    if depth >= max_depth or len(set(labels)) == 1:
        out.append(("leaf", oracle_majority(labels)))
        return out
    parent = oracle_gini(labels)
    candidates = []
    for feature in (0, 1):
        for category in range(9):
            left = [s for s in samples if s[feature] == category]
            right = [s for s in samples if s[feature] != category]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            score = (len(left) * oracle_gini([s[2] for s in left])
                     + len(right) * oracle_gini([s[2] for s in right])) / len(samples)
            candidates.append((score, feature, category, left, right))
    improving = [c for c in candidates if c[0] < parent]
    if not improving:
        out.append(("leaf", oracle_majority(labels)))
        return out
    lowest = min(c[0] for c in improving)
    score, feature, category, left, right = next(c for c in improving if c[0] == lowest)
    out.append(("split", feature, category, depth))
    oracle_tree(left, max_depth, min_leaf, depth + 1, out=out)
    oracle_tree(right, max_depth, min_leaf, depth + 1, out=out)
    return out
