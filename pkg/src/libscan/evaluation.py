"""Evaluation: outcome rules, 9-way accuracy, macro metrics and sampling.

Two views are reported side by side. The binary view sorts every
(truth, prediction) pair into TP/TN/FP/FN. Under these rules a positive truth
with any wrong prediction, including a different positive label, is a false
negative. The per-class view builds one-vs-rest TP/FP/FN tallies from the 9x9
confusion matrix and macro-averages precision, recall and F1.
"""
from __future__ import annotations

import csv
import enum
import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .kb import ALL_LABELS, N_CLASSES, PatternLabel

Pair = tuple[PatternLabel, PatternLabel]


class EvaluationError(ValueError):
    pass


class EmptyEvaluation(EvaluationError):
    pass


class SampleTooSmall(EvaluationError):
    pass


class ManifestError(EvaluationError):
    def __init__(self, message: str, row: Optional[int] = None):
        super().__init__(f"row {row}: {message}" if row is not None else message)
        self.row = row


class MissingVerdict(EvaluationError, KeyError):
    def __init__(self, contract_id: str):
        super().__init__(f"no verdict for {contract_id!r}")
        self.contract_id = contract_id

    def __str__(self) -> str:
        return self.args[0]


class Outcome(enum.Enum):
    TP = "TP"
    TN = "TN"
    FN = "FN"
    FP = "FP"


def classify_outcome(true: PatternLabel, pred: PatternLabel) -> Outcome:
    if true == pred:
        return Outcome.TN if true is PatternLabel.NONE else Outcome.TP
    return Outcome.FP if true is PatternLabel.NONE else Outcome.FN


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @classmethod
    def of(cls, pairs: Sequence[Pair]) -> "ConfusionCounts":
        c = Counter(classify_outcome(t, p) for t, p in pairs)
        return cls(c[Outcome.TP], c[Outcome.TN], c[Outcome.FP], c[Outcome.FN])

    def to_dict(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


def _require_pairs(pairs: Sequence[Pair]) -> None:
    if not pairs:
        raise EmptyEvaluation("no (truth, prediction) pairs")


def accuracy(pairs: Sequence[Pair]) -> float:
    """Share of exact 9-way matches."""
    _require_pairs(pairs)
    return sum(1 for t, p in pairs if t == p) / len(pairs)


def confusion_matrix(pairs: Sequence[Pair]) -> np.ndarray:
    """Rows are truths, columns predictions, both in encoding order."""
    m = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for t, p in pairs:
        m[t.code, p.code] += 1
    return m


@dataclass(frozen=True)
class ClassCounts:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


def per_class_counts(pairs: Sequence[Pair]) -> dict[PatternLabel, ClassCounts]:
    m = confusion_matrix(pairs)
    out = {}
    for k, label in enumerate(ALL_LABELS):
        tp = int(m[k, k])
        out[label] = ClassCounts(tp, int(m[:, k].sum()) - tp, int(m[k, :].sum()) - tp)
    return out


@dataclass(frozen=True)
class MacroMetrics:
    precision: float
    recall: float
    f1: float
    classes: tuple[PatternLabel, ...]


def effective_classes(pairs: Sequence[Pair], all_classes: bool = False) -> tuple[PatternLabel, ...]:
    if all_classes:
        return ALL_LABELS
    seen = {t for t, _ in pairs} | {p for _, p in pairs}
    return tuple(label for label in ALL_LABELS if label in seen)


def macro_metrics(pairs: Sequence[Pair], all_classes: bool = False) -> MacroMetrics:
    """Unweighted means over the effective class set; a 0/0 ratio counts as 0.

    The class set is every label seen among truths or predictions, or all
    nine labels with ``all_classes``.
    """
    _require_pairs(pairs)
    counts = per_class_counts(pairs)
    classes = effective_classes(pairs, all_classes)
    k = len(classes)
    return MacroMetrics(
        sum(counts[c].precision for c in classes) / k,
        sum(counts[c].recall for c in classes) / k,
        sum(counts[c].f1 for c in classes) / k,
        classes,
    )


# ---------------------------------------------------------------- manifests and sampling


@dataclass(frozen=True)
class LabeledContract:
    id: str
    path: Path
    true_label: PatternLabel


def load_manifest(path: str | Path, check_paths: bool = True) -> list[LabeledContract]:
    """Read a ``id,path,label`` CSV (or a JSON array of such objects).

    Relative contract paths resolve against the manifest's directory. Errors
    name the offending row (the header is row 1).
    """
    path = Path(path)
    base = path.parent
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text("utf-8"))
        if not isinstance(data, list):
            raise ManifestError("JSON manifest must be an array")
        rows = [(i + 1, r) for i, r in enumerate(data)]
    else:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = {"id", "path", "label"} - set(reader.fieldnames or ())
            if missing:
                raise ManifestError(f"missing column(s): {', '.join(sorted(missing))}", 1)
            rows = [(i + 2, r) for i, r in enumerate(reader)]
    entries: list[LabeledContract] = []
    seen: set[str] = set()
    for row, rec in rows:
        if not isinstance(rec, dict):
            raise ManifestError("entry is not an object", row)
        cid = str(rec.get("id") or "").strip()
        rel = str(rec.get("path") or "").strip()
        if not cid or not rel:
            raise ManifestError("empty id or path", row)
        try:
            label = PatternLabel.parse(str(rec.get("label") or ""))
        except ValueError:
            raise ManifestError(f"unknown label {rec.get('label')!r}", row) from None
        if cid in seen:
            raise ManifestError(f"duplicate id {cid!r}", row)
        seen.add(cid)
        p = Path(rel)
        p = p if p.is_absolute() else base / p
        if check_paths and not p.is_file():
            raise ManifestError(f"contract file not found: {rel}", row)
        entries.append(LabeledContract(cid, p, label))
    return entries


def stratified_quotas(counts: Mapping[PatternLabel, int], n: int, diversity: bool = True) -> dict[PatternLabel, int]:
    """Per-label sample sizes proportional to ``counts``, summing to ``n``.

    Largest-remainder rounding, ties to the lowest ordinal. With
    ``diversity`` each present label gets at least one slot, taken from the
    label holding the most slots.
    """
    present = [label for label in ALL_LABELS if counts.get(label, 0) > 0]
    total = sum(counts[label] for label in present)
    if n < 0 or n > total:
        raise SampleTooSmall(f"cannot draw {n} from {total} entries")
    if diversity and n < len(present):
        raise SampleTooSmall(f"n={n} is below the {len(present)} labels present")
    quotas = {label: n * counts[label] // total for label in present}
    remainders = {label: n * counts[label] % total for label in present}
    leftover = n - sum(quotas.values())
    for label in sorted(present, key=lambda lab: (-remainders[lab], lab.code))[:leftover]:
        quotas[label] += 1
    if diversity:
        for label in present:
            if quotas[label] == 0:
                donor = min(present, key=lambda lab: (-quotas[lab], lab.code))
                quotas[donor] -= 1
                quotas[label] = 1
    return quotas


def stratified_sample(
    manifest: Sequence[LabeledContract], n: int, seed: int, diversity: bool = True
) -> list[LabeledContract]:
    groups: dict[PatternLabel, list[LabeledContract]] = {}
    for entry in manifest:
        groups.setdefault(entry.true_label, []).append(entry)
    quotas = stratified_quotas({k: len(v) for k, v in groups.items()}, n, diversity)
    rng = np.random.default_rng(seed)
    chosen: list[LabeledContract] = []
    for label in ALL_LABELS:
        q = quotas.get(label, 0)
        if q:
            picks = rng.choice(len(groups[label]), size=q, replace=False)
            chosen.extend(groups[label][int(i)] for i in picks)
    return [chosen[int(i)] for i in rng.permutation(len(chosen))]


# ---------------------------------------------------------------- reports


def config_digest(config: Mapping) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class EvalReport:
    channel: str
    n: int
    binary: ConfusionCounts
    per_class: dict[PatternLabel, ClassCounts]
    accuracy: float
    macro: MacroMetrics
    config_digest: str = ""
    k: int = N_CLASSES

    @property
    def macro_precision(self) -> float:
        return self.macro.precision

    @property
    def macro_recall(self) -> float:
        return self.macro.recall

    @property
    def macro_f1(self) -> float:
        return self.macro.f1

    def to_dict(self) -> dict:
        return {
            "channel": self.channel,
            "N": self.n,
            "K": self.k,
            "binary": self.binary.to_dict(),
            "per_class": {label.value: c.to_dict() for label, c in self.per_class.items()},
            "accuracy": self.accuracy,
            "macro_precision": self.macro.precision,
            "macro_recall": self.macro.recall,
            "macro_f1": self.macro.f1,
            "macro_classes": [c.value for c in self.macro.classes],
            "config_digest": self.config_digest,
        }


def evaluate_pairs(pairs: Sequence[Pair], channel: str = "", config: Mapping | None = None,
                   all_classes: bool = False) -> EvalReport:
    _require_pairs(pairs)
    return EvalReport(
        channel=channel,
        n=len(pairs),
        binary=ConfusionCounts.of(pairs),
        per_class=per_class_counts(pairs),
        accuracy=accuracy(pairs),
        macro=macro_metrics(pairs, all_classes),
        config_digest=config_digest(config or {}),
    )


def evaluate_channel(
    manifest: Sequence[LabeledContract],
    verdicts: Mapping[str, PatternLabel],
    channel: str = "",
    config: Mapping | None = None,
    all_classes: bool = False,
) -> EvalReport:
    pairs = []
    for entry in manifest:
        if entry.id not in verdicts:
            raise MissingVerdict(entry.id)
        pairs.append((entry.true_label, PatternLabel.parse(verdicts[entry.id])))
    return evaluate_pairs(pairs, channel, config, all_classes)
