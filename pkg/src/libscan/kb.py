"""Misuse-pattern labels and the pattern knowledge base.

The knowledge base is a JSON array with one object per pattern::

    [{"pattern": "P2", "name": "...", "description": "...", "snippets": ["..."]}, ...]

It drives both the snippet matcher and the LLM prompt catalog.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

KB_KEYS = ("pattern", "name", "description", "snippets")


class KbError(ValueError):
    pass


class MalformedKb(KbError):
    """Parse or schema failure; ``key`` names the offending field."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class IncompleteKb(KbError):
    """A pattern id is missing or duplicated."""

    def __init__(self, label: str, reason: str = "missing"):
        super().__init__(f"{reason} pattern {label}")
        self.label = label
        self.reason = reason


class PatternLabel(enum.Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"
    P4 = "P4"
    P5 = "P5"
    P6 = "P6"
    P7 = "P7"
    P8 = "P8"
    NONE = "NONE"

    @classmethod
    def parse(cls, text: "str | PatternLabel") -> "PatternLabel":
        if isinstance(text, PatternLabel):
            return text
        if not isinstance(text, str):
            raise ValueError(f"not a pattern label: {text!r}")
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"not a pattern label: {text!r}") from None

    @property
    def code(self) -> int:
        return encode_label(self)

    @property
    def is_positive(self) -> bool:
        return self is not PatternLabel.NONE

    def __str__(self) -> str:
        return self.value


ALL_LABELS: tuple[PatternLabel, ...] = tuple(PatternLabel)
POSITIVE_LABELS: tuple[PatternLabel, ...] = ALL_LABELS[:8]
N_CLASSES = len(ALL_LABELS)


def encode_label(label: PatternLabel | str) -> int:
    """P1 -> 0, ..., P8 -> 7, NONE -> 8."""
    return ALL_LABELS.index(PatternLabel.parse(label))


def decode_label(code: int) -> PatternLabel:
    if isinstance(code, bool) or not 0 <= int(code) < N_CLASSES or int(code) != code:
        raise ValueError(f"label code out of range: {code!r}")
    return ALL_LABELS[int(code)]


@dataclass(frozen=True)
class PatternRecord:
    pattern: PatternLabel
    name: str
    description: str
    snippets: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "pattern": self.pattern.value,
            "name": self.name,
            "description": self.description,
            "snippets": list(self.snippets),
        }


def _record_from_obj(obj: object, index: int) -> PatternRecord:
    if not isinstance(obj, dict):
        raise MalformedKb(f"record {index} is not an object")
    for key in KB_KEYS:
        if key not in obj:
            raise MalformedKb(f"record {index} lacks key {key!r}", key=key)
    try:
        label = PatternLabel.parse(obj["pattern"])
    except ValueError:
        raise MalformedKb(f"record {index}: bad pattern {obj['pattern']!r}", key="pattern") from None
    if label is PatternLabel.NONE:
        raise MalformedKb(f"record {index}: NONE is not a misuse pattern", key="pattern")
    for key in ("name", "description"):
        if not isinstance(obj[key], str):
            raise MalformedKb(f"record {index}: {key} must be a string", key=key)
    snippets = obj["snippets"]
    if not isinstance(snippets, list) or not snippets:
        raise MalformedKb(f"record {index}: snippets must be a non-empty array", key="snippets")
    for j, snip in enumerate(snippets):
        if not isinstance(snip, str) or not snip.strip():
            raise MalformedKb(
                f"record {index} ({label.value}): snippet {j} is empty or not a string",
                key=f"snippets[{j}]",
            )
    return PatternRecord(label, obj["name"], obj["description"], tuple(snippets))


def parse_kb(data: object) -> list[PatternRecord]:
    """Validate a decoded KB document; return records in P1..P8 order."""
    if not isinstance(data, list):
        raise MalformedKb("knowledge base must be a JSON array")
    by_label: dict[PatternLabel, PatternRecord] = {}
    for i, obj in enumerate(data):
        rec = _record_from_obj(obj, i)
        if rec.pattern in by_label:
            raise IncompleteKb(rec.pattern.value, "duplicate")
        by_label[rec.pattern] = rec
    for label in POSITIVE_LABELS:
        if label not in by_label:
            raise IncompleteKb(label.value)
    return [by_label[label] for label in POSITIVE_LABELS]


def load_kb(path: str | Path | None = None) -> list[PatternRecord]:
    """Load a knowledge-base file; ``None`` loads the bundled default."""
    if path is None:
        text = resources.files("libscan").joinpath("data/default_kb.json").read_text("utf-8")
    else:
        raw = Path(path).read_bytes()
        if raw.startswith(b"\xef\xbb\xbf"):
            raise MalformedKb("knowledge base must not start with a BOM")
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedKb(f"knowledge base is not UTF-8: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedKb(f"invalid JSON: {exc}") from None
    return parse_kb(data)


def dump_kb(records: Iterable[PatternRecord]) -> str:
    return json.dumps([r.to_dict() for r in records], indent=2, ensure_ascii=False) + "\n"


def kb_by_label(records: Sequence[PatternRecord]) -> dict[PatternLabel, PatternRecord]:
    return {r.pattern: r for r in records}


@dataclass(frozen=True)
class WrapperPair:
    primitive: str
    wrapper: str


def load_wrapper_pairs(path: str | Path | None = None) -> tuple[WrapperPair, ...]:
    """Read ``wrapper_pairs.json`` (array of {primitive, wrapper}); ``None`` loads the bundled table."""
    if path is None:
        text = resources.files("libscan").joinpath("data/wrapper_pairs.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    data = json.loads(text)
    if not isinstance(data, list):
        raise MalformedKb("wrapper_pairs.json must be a JSON array")
    pairs = []
    for i, obj in enumerate(data):
        if not isinstance(obj, dict):
            raise MalformedKb(f"wrapper pair {i} is not an object")
        for key in ("primitive", "wrapper"):
            if not isinstance(obj.get(key), str) or not obj[key]:
                raise MalformedKb(f"wrapper pair {i} lacks {key!r}", key=key)
        pairs.append(WrapperPair(obj["primitive"], obj["wrapper"]))
    return tuple(pairs)


def wrapper_pairs_near(kb_path: str | Path | None) -> tuple[WrapperPair, ...]:
    """Wrapper pairs from ``wrapper_pairs.json`` beside the KB file, if present."""
    if kb_path is not None:
        candidate = Path(kb_path).parent / "wrapper_pairs.json"
        if candidate.is_file():
            return load_wrapper_pairs(candidate)
    return load_wrapper_pairs()
