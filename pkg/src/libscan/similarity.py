"""TF-IDF snippet matcher.

Pattern snippets from the knowledge base form the fitted corpus. Input code
is cut into fragment-sized chunks (one per function, one per using-for
directive), each chunk is scored against every snippet by cosine
similarity, and the best-scoring pattern wins if it clears the threshold.
"""
from __future__ import annotations

import enum
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .kb import PatternLabel, PatternRecord
from .lexer import IDENT, NUMBER, PUNCT, lex
from .solidity import LexError, SourceUnit, Span, parse

DEFAULT_THRESHOLD = 0.30

# Pure layout tokens. They appear in every fragment, so the matcher leaves
# them out of its vectors; operators stay in.
LAYOUT_TOKENS = frozenset({"(", ")", "{", "}", "[", "]", ";", ",", "."})

# Reserved words and globals that occur in almost every contract but only in
# a handful of snippets, so IDF fitted on snippets alone cannot discount
# them. Left in, they push unrelated functions past the threshold.
STOP_WORDS = frozenset("""
    pragma solidity import contract library interface abstract function modifier
    constructor event struct enum mapping returns return internal external public
    private pure view payable memory storage calldata using for if else while do
    require assert revert emit new delete is override virtual constant immutable
    true false this msg sender block timestamp tx origin
""".split())

_WORD_RE = re.compile(r"[A-Z]+[0-9]*(?![a-z])|[A-Z]?[a-z]+[0-9]*|[0-9]+")

SparseVector = dict[int, float]


class EmptyCorpus(ValueError):
    pass


def split_identifier(name: str) -> list[str]:
    """Lower-cased camelCase / snake_case parts of ``name``."""
    parts: list[str] = []
    for chunk in name.split("_"):
        parts.extend(w.lower() for w in _WORD_RE.findall(chunk))
    return parts


def tokenize(code: str) -> list[str]:
    """Code-aware tokens.

    Identifiers, numbers and operator/punctuation symbols are separate
    tokens; an identifier made of several camelCase or underscore parts is
    followed by its lower-cased parts. Comments and string literals are
    dropped.

    >>> tokenize("safeApprove(token, 0)")
    ['safeApprove', 'safe', 'approve', '(', 'token', ',', '0', ')']
    """
    out: list[str] = []
    for tok in lex(code, strict=False):
        if tok.kind == IDENT:
            out.append(tok.text)
            parts = split_identifier(tok.text)
            if len(parts) > 1:
                out.extend(parts)
        elif tok.kind in (NUMBER, PUNCT):
            out.append(tok.text)
    return out


def content_tokens(code: str) -> list[str]:
    """Tokens the matcher vectorizes: :func:`tokenize` minus layout symbols and stop words."""
    return [t for t in tokenize(code) if t not in LAYOUT_TOKENS and t not in STOP_WORDS]


@dataclass(frozen=True)
class TfidfModel:
    vocabulary: Mapping[str, int]
    idf: np.ndarray
    doc_count: int


def fit(documents: Sequence[Sequence[str]]) -> TfidfModel:
    """Smoothed IDF: ``ln((1 + N) / (1 + df)) + 1``."""
    if not documents:
        raise EmptyCorpus("cannot fit on zero documents")
    vocab: dict[str, int] = {}
    for doc in documents:
        for tok in doc:
            if tok not in vocab:
                vocab[tok] = len(vocab)
    df = np.zeros(len(vocab))
    for doc in documents:
        for tok in set(doc):
            df[vocab[tok]] += 1
    n = len(documents)
    idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
    return TfidfModel(vocab, idf, n)


def vectorize(model: TfidfModel, doc: Iterable[str]) -> SparseVector:
    """Raw-count TF times IDF over in-vocabulary tokens, L2-normalised."""
    counts = Counter(t for t in doc if t in model.vocabulary)
    vec = {model.vocabulary[t]: c * float(model.idf[model.vocabulary[t]]) for t, c in counts.items()}
    norm = math.sqrt(sum(v * v for v in vec.values()))
    if norm == 0.0:
        return {}
    return {k: v / norm for k, v in vec.items()}


def query_vector(model: TfidfModel, doc: Iterable[str]) -> SparseVector:
    """Like :func:`vectorize`, but out-of-vocabulary tokens still count toward the norm.

    Each unseen token weighs as a token with document frequency 0. A chunk
    that shares one type name with a snippet but is otherwise foreign code
    then scores low instead of collapsing onto the shared token.
    """
    counts = Counter(doc)
    unseen_idf = math.log(1.0 + model.doc_count) + 1.0
    vec: SparseVector = {}
    norm_sq = 0.0
    for tok, c in counts.items():
        idx = model.vocabulary.get(tok)
        w = c * (float(model.idf[idx]) if idx is not None else unseen_idf)
        norm_sq += w * w
        if idx is not None:
            vec[idx] = w
    if not vec:
        return {}
    norm = math.sqrt(norm_sq)
    return {k: v / norm for k, v in vec.items()}


def cosine(a: Mapping[int, float], b: Mapping[int, float]) -> float:
    """Cosine similarity of two sparse vectors; 0 when either is zero."""
    if len(a) > len(b):
        a, b = b, a
    dot = sum(v * b[k] for k, v in a.items() if k in b)
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return max(0.0, min(1.0, dot / (na * nb)))


def _dot(a: Mapping[int, float], b: Mapping[int, float]) -> float:
    if len(a) > len(b):
        a, b = b, a
    return max(0.0, min(1.0, sum(v * b[k] for k, v in a.items() if k in b)))


class MatchScope(enum.Enum):
    ALL = "all"
    P4_P6_P7_P8_ONLY = "P4_P6_P7_P8_only"

    @property
    def labels(self) -> tuple[PatternLabel, ...]:
        if self is MatchScope.ALL:
            return tuple(PatternLabel)[:8]
        return (PatternLabel.P4, PatternLabel.P6, PatternLabel.P7, PatternLabel.P8)


@dataclass(frozen=True)
class Chunk:
    span: Span
    text: str


@dataclass
class MatchResult:
    label: PatternLabel
    score: float
    per_pattern_scores: dict[PatternLabel, float]
    best_snippet_index: Optional[tuple[PatternLabel, int]] = None
    best_chunk: Optional[Chunk] = None
    # best chunk per pattern, used to point findings at code
    chunk_for: dict[PatternLabel, Chunk] = field(default_factory=dict, repr=False)


def chunks_of(source: str, unit: Optional[SourceUnit] = None) -> list[Chunk]:
    """Function-level chunks plus one per using-for directive.

    Falls back to the whole source when neither exists (bare fragments).
    """
    if unit is None:
        try:
            unit = parse(source)
        except LexError:
            unit = None
    chunks: list[Chunk] = []
    if unit is not None:
        for u in unit.iter_using_fors():
            chunks.append(Chunk(u.span, u.span.slice(source)))
        for _, fn in unit.iter_functions():
            chunks.append(Chunk(fn.span, fn.span.slice(source)))
    if not chunks and source.strip():
        chunks.append(Chunk(Span(0, len(source)), source))
    chunks.sort(key=lambda c: (c.span.start, c.span.end))
    return chunks


class SnippetMatcher:
    """TF-IDF model fitted on every snippet of a knowledge base."""

    def __init__(self, kb: Sequence[PatternRecord], threshold: float = DEFAULT_THRESHOLD):
        self.kb = list(kb)
        self.threshold = threshold
        self.snippet_ids: list[tuple[PatternLabel, int]] = []
        docs = []
        for rec in self.kb:
            for j, snip in enumerate(rec.snippets):
                self.snippet_ids.append((rec.pattern, j))
                docs.append(content_tokens(snip))
        self.model = fit(docs)
        self.snippet_vectors = [vectorize(self.model, d) for d in docs]

    def score_chunk(self, text: str) -> list[float]:
        vec = query_vector(self.model, content_tokens(text))
        # the query is already scaled by its full norm, unseen tokens included
        return [_dot(vec, sv) for sv in self.snippet_vectors]

    def match(
        self,
        source: str,
        scope: MatchScope = MatchScope.ALL,
        unit: Optional[SourceUnit] = None,
    ) -> MatchResult:
        labels = scope.labels
        per_pattern = {label: 0.0 for label in labels}
        best_snip: dict[PatternLabel, tuple[int, Chunk]] = {}
        for chunk in chunks_of(source, unit):
            for (label, ordinal), score in zip(self.snippet_ids, self.score_chunk(chunk.text)):
                if label in per_pattern and score > per_pattern[label]:
                    per_pattern[label] = score
                    best_snip[label] = (ordinal, chunk)
        top = PatternLabel.NONE
        top_score = 0.0
        for label in labels:  # ordinal order: first maximum wins ties
            if per_pattern[label] > top_score:
                top, top_score = label, per_pattern[label]
        result = MatchResult(
            label=PatternLabel.NONE,
            score=top_score,
            per_pattern_scores=per_pattern,
            chunk_for={k: c for k, (_, c) in best_snip.items()},
        )
        if top is not PatternLabel.NONE and top_score >= self.threshold:
            result.label = top
            result.best_snippet_index = (top, best_snip[top][0])
            result.best_chunk = best_snip[top][1]
        return result


def match(
    kb: Sequence[PatternRecord],
    unit_source: str,
    scope: MatchScope | str = MatchScope.ALL,
    threshold: float = DEFAULT_THRESHOLD,
) -> MatchResult:
    """One-shot convenience wrapper around :class:`SnippetMatcher`."""
    return SnippetMatcher(kb, threshold).match(unit_source, MatchScope(scope))
