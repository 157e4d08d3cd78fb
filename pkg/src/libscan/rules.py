"""Semantic misuse detectors and the static verdict.

Four detectors work on the parsed statement structure:

* P1 ``detect_p1_wrapper_check``: over-strict guards (``a == 0 && b == 0``
  where the safe idiom is a disjunction) and wrappers that never check the
  wrapped call.
* P2 ``detect_p2_unhandled_exceptions``: dropped low-level call results and
  ``abi.decode`` of returned bytes without a length check.
* P3 ``detect_p3_inappropriate_extension``: a branch that compares an input
  to a constant and rewrites that same input in place.
* P5 ``detect_p5_incomplete_replacement``: raw primitive calls left behind
  after a contract started using the safe wrapper.

The remaining patterns are routed to the TF-IDF matcher. In HCSA mode the
semantic findings outrank matcher findings.
"""
from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

from .kb import PatternLabel, PatternRecord, WrapperPair, load_wrapper_pairs
from .lexer import IDENT, NUMBER, STRING, Token, lex
from .similarity import DEFAULT_THRESHOLD, MatchResult, MatchScope, SnippetMatcher
from .solidity import (
    ASSIGN_OPS,
    DeclKind,
    FunctionDef,
    NoPragma,
    SourceUnit,
    Span,
    Stmt,
    StmtKind,
    pragma_allows,
    walk,
)

SEMANTIC_CONFIDENCE = 0.9
COMPARISONS = frozenset({"<", ">", "<=", ">=", "==", "!="})
SEMANTIC_LABELS = frozenset({PatternLabel.P1, PatternLabel.P2, PatternLabel.P3, PatternLabel.P5})


class AnalysisMode(enum.Enum):
    BCSSM = "BCSSM"
    HCSA = "HCSA"


@dataclass(frozen=True)
class Finding:
    label: PatternLabel
    detector: str
    span: Span
    evidence: str
    confidence: float

    def to_dict(self) -> dict:
        return {
            "label": self.label.value,
            "detector": self.detector,
            "span": [self.span.start, self.span.end],
            "evidence": self.evidence,
            "confidence": round(self.confidence, 6),
        }


@dataclass
class StaticVerdict:
    label: PatternLabel
    findings: list[Finding]
    scores: dict[PatternLabel, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "label": self.label.value,
            "findings": [f.to_dict() for f in self.findings],
            "scores": {k.value: round(v, 6) for k, v in self.scores.items()},
        }


def _finding(unit: SourceUnit, label: PatternLabel, detector: str, span: Span,
             confidence: float = SEMANTIC_CONFIDENCE) -> Finding:
    return Finding(label, detector, span, span.slice(unit.source), confidence)


def library_functions(unit: SourceUnit) -> Iterator[FunctionDef]:
    """Functions inside ``library`` declarations plus file-level functions."""
    for decl, fn in unit.iter_functions():
        if decl is None or decl.kind is DeclKind.LIBRARY:
            yield fn


# ---------------------------------------------------------------- expression helpers


def _expr_tokens(text: str) -> list[Token]:
    return [t for t in lex(text, strict=False) if t.kind != STRING]


def _strip_parens(toks: list[Token]) -> list[Token]:
    while len(toks) >= 2 and toks[0].text == "(" and toks[-1].text == ")":
        depth = 0
        for k, t in enumerate(toks):
            if t.text in ("(", "[", "{"):
                depth += 1
            elif t.text in (")", "]", "}"):
                depth -= 1
            if depth == 0 and k < len(toks) - 1:
                return toks  # "(a) && (b)": the outer pair does not wrap everything
        toks = toks[1:-1]
    return toks


def _split_top(toks: list[Token], op: str) -> list[list[Token]]:
    parts: list[list[Token]] = [[]]
    depth = 0
    for t in toks:
        if t.text in ("(", "[", "{"):
            depth += 1
        elif t.text in (")", "]", "}"):
            depth -= 1
        if depth == 0 and t.text == op:
            parts.append([])
        else:
            parts[-1].append(t)
    return parts


def _conjuncts(text: str) -> list[list[Token]]:
    return [_strip_parens(p) for p in _split_top(_strip_parens(_expr_tokens(text)), "&&")]


def _is_zero_check(toks: list[Token]) -> bool:
    parts = _split_top(toks, "==")
    if len(parts) != 2:
        return False
    lhs, rhs = (_strip_parens(p) for p in parts)
    return any(len(side) == 1 and side[0].kind == NUMBER and float(side[0].text.replace("_", "")) == 0
               for side in (lhs, rhs) if side and side[0].text[:2].lower() != "0x")


def _constant_comparisons(text: str) -> set[str]:
    """Identifiers compared directly against a numeric literal in ``text``."""
    names = set()
    toks = _strip_parens(_expr_tokens(text))
    for conj in _split_top(toks, "&&"):
        for part in _split_top(_strip_parens(conj), "||"):
            part = _strip_parens(part)
            if len(part) != 3 or part[1].text not in COMPARISONS:
                continue
            a, _, b = part
            if a.kind == IDENT and b.kind == NUMBER:
                names.add(a.text)
            elif a.kind == NUMBER and b.kind == IDENT:
                names.add(b.text)
    return names


def _mentions(text: str, name: str) -> bool:
    return any(t.kind == IDENT and t.text == name for t in _expr_tokens(text))


def _rhs_text(stmt: Stmt) -> Optional[str]:
    toks = _expr_tokens(stmt.text)
    depth = 0
    for t in toks:
        if t.text in ("(", "[", "{"):
            depth += 1
        elif t.text in (")", "]", "}"):
            depth -= 1
        elif depth == 0 and t.text in ASSIGN_OPS:
            return stmt.text[t.end :]
    return None


# ---------------------------------------------------------------- detectors


def detect_p1_wrapper_check(unit: SourceUnit) -> list[Finding]:
    findings = []
    for fn in library_functions(unit):
        for stmt in walk(fn.body):
            if stmt.kind is StmtKind.REQUIRE and stmt.condition:
                zero_checks = [c for c in _conjuncts(stmt.condition) if _is_zero_check(c)]
                if len(zero_checks) >= 2:
                    findings.append(_finding(unit, PatternLabel.P1, "p1-conjoined-zero-checks", stmt.span))
        wrapped = _wrapped_primitive(fn.name)
        if wrapped is None:
            continue
        for stmt in walk(fn.body):
            if stmt.kind is StmtKind.CALL and stmt.callee_member == wrapped and not stmt.targets:
                findings.append(_finding(unit, PatternLabel.P1, "p1-unchecked-wrapped-call", stmt.span))
    return findings


def _wrapped_primitive(name: str) -> Optional[str]:
    if len(name) > 4 and name.startswith("safe") and name[4].isupper():
        return name[4].lower() + name[5:]
    return None


def _consumed(name: str, later: Iterable[Stmt]) -> bool:
    for s in later:
        if s.kind in (StmtKind.REQUIRE, StmtKind.ASSERT, StmtKind.IF) and s.condition and _mentions(s.condition, name):
            return True
        if s.kind is StmtKind.RETURN and _mentions(s.text, name):
            return True
    return False


def detect_p2_unhandled_exceptions(unit: SourceUnit) -> list[Finding]:
    findings = []
    for fn in library_functions(unit):
        stmts = list(walk(fn.body))
        returned_data: set[str] = set()
        for idx, s in enumerate(stmts):
            if s.kind is StmtKind.LOW_LEVEL_CALL:
                success = s.targets[0] if s.targets else None
                if success is None or not _consumed(success, stmts[idx + 1 :]):
                    findings.append(_finding(unit, PatternLabel.P2, "p2-unchecked-low-level-call", s.span))
                returned_data.update(t for t in s.targets[1:] if t)
            elif s.kind is StmtKind.CALL and s.targets:
                returned_data.update(t for t in s.targets if t)
        if not returned_data:
            continue
        for s in stmts:
            for c in s.calls:
                if c.callee != "abi.decode" or not c.args:
                    continue
                var = c.args[0].strip()
                if var not in returned_data:
                    continue
                prefix = unit.source[fn.span.start : c.span.start]
                if not re.search(rf"\b{re.escape(var)}\s*\.\s*length\b", prefix):
                    findings.append(_finding(unit, PatternLabel.P2, "p2-unchecked-decode-length", c.span))
    return findings


def detect_p3_inappropriate_extension(unit: SourceUnit) -> list[Finding]:
    findings = []
    for fn in library_functions(unit):
        derived = set(fn.param_names)
        # declared without a value and not yet given one in plain Solidity:
        # produced by code we cannot see (assembly decoding, elided code)
        opaque: set[str] = set()
        for s in walk(fn.body):
            if s.kind is StmtKind.IF and s.condition:
                for name in sorted(_constant_comparisons(s.condition)):
                    if name not in derived and name not in opaque:
                        continue
                    if any(b.kind is StmtKind.ASSIGNMENT and name in b.targets for b in walk(s.body)):
                        findings.append(_finding(unit, PatternLabel.P3, "p3-inline-input-rewrite", s.span))
                        break
                continue
            if s.kind is StmtKind.OTHER and s.declares and not s.calls:
                opaque.update(t for t in s.targets if t)
                continue
            if s.targets and s.kind is not StmtKind.IF:
                rhs = _rhs_text(s)
                if rhs is None:
                    continue
                from_input = any(_mentions(rhs, d) for d in derived | opaque)
                for t in s.targets:
                    if not t:
                        continue
                    opaque.discard(t)
                    if from_input:
                        derived.add(t)
                    elif t not in fn.param_names:
                        derived.discard(t)
    return findings


def _is_library_receiver(receiver: str, unit: SourceUnit) -> bool:
    if receiver in unit.library_names:
        return True
    return re.fullmatch(r"[A-Z][A-Za-z0-9_]*", receiver) is not None and not receiver.startswith("I")


def detect_p5_incomplete_replacement(
    unit: SourceUnit, pairs: Sequence[WrapperPair] | None = None
) -> list[Finding]:
    pairs = load_wrapper_pairs() if pairs is None else pairs
    calls: list[Stmt] = []
    for decl, fn in unit.iter_functions():
        if decl is not None and decl.kind is DeclKind.LIBRARY:
            continue  # wrapper implementations call the primitive by design
        for s in walk(fn.body):
            calls.extend(s.calls)
    calls.sort(key=lambda c: c.span.start)
    findings = []
    flagged: set[Span] = set()
    for pair in pairs:
        arities = set()
        for c in calls:
            if c.callee_member != pair.wrapper:
                continue
            receiver = c.receiver
            if receiver is not None and _is_library_receiver(receiver, unit):
                arities.add(len(c.args) - 1)
            else:
                arities.add(len(c.args))
        if not arities:
            continue
        for c in calls:
            if c.callee_member == pair.primitive and c.receiver is not None and len(c.args) in arities:
                if c.span not in flagged:
                    flagged.add(c.span)
                    findings.append(_finding(unit, PatternLabel.P5, "p5-raw-primitive-after-wrapper", c.span))
    findings.sort(key=lambda f: f.span.start)
    return findings


def only_checked_arithmetic(unit: SourceUnit) -> Optional[bool]:
    """Whether the pragma rules out every compiler without overflow checks.

    ``None`` when the unit has no pragma. Decided by enumerating releases:
    some 0.8+ version must be admitted and no pre-0.8 version may be.
    """
    try:
        legacy = any(pragma_allows(unit, (0, minor, patch)) for minor in range(0, 8) for patch in range(100))
    except NoPragma:
        return None
    modern = any(pragma_allows(unit, (0, minor, patch)) for minor in range(8, 16) for patch in range(100))
    return modern and not legacy


# ---------------------------------------------------------------- verdict


class StaticAnalyzer:
    """Runs the detectors and the matcher and reduces them to one label."""

    def __init__(
        self,
        kb: Sequence[PatternRecord],
        threshold: float = DEFAULT_THRESHOLD,
        wrapper_pairs: Sequence[WrapperPair] | None = None,
    ):
        self.kb = list(kb)
        self.matcher = SnippetMatcher(self.kb, threshold)
        self.wrapper_pairs = tuple(load_wrapper_pairs() if wrapper_pairs is None else wrapper_pairs)

    def semantic_findings(self, unit: SourceUnit) -> list[Finding]:
        findings = (
            detect_p1_wrapper_check(unit)
            + detect_p2_unhandled_exceptions(unit)
            + detect_p3_inappropriate_extension(unit)
            + detect_p5_incomplete_replacement(unit, self.wrapper_pairs)
        )
        findings.sort(key=lambda f: (f.span.start, f.label.code))
        return findings

    def _matcher_finding(self, unit: SourceUnit, result: MatchResult) -> Optional[Finding]:
        if result.label is PatternLabel.NONE or result.best_chunk is None:
            return None
        return _finding(unit, result.label, "tfidf-match", result.best_chunk.span, result.score)

    def verdict(self, unit: SourceUnit, mode: AnalysisMode | str = AnalysisMode.HCSA) -> StaticVerdict:
        mode = AnalysisMode(mode)
        if mode is AnalysisMode.BCSSM:
            result = self.matcher.match(unit.source, MatchScope.ALL, unit)
            found = self._matcher_finding(unit, result)
            return StaticVerdict(result.label, [found] if found else [], result.per_pattern_scores)

        semantic = self.semantic_findings(unit)
        result = self.matcher.match(unit.source, MatchScope.P4_P6_P7_P8_ONLY, unit)
        matched = self._matcher_finding(unit, result)
        if matched is not None and matched.label is PatternLabel.P8 and not only_checked_arithmetic(unit):
            # checked-arithmetic helpers are only redundant on 0.8+ compilers
            matched = None
        findings = semantic + ([matched] if matched else [])
        if semantic:
            counts = Counter(f.label for f in semantic)
            label = min(counts, key=lambda lab: (-counts[lab], lab.code))
        elif matched is not None:
            label = matched.label
        else:
            label = PatternLabel.NONE
        return StaticVerdict(label, findings, result.per_pattern_scores)


def static_verdict(
    unit: SourceUnit,
    kb: Sequence[PatternRecord],
    mode: AnalysisMode | str = AnalysisMode.HCSA,
    threshold: float = DEFAULT_THRESHOLD,
    wrapper_pairs: Sequence[WrapperPair] | None = None,
) -> StaticVerdict:
    return StaticAnalyzer(kb, threshold, wrapper_pairs).verdict(unit, mode)
