"""Tolerant structural parser for Solidity.

The parser goes as deep as the misuse detectors need: pragmas, imports,
library/contract/interface declarations, functions, using-for directives and
statements with their call expressions. Expressions are kept as source text;
constructs the parser does not understand become ``Other`` statements and
never abort the file.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .lexer import IDENT, NUMBER, STRING, LexError, Token, lex, line_col

LOW_LEVEL_MEMBERS = frozenset({"call", "delegatecall", "staticcall", "send"})
ASSIGN_OPS = frozenset({"=", "+=", "-=", "*=", "/=", "%=", "|=", "&=", "^=", "<<=", ">>=", ">>>="})
VISIBILITIES = ("public", "external", "internal", "private")
MUTABILITIES = ("pure", "view", "payable", "constant")
DATA_LOCATIONS = frozenset({"memory", "storage", "calldata"})
# identifiers that may precede "(" without forming a call
NON_CALL_WORDS = frozenset(
    {"if", "while", "for", "return", "returns", "require", "assert", "mapping",
     "catch", "function", "do", "else", "emit", "new", "try"}
)
_OPEN = {"(": ")", "[": "]", "{": "}"}
_CLOSE = {v: k for k, v in _OPEN.items()}


class NoPragma(LookupError):
    """The unit carries no ``pragma solidity`` directive."""


class DeclKind(enum.Enum):
    LIBRARY = "Library"
    CONTRACT = "Contract"
    INTERFACE = "Interface"


class StmtKind(enum.Enum):
    REQUIRE = "Require"
    ASSERT = "Assert"
    CALL = "Call"
    LOW_LEVEL_CALL = "LowLevelCall"
    ASSIGNMENT = "Assignment"
    IF = "If"
    RETURN = "Return"
    OTHER = "Other"


@dataclass(frozen=True)
class Span:
    start: int
    end: int

    def contains(self, other: "Span") -> bool:
        return self.start <= other.start and other.end <= self.end

    def slice(self, source: str) -> str:
        return source[self.start : self.end]


@dataclass
class Stmt:
    kind: StmtKind
    span: Span
    text: str
    callee: Optional[str] = None
    args: list[str] = field(default_factory=list)
    condition: Optional[str] = None
    # assigned or declared names, positional for tuples (None marks an empty slot)
    targets: list[Optional[str]] = field(default_factory=list)
    declares: bool = False
    body: list["Stmt"] = field(default_factory=list)
    else_body: list["Stmt"] = field(default_factory=list)
    # every call expression inside this statement's own tokens (not sub-statements)
    calls: list["Stmt"] = field(default_factory=list)

    @property
    def callee_member(self) -> Optional[str]:
        if self.callee is None:
            return None
        return self.callee.rsplit(".", 1)[-1]

    @property
    def receiver(self) -> Optional[str]:
        if self.callee is None or "." not in self.callee:
            return None
        return self.callee.rsplit(".", 1)[0]

    def children(self) -> Iterator["Stmt"]:
        yield from self.body
        yield from self.else_body


@dataclass
class FunctionDef:
    name: str
    params: list[tuple[str, str]]
    returns: list[str]
    visibility: str
    body: list[Stmt]
    span: Span
    kind: str = "function"
    mutability: Optional[str] = None
    modifiers: list[str] = field(default_factory=list)
    has_body: bool = True

    @property
    def param_names(self) -> list[str]:
        return [name for name, _ in self.params if name]

    @property
    def signature(self) -> tuple[str, tuple[str, ...]]:
        return self.name, tuple(t for _, t in self.params)


@dataclass
class UsingFor:
    library_name: str
    target_type: str
    span: Span


@dataclass
class Declaration:
    kind: DeclKind
    name: str
    bases: list[str]
    functions: list[FunctionDef]
    using_fors: list[UsingFor]
    span: Span
    abstract: bool = False


# ---------------------------------------------------------------- versions

Version = tuple[int, int, int]

_COMPARATOR_RE = re.compile(r"(\^|~|>=|<=|>|<|=)?\s*v?(\d+|[xX*])(?:\.(\d+|[xX*]))?(?:\.(\d+|[xX*]))?")
_HYPHEN_RE = re.compile(r"(\S+)\s+-\s+(\S+)")


def parse_version(text: str | Version) -> Version:
    if isinstance(text, tuple):
        return tuple(int(x) for x in text)  # type: ignore[return-value]
    parts = text.strip().lstrip("v").split(".")
    nums = [int(p) for p in parts] + [0] * (3 - len(parts))
    if len(nums) != 3:
        raise ValueError(f"bad version {text!r}")
    return nums[0], nums[1], nums[2]


def _partial(groups: tuple) -> list[Optional[int]]:
    out: list[Optional[int]] = []
    for g in groups:
        if g is None or g in ("x", "X", "*"):
            break
        out.append(int(g))
    return out


def _comparator_bounds(op: str, parts: list[Optional[int]]) -> list[tuple[str, Version]]:
    """Expand one npm-style comparator into primitive (op, version) bounds."""
    p = parts + [0] * (3 - len(parts))
    v = (p[0], p[1], p[2])
    n = len(parts)
    if n == 0:
        return []  # "*" admits everything
    if op == "^":
        if v[0] > 0 or n == 1:
            upper = (v[0] + 1, 0, 0)
        elif v[1] > 0 or n == 2:
            upper = (0, v[1] + 1, 0)
        else:
            upper = (0, 0, v[2] + 1)
        return [(">=", v), ("<", upper)]
    if op == "~":
        upper = (v[0] + 1, 0, 0) if n == 1 else (v[0], v[1] + 1, 0)
        return [(">=", v), ("<", upper)]
    if op in ("", "="):
        if n == 3:
            return [("=", v)]
        upper = (v[0] + 1, 0, 0) if n == 1 else (v[0], v[1] + 1, 0)
        return [(">=", v), ("<", upper)]
    if op == ">" and n < 3:
        upper = (v[0] + 1, 0, 0) if n == 1 else (v[0], v[1] + 1, 0)
        return [(">=", upper)]
    if op == "<=" and n < 3:
        upper = (v[0] + 1, 0, 0) if n == 1 else (v[0], v[1] + 1, 0)
        return [("<", upper)]
    return [(op, v)]


_CMP = {
    "=": lambda a, b: a == b,
    ">=": lambda a, b: a >= b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    "<": lambda a, b: a < b,
}


@dataclass(frozen=True)
class VersionConstraint:
    """One ``pragma solidity`` expression: OR of AND-ed primitive bounds."""

    text: str
    alternatives: tuple[tuple[tuple[str, Version], ...], ...]

    @classmethod
    def parse(cls, text: str) -> "VersionConstraint":
        alternatives = []
        for alt in text.split("||"):
            bounds: list[tuple[str, Version]] = []
            rest = alt
            for m in _HYPHEN_RE.finditer(alt):
                lo = _partial(_COMPARATOR_RE.fullmatch(m.group(1)).groups()[1:])  # type: ignore[union-attr]
                hi = _partial(_COMPARATOR_RE.fullmatch(m.group(2)).groups()[1:])  # type: ignore[union-attr]
                bounds += _comparator_bounds(">=", lo) if lo else []
                bounds += _comparator_bounds("<=", hi) if hi else []
                rest = rest.replace(m.group(0), " ")
            for m in _COMPARATOR_RE.finditer(rest):
                bounds += _comparator_bounds(m.group(1) or "", _partial(m.groups()[1:]))
            alternatives.append(tuple(bounds))
        return cls(text.strip(), tuple(alternatives))

    def allows(self, version: str | Version) -> bool:
        v = parse_version(version)
        return any(all(_CMP[op](v, b) for op, b in alt) for alt in self.alternatives)


# ---------------------------------------------------------------- source unit


@dataclass
class SourceUnit:
    path: str
    source: str
    pragma_versions: list[VersionConstraint] = field(default_factory=list)
    imports: list[str] = field(default_factory=list)
    declarations: list[Declaration] = field(default_factory=list)
    # file-level functions and using-for directives
    functions: list[FunctionDef] = field(default_factory=list)
    using_fors: list[UsingFor] = field(default_factory=list)

    def iter_functions(self) -> Iterator[tuple[Optional[Declaration], FunctionDef]]:
        for fn in self.functions:
            yield None, fn
        for decl in self.declarations:
            for fn in decl.functions:
                yield decl, fn

    def iter_using_fors(self) -> Iterator[UsingFor]:
        yield from self.using_fors
        for decl in self.declarations:
            yield from decl.using_fors

    def declaration(self, name: str) -> Optional[Declaration]:
        for decl in self.declarations:
            if decl.name == name:
                return decl
        return None

    @property
    def library_names(self) -> set[str]:
        return {d.name for d in self.declarations if d.kind is DeclKind.LIBRARY}


def walk(stmts: list[Stmt]) -> Iterator[Stmt]:
    """Pre-order traversal of a statement list, in source order."""
    for s in stmts:
        yield s
        yield from walk(list(s.children()))


def pragma_allows(unit: SourceUnit, version: str | Version) -> bool:
    """True iff every ``pragma solidity`` constraint in ``unit`` admits ``version``."""
    if not unit.pragma_versions:
        raise NoPragma(unit.path)
    return all(c.allows(version) for c in unit.pragma_versions)


def call_sites(unit: SourceUnit, callee_name: str) -> list[Stmt]:
    """Call expressions whose final callee segment is exactly ``callee_name``."""
    sites = []
    for _, fn in unit.iter_functions():
        for stmt in walk(fn.body):
            sites.extend(c for c in stmt.calls if c.callee_member == callee_name)
    sites.sort(key=lambda s: s.span.start)
    return sites


# ---------------------------------------------------------------- parser


class _Parser:
    def __init__(self, source: str, tokens: list[Token]):
        self.src = source
        self.toks = tokens
        self.i = 0
        self._match = self._pair_brackets()

    # -- helpers

    def _pair_brackets(self) -> dict[int, int]:
        pairs: dict[int, int] = {}
        stack: list[int] = []
        for idx, t in enumerate(self.toks):
            if t.kind != STRING and t.text in _OPEN:
                stack.append(idx)
            elif t.kind != STRING and t.text in _CLOSE:
                # tolerate mismatches: pop to the nearest matching opener
                for k in range(len(stack) - 1, -1, -1):
                    if self.toks[stack[k]].text == _CLOSE[t.text]:
                        pairs[stack[k]] = idx
                        pairs[idx] = stack[k]
                        del stack[k:]
                        break
        return pairs

    def peek(self, ahead: int = 0) -> Optional[Token]:
        j = self.i + ahead
        return self.toks[j] if j < len(self.toks) else None

    def at(self, text: str, ahead: int = 0) -> bool:
        t = self.peek(ahead)
        return t is not None and t.text == text and t.kind != STRING

    def eof(self) -> bool:
        return self.i >= len(self.toks)

    def close_of(self, idx: int) -> int:
        """Index of the bracket closing ``idx``; unmatched runs to the end."""
        return self._match.get(idx, len(self.toks) - 1)

    def span(self, lo: int, hi: int) -> Span:
        """Span covering tokens lo..hi inclusive."""
        hi = max(lo, min(hi, len(self.toks) - 1))
        return Span(self.toks[lo].start, self.toks[hi].end)

    def text(self, lo: int, hi: int) -> str:
        if lo > hi or lo >= len(self.toks):
            return ""
        return self.span(lo, hi).slice(self.src)

    def skip_to_semicolon(self) -> int:
        """Consume through the next depth-0 ';'; return the index of the last token consumed."""
        last = self.i
        while not self.eof():
            t = self.toks[self.i]
            if t.kind != STRING and t.text in _OPEN:
                self.i = self.close_of(self.i) + 1
                last = self.i - 1
                continue
            if t.kind != STRING and t.text == "}":
                break  # end of the enclosing block: stop before it
            last = self.i
            self.i += 1
            if t.text == ";" and t.kind != STRING:
                break
        return last

    # -- top level

    def parse_unit(self, unit: SourceUnit) -> None:
        while not self.eof():
            t = self.toks[self.i]
            word = t.text if t.kind == IDENT else None
            if word == "pragma":
                self.parse_pragma(unit)
            elif word == "import":
                self.parse_import(unit)
            elif word in ("library", "contract", "interface") or (word == "abstract" and self.at("contract", 1)):
                unit.declarations.append(self.parse_declaration())
            elif word == "function":
                unit.functions.append(self.parse_function(default_visibility="internal"))
            elif word == "using":
                unit.using_fors.append(self.parse_using())
            elif word in ("struct", "enum"):
                self.skip_braced_type()
            elif t.text == "}":
                self.i += 1  # stray closer
            else:
                start = self.i
                self.skip_to_semicolon()
                if self.i == start:
                    self.i += 1

    def parse_pragma(self, unit: SourceUnit) -> None:
        start = self.i
        self.i += 1
        last = self.skip_to_semicolon()
        if start + 1 <= last and self.toks[start + 1].text == "solidity":
            end = last - 1 if self.toks[last].text == ";" else last
            text = self.text(start + 2, end)
            if text.strip():
                unit.pragma_versions.append(VersionConstraint.parse(text))

    def parse_import(self, unit: SourceUnit) -> None:
        start = self.i
        self.i += 1
        last = self.skip_to_semicolon()
        for t in self.toks[start : last + 1]:
            if t.kind == STRING:
                unit.imports.append(t.text[1:-1])
                return
        unit.imports.append(self.text(start, last))

    def skip_braced_type(self) -> None:
        while not self.eof() and not self.at("{") and not self.at(";"):
            self.i += 1
        if self.at("{"):
            self.i = self.close_of(self.i) + 1
        elif self.at(";"):
            self.i += 1

    def parse_declaration(self) -> Declaration:
        start = self.i
        abstract = False
        if self.at("abstract"):
            abstract = True
            self.i += 1
        kind = {"library": DeclKind.LIBRARY, "contract": DeclKind.CONTRACT,
                "interface": DeclKind.INTERFACE}[self.toks[self.i].text]
        self.i += 1
        name = ""
        if self.peek() is not None and self.peek().kind == IDENT:  # type: ignore[union-attr]
            name = self.toks[self.i].text
            self.i += 1
        bases: list[str] = []
        if self.at("is"):
            self.i += 1
            current: list[str] = []
            while not self.eof() and not self.at("{"):
                t = self.toks[self.i]
                if t.text == "(":
                    self.i = self.close_of(self.i) + 1
                    continue
                if t.text == ",":
                    if current:
                        bases.append("".join(current))
                    current = []
                elif t.kind == IDENT or t.text == ".":
                    current.append(t.text)
                self.i += 1
            if current:
                bases.append("".join(current))
        decl = Declaration(kind, name, bases, [], [], Span(self.toks[start].start, self.toks[start].end), abstract)
        if not self.at("{"):
            decl.span = self.span(start, self.i - 1)
            return decl
        close = self.close_of(self.i)
        self.i += 1
        default_vis = "external" if kind is DeclKind.INTERFACE else "public"
        while self.i < close and not self.eof():
            t = self.toks[self.i]
            word = t.text if t.kind == IDENT else None
            if word == "function":
                decl.functions.append(self.parse_function(default_visibility=default_vis))
            elif word in ("constructor", "fallback", "receive", "modifier") and (
                word != "receive" or self.at("(", 1)
            ):
                vis = "internal" if word == "modifier" else default_vis
                decl.functions.append(self.parse_function(default_visibility=vis))
            elif word == "using":
                decl.using_fors.append(self.parse_using())
            elif word in ("struct", "enum"):
                self.skip_braced_type()
            else:
                before = self.i
                self.skip_to_semicolon()
                if self.i == before:
                    self.i += 1
        self.i = min(close, len(self.toks) - 1) + 1
        decl.span = self.span(start, close)
        return decl

    def parse_using(self) -> UsingFor:
        start = self.i
        self.i += 1
        lib_lo = self.i
        if self.at("{"):
            self.i = self.close_of(self.i) + 1
        else:
            while not self.eof() and not self.at("for") and not self.at(";") and not self.at("}"):
                self.i += 1
        library = "".join(t.text for t in self.toks[lib_lo : self.i])
        target = ""
        last = self.i - 1
        if self.at("for"):
            self.i += 1
            type_lo = self.i
            last = self.skip_to_semicolon()
            type_hi = last - 1 if self.toks[last].text == ";" else last
            # drop a trailing "global" marker
            if type_hi >= type_lo and self.toks[type_hi].text == "global":
                type_hi -= 1
            target = " ".join(self.text(type_lo, type_hi).split())
        elif self.at(";"):
            last = self.i
            self.i += 1
        return UsingFor(library, target, self.span(start, last))

    def parse_params(self, lo: int, hi: int) -> list[tuple[str, str]]:
        """Parameters between token indices lo..hi exclusive."""
        params = []
        for a, b in _split_commas(self.toks, lo, hi, self._match):
            if a >= b:
                continue
            name = ""
            type_hi = b - 1
            last = self.toks[b - 1]
            if (
                b - a >= 2
                and last.kind == IDENT
                and last.text not in DATA_LOCATIONS
                and last.text != "payable"
                and self.toks[b - 2].text != "."
            ):
                name = last.text
                type_hi = b - 2
            while type_hi > a and self.toks[type_hi].text in DATA_LOCATIONS:
                type_hi -= 1
            params.append((name, " ".join(self.text(a, type_hi).split())))
        return params

    def parse_function(self, default_visibility: str) -> FunctionDef:
        start = self.i
        kind = self.toks[self.i].text
        self.i += 1
        if kind == "function":
            name = ""
            if self.peek() is not None and self.peek().kind == IDENT and not self.at("("):  # type: ignore[union-attr]
                name = self.toks[self.i].text
                self.i += 1
        else:
            name = kind
            if kind == "modifier" and self.peek() is not None and self.peek().kind == IDENT:  # type: ignore[union-attr]
                name = self.toks[self.i].text
                self.i += 1
        params: list[tuple[str, str]] = []
        if self.at("("):
            close = self.close_of(self.i)
            params = self.parse_params(self.i + 1, close)
            self.i = close + 1
        visibility = default_visibility
        mutability = None
        modifiers: list[str] = []
        returns: list[str] = []
        while not self.eof() and not self.at("{") and not self.at(";") and not self.at("}"):
            t = self.toks[self.i]
            if t.text == "returns" and self.at("(", 1):
                close = self.close_of(self.i + 1)
                returns = [ty for _, ty in self.parse_params(self.i + 2, close)]
                self.i = close + 1
                continue
            if t.text in VISIBILITIES:
                visibility = t.text
            elif t.text in MUTABILITIES:
                mutability = t.text
            elif t.kind == IDENT and t.text not in ("virtual", "override"):
                modifiers.append(t.text)
            if self.at("(", 1):
                self.i = self.close_of(self.i + 1) + 1
            else:
                self.i += 1
        body: list[Stmt] = []
        has_body = False
        if self.at("{"):
            has_body = True
            close = self.close_of(self.i)
            body = self.parse_block(self.i + 1, close)
            self.i = close + 1
            end = close
        elif self.at(";"):
            end = self.i
            self.i += 1
        else:
            end = self.i - 1
        return FunctionDef(
            name=name,
            params=params,
            returns=returns,
            visibility=visibility,
            body=body,
            span=self.span(start, end),
            kind="function" if kind == "function" else kind,
            mutability=mutability,
            modifiers=modifiers,
            has_body=has_body,
        )

    # -- statements

    def parse_block(self, lo: int, hi: int) -> list[Stmt]:
        """Statements between token indices lo..hi exclusive (hi is the closing brace)."""
        saved = self.i
        self.i = lo
        stmts = []
        while self.i < hi:
            before = self.i
            stmt = self.parse_statement(hi)
            if stmt is not None:
                stmts.append(stmt)
            if self.i <= before:
                self.i = before + 1
        self.i = saved
        return stmts

    def parse_statement(self, limit: int) -> Optional[Stmt]:
        t = self.toks[self.i]
        start = self.i
        if t.text == ";":
            self.i += 1
            return None
        if t.text == "{":
            close = min(self.close_of(self.i), limit)
            body = self.parse_block(self.i + 1, close)
            self.i = close + 1
            return self._stmt(StmtKind.OTHER, start, close, body=body)
        word = t.text if t.kind == IDENT else None
        if word == "if" and self.at("(", 1):
            cond_close = self.close_of(self.i + 1)
            condition = self.text(self.i + 2, cond_close - 1)
            calls = self.extract_calls(self.i + 2, cond_close)
            self.i = cond_close + 1
            then = self._branch(limit)
            else_body: list[Stmt] = []
            if self.i < limit and self.at("else"):
                self.i += 1
                else_body = self._branch(limit)
            stmt = self._stmt(StmtKind.IF, start, self.i - 1, body=then, else_body=else_body, calls=calls)
            stmt.condition = condition
            return stmt
        if word in ("for", "while") and self.at("(", 1):
            head_close = self.close_of(self.i + 1)
            calls = self.extract_calls(self.i + 2, head_close)
            self.i = head_close + 1
            body = self._branch(limit)
            return self._stmt(StmtKind.OTHER, start, self.i - 1, body=body, calls=calls)
        if word == "do":
            self.i += 1
            body = self._branch(limit)
            while self.i < limit and not self.at(";"):
                self.i += 1
            end = min(self.i, limit - 1)
            self.i = end + 1
            return self._stmt(StmtKind.OTHER, start, end, body=body)
        if word == "unchecked" and self.at("{", 1):
            close = min(self.close_of(self.i + 1), limit)
            body = self.parse_block(self.i + 2, close)
            self.i = close + 1
            return self._stmt(StmtKind.OTHER, start, close, body=body)
        if word == "assembly":
            while self.i < limit and not self.at("{"):
                self.i += 1
            close = min(self.close_of(self.i), limit) if self.i < limit else limit - 1
            self.i = close + 1
            return self._stmt(StmtKind.OTHER, start, close)
        if word == "try":
            body: list[Stmt] = []
            calls_lo = self.i + 1
            while self.i < limit and not self.at("{"):
                if self.at("("):
                    self.i = self.close_of(self.i) + 1
                else:
                    self.i += 1
            calls = self.extract_calls(calls_lo, self.i)
            end = self.i
            while self.i < limit and self.at("{"):
                close = min(self.close_of(self.i), limit)
                body += self.parse_block(self.i + 1, close)
                end = close
                self.i = close + 1
                if self.i < limit and self.at("catch"):
                    while self.i < limit and not self.at("{"):
                        self.i += 1
            return self._stmt(StmtKind.OTHER, start, end, body=body, calls=calls)
        # simple statement up to ';'
        end = self.i
        while self.i < limit:
            tok = self.toks[self.i]
            if tok.kind != STRING and tok.text in _OPEN:
                self.i = min(self.close_of(self.i), limit - 1) + 1
                end = self.i - 1
                continue
            if tok.kind != STRING and tok.text == "}":
                break
            end = self.i
            self.i += 1
            if tok.kind != STRING and tok.text == ";":
                break
        return self.classify(start, end)

    def _branch(self, limit: int) -> list[Stmt]:
        if self.i >= limit:
            return []
        if self.at("{"):
            close = min(self.close_of(self.i), limit)
            body = self.parse_block(self.i + 1, close)
            self.i = close + 1
            return body
        stmt = self.parse_statement(limit)
        return [stmt] if stmt is not None else []

    def _stmt(self, kind: StmtKind, lo: int, hi: int, **kw) -> Stmt:
        span = self.span(lo, hi)
        return Stmt(kind=kind, span=span, text=span.slice(self.src), **kw)

    def classify(self, lo: int, end: int) -> Stmt:
        """Classify the simple statement spanning tokens lo..end inclusive."""
        hi = end if self.toks[end].text != ";" else end - 1  # last expression token
        toks = self.toks
        calls = self.extract_calls(lo, hi + 1)
        first = toks[lo].text if toks[lo].kind == IDENT else None

        if first in ("require", "assert") and lo + 1 <= hi and toks[lo + 1].text == "(":
            close = self.close_of(lo + 1)
            args = [self.text(a, b - 1) for a, b in _split_commas(toks, lo + 2, close, self._match) if a < b]
            kind = StmtKind.REQUIRE if first == "require" else StmtKind.ASSERT
            stmt = self._stmt(kind, lo, end, args=args, calls=calls)
            stmt.condition = args[0] if args else ""
            return stmt
        if first == "return":
            return self._stmt(StmtKind.RETURN, lo, end, calls=calls)
        if first in ("emit", "revert", "throw", "break", "continue", "_"):
            return self._stmt(StmtKind.OTHER, lo, end, calls=calls)

        # top-level assignment operator
        assign_at = None
        k = lo
        while k <= hi:
            tk = toks[k]
            if tk.kind != STRING and tk.text in _OPEN:
                k = self.close_of(k) + 1
                continue
            if tk.kind != STRING and tk.text in ASSIGN_OPS:
                assign_at = k
                break
            k += 1

        if assign_at is not None:
            targets, declares = self._targets(lo, assign_at)
            outer = _outermost(calls, toks, assign_at + 1, hi)
            if outer is not None:
                stmt = self._stmt(outer.kind, lo, end, callee=outer.callee, args=list(outer.args),
                                  targets=targets, declares=declares, calls=calls)
            else:
                stmt = self._stmt(StmtKind.ASSIGNMENT, lo, end, targets=targets, declares=declares, calls=calls)
            return stmt

        texts = [t.text for t in toks[lo : hi + 1]]
        if len(texts) == 2 and ("++" in texts or "--" in texts):
            name = texts[1] if texts[0] in ("++", "--") else texts[0]
            return self._stmt(StmtKind.ASSIGNMENT, lo, end, targets=[name], calls=calls)
        if first == "delete":
            root = next((t.text for t in toks[lo + 1 : hi + 1] if t.kind == IDENT), None)
            return self._stmt(StmtKind.ASSIGNMENT, lo, end, targets=[root] if root else [], calls=calls)

        outer = _outermost(calls, toks, lo, hi)
        if outer is not None:
            return self._stmt(outer.kind, lo, end, callee=outer.callee, args=list(outer.args), calls=calls)

        if _looks_like_declaration(toks, lo, hi):
            return self._stmt(StmtKind.OTHER, lo, end, targets=[toks[hi].text], declares=True, calls=calls)
        return self._stmt(StmtKind.OTHER, lo, end, calls=calls)

    def _targets(self, lo: int, hi: int) -> tuple[list[Optional[str]], bool]:
        """Names assigned by the left-hand side toks[lo:hi]."""
        toks = self.toks
        if hi <= lo:
            return [], False
        if toks[lo].text == "(" and self.close_of(lo) == hi - 1:
            targets: list[Optional[str]] = []
            declares = False
            for a, b in _split_commas(toks, lo + 1, hi - 1, self._match):
                idents = [t.text for t in toks[a:b] if t.kind == IDENT and t.text not in DATA_LOCATIONS]
                targets.append(idents[-1] if idents else None)
                declares = declares or (b - a >= 2)
            return targets, declares
        if _looks_like_declaration(toks, lo, hi - 1):
            return [toks[hi - 1].text], True
        root = next((t.text for t in toks[lo:hi] if t.kind == IDENT), None)
        return ([root] if root else []), False

    def extract_calls(self, lo: int, hi: int) -> list[Stmt]:
        """Call expressions among toks[lo:hi], ordered by opening parenthesis."""
        toks = self.toks
        calls = []
        for idx in range(lo + 1, hi):
            if toks[idx].text != "(" or toks[idx].kind == STRING:
                continue
            j = idx - 1
            if toks[j].text == "}" and j in self._match and self._match[j] > lo:
                j = self._match[j] - 1  # call options {value: ...}
                if j < lo:
                    continue
            tj = toks[j]
            if tj.kind == IDENT:
                if tj.text in NON_CALL_WORDS:
                    continue
            elif tj.text not in (")", "]"):
                continue
            begin = j
            while begin >= lo:
                tb = toks[begin]
                if tb.text in (")", "]") and begin in self._match:
                    opener = self._match[begin]
                    if opener < lo:
                        break
                    if opener - 1 >= lo and (
                        (toks[opener - 1].kind == IDENT and toks[opener - 1].text not in NON_CALL_WORDS)
                        or toks[opener - 1].text in (")", "]")
                    ):
                        begin = opener - 1
                        continue
                    begin = opener
                    break
                if tb.kind == IDENT:
                    if begin - 2 >= lo and toks[begin - 1].text == ".":
                        begin -= 2
                        continue
                    break
                break
            if begin < lo:
                continue
            close = min(self.close_of(idx), hi - 1)
            callee = "".join(t.text for t in toks[begin : j + 1])
            member = callee.rsplit(".", 1)[-1]
            kind = StmtKind.LOW_LEVEL_CALL if "." in callee and member in LOW_LEVEL_MEMBERS else StmtKind.CALL
            args = [self.text(a, b - 1) for a, b in _split_commas(toks, idx + 1, close, self._match) if a < b]
            calls.append(self._stmt(kind, begin, close, callee=callee, args=args))
        return calls


def _split_commas(toks: list[Token], lo: int, hi: int, match: dict[int, int]) -> list[tuple[int, int]]:
    """Split toks[lo:hi] on depth-0 commas into half-open index ranges."""
    parts = []
    a = k = lo
    while k < hi:
        t = toks[k]
        if t.kind != STRING and t.text in _OPEN and k in match:
            k = match[k] + 1
            continue
        if t.kind != STRING and t.text == ",":
            parts.append((a, k))
            a = k + 1
        k += 1
    if a < hi or parts:
        parts.append((a, hi))
    return parts


def _outermost(calls: list[Stmt], toks: list[Token], lo: int, hi: int) -> Optional[Stmt]:
    """The call spanning exactly toks[lo..hi], if any."""
    if lo > hi:
        return None
    start, end = toks[lo].start, toks[hi].end
    for c in calls:
        if c.span.start == start and c.span.end == end:
            return c
    return None


def _looks_like_declaration(toks: list[Token], lo: int, hi: int) -> bool:
    """``Type [location] name`` with no operators: a local declaration."""
    if hi - lo < 1 or toks[hi].kind != IDENT or toks[hi].text in DATA_LOCATIONS:
        return False
    prev = toks[hi - 1]
    if not (prev.kind == IDENT or prev.text in ("]", ")")):
        return False
    allowed = {"[", "]", ".", "(", ")", "=>", ","}
    for t in toks[lo:hi]:
        if t.kind in (IDENT, NUMBER):
            continue
        if t.text not in allowed:
            return False
    return toks[lo].kind == IDENT and toks[lo].text not in ("return", "emit", "delete", "revert")


def parse(source: str | bytes, path: str = "<memory>") -> SourceUnit:
    """Parse Solidity source into a :class:`SourceUnit`.

    Raises :class:`LexError` only for invalid UTF-8 or an unterminated
    string/comment; everything else degrades to ``Other`` statements.
    """
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            before = source[: exc.start]
            line = before.count(b"\n") + 1
            col = exc.start - (before.rfind(b"\n") + 1) + 1
            raise LexError("invalid UTF-8", line, col) from None
    tokens = lex(source, strict=True)
    unit = SourceUnit(path=str(path), source=source)
    _Parser(source, tokens).parse_unit(unit)
    return unit


def parse_file(path) -> SourceUnit:
    from pathlib import Path

    p = Path(path)
    return parse(p.read_bytes(), str(path))


# ---------------------------------------------------------------- serialization


def _stmt_dict(s: Stmt) -> dict:
    d: dict = {"kind": s.kind.value, "span": [s.span.start, s.span.end]}
    if s.callee is not None:
        d["callee"] = s.callee
    if s.args:
        d["args"] = s.args
    if s.condition is not None:
        d["condition"] = s.condition
    if s.targets:
        d["targets"] = s.targets
        d["declares"] = s.declares
    if s.calls:
        d["calls"] = [{"callee": c.callee, "kind": c.kind.value, "span": [c.span.start, c.span.end]} for c in s.calls]
    if s.body:
        d["body"] = [_stmt_dict(c) for c in s.body]
    if s.else_body:
        d["else"] = [_stmt_dict(c) for c in s.else_body]
    return d


def _fn_dict(f: FunctionDef) -> dict:
    return {
        "name": f.name,
        "kind": f.kind,
        "params": [list(p) for p in f.params],
        "returns": f.returns,
        "visibility": f.visibility,
        "mutability": f.mutability,
        "modifiers": f.modifiers,
        "span": [f.span.start, f.span.end],
        "body": [_stmt_dict(s) for s in f.body],
    }


def _using_dict(u: UsingFor) -> dict:
    return {"library_name": u.library_name, "target_type": u.target_type, "span": [u.span.start, u.span.end]}


def unit_to_dict(unit: SourceUnit) -> dict:
    """JSON-ready AST dump (debugging aid; the layout is not a stable API)."""
    return {
        "path": unit.path,
        "pragma_versions": [c.text for c in unit.pragma_versions],
        "imports": unit.imports,
        "using_fors": [_using_dict(u) for u in unit.using_fors],
        "functions": [_fn_dict(f) for f in unit.functions],
        "declarations": [
            {
                "kind": d.kind.value,
                "name": d.name,
                "bases": d.bases,
                "abstract": d.abstract,
                "span": [d.span.start, d.span.end],
                "using_fors": [_using_dict(u) for u in d.using_fors],
                "functions": [_fn_dict(f) for f in d.functions],
            }
            for d in unit.declarations
        ],
    }


__all__ = [
    "DeclKind", "Declaration", "FunctionDef", "LexError", "NoPragma", "SourceUnit", "Span",
    "Stmt", "StmtKind", "UsingFor", "VersionConstraint", "call_sites", "line_col", "parse",
    "parse_file", "parse_version", "pragma_allows", "unit_to_dict", "walk",
]
