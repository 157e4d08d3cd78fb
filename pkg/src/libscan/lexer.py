"""Solidity lexer.

Comments are skipped; every token keeps offsets into the original text so
downstream spans point at real code.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

IDENT = "ident"
NUMBER = "number"
STRING = "string"
PUNCT = "punct"

# longest first
PUNCTUATORS = sorted(
    """
    >>>= <<= >>= >>> ** == != <= >= && || ++ -- += -= *= /= %= |= &= ^= << >> => -> :=
    ( ) [ ] { } ; , . ? : = + - * / % ! ~ & | ^ < > @
    """.split(),
    key=len,
    reverse=True,
)

_IDENT_RE = re.compile(r"[A-Za-z_$][A-Za-z0-9_$]*")
_NUMBER_RE = re.compile(
    r"0[xX][0-9a-fA-F_]*|(?:\d[\d_]*(?:\.\d[\d_]*)?|\.\d[\d_]*)(?:[eE]-?\d[\d_]*)?"
)


class LexError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    start: int
    end: int

    def __repr__(self) -> str:
        return f"Token({self.kind}, {self.text!r}, {self.start})"


def line_col(text: str, offset: int) -> tuple[int, int]:
    """1-based line and column of ``offset``."""
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


def lex(source: str, strict: bool = True) -> list[Token]:
    """Split ``source`` into tokens.

    In strict mode an unterminated string or block comment raises
    :class:`LexError`; otherwise the remainder of the offending construct is
    dropped and lexing never fails.
    """
    tokens: list[Token] = []
    i, n = 0, len(source)
    while i < n:
        c = source[i]
        if c.isspace():
            i += 1
            continue
        if source.startswith("//", i):
            j = source.find("\n", i)
            i = n if j < 0 else j + 1
            continue
        if source.startswith("/*", i):
            j = source.find("*/", i + 2)
            if j < 0:
                if strict:
                    raise LexError("unterminated comment", *line_col(source, i))
                break
            i = j + 2
            continue
        if c in "\"'":
            j = i + 1
            while j < n and source[j] != c and source[j] != "\n":
                j += 2 if source[j] == "\\" else 1
            if j >= n or source[j] != c:
                if strict:
                    raise LexError("unterminated string", *line_col(source, i))
                j = min(j, n)
                i = j
                continue
            tokens.append(Token(STRING, source[i : j + 1], i, j + 1))
            i = j + 1
            continue
        m = _IDENT_RE.match(source, i)
        if m:
            tokens.append(Token(IDENT, m.group(), i, m.end()))
            i = m.end()
            continue
        if c.isdigit() or (c == "." and i + 1 < n and source[i + 1].isdigit()):
            m = _NUMBER_RE.match(source, i)
            if m and m.end() > i:
                tokens.append(Token(NUMBER, m.group(), i, m.end()))
                i = m.end()
                continue
        for p in PUNCTUATORS:
            if source.startswith(p, i):
                tokens.append(Token(PUNCT, p, i, i + len(p)))
                i += len(p)
                break
        else:
            # unknown character: keep it so nothing is silently lost
            tokens.append(Token(PUNCT, c, i, i + 1))
            i += 1
    return tokens
