"""Lexical helpers for decompiled Java-like source text.

Nothing here builds an AST.  The detector works on comment-free text split into
statements, which is enough for call matching and the line-oriented taint pass.
"""

from __future__ import annotations

import bisect
import re
from dataclasses import dataclass

_IDENT = re.compile(r"[A-Za-z_$][\w$]*\Z")
_NUMBER = re.compile(r"(?:0[xX][0-9a-fA-F_]+|\d[\d_]*(?:\.\d+)?)[lLfFdD]?\Z")


def strip_comments(text: str) -> str:
    """Blank out ``//`` and ``/* */`` comments, keeping offsets and newlines intact."""
    out = list(text)
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in "\"'":
            i = _skip_literal(text, i)
            continue
        if text.startswith("//", i):
            j = text.find("\n", i)
            j = n if j < 0 else j
            out[i:j] = " " * (j - i)
            i = j
            continue
        if text.startswith("/*", i):
            j = text.find("*/", i + 2)
            j = n if j < 0 else j + 2
            out[i:j] = [ch if ch == "\n" else " " for ch in text[i:j]]
            i = j
            continue
        i += 1
    return "".join(out)


def _skip_literal(text: str, i: int) -> int:
    """Index just past the string/char literal starting at ``i``."""
    quote = text[i]
    i += 1
    while i < len(text):
        c = text[i]
        if c == "\\":
            i += 2
            continue
        if c == quote or c == "\n":
            return i + 1
        i += 1
    return i


class LineIndex:
    def __init__(self, text: str):
        self._starts = [0] + [m.end() for m in re.finditer("\n", text)]

    def line_of(self, offset: int) -> int:
        return bisect.bisect_right(self._starts, offset)


@dataclass(frozen=True)
class Statement:
    offset: int  # offset of first non-blank char in the source
    text: str
    terminator: str  # ";", "{", "}" or "" at end of file
    depth: int  # brace depth the statement sits at


def iter_statements(text: str) -> list[Statement]:
    """Split comment-free source on ``;``, ``{`` and ``}`` outside literals and parens."""
    stmts = []
    depth = paren = 0
    start = 0
    i, n = 0, len(text)

    def emit(end: int, term: str, at_depth: int):
        chunk = text[start:end]
        stripped = chunk.lstrip()
        if stripped.strip() or term in "{}":
            stmts.append(Statement(start + len(chunk) - len(stripped), stripped.rstrip(), term, at_depth))

    while i < n:
        c = text[i]
        if c in "\"'":
            i = _skip_literal(text, i)
            continue
        if c == "(":
            paren += 1
        elif c == ")":
            paren = max(0, paren - 1)
        elif paren == 0 and c in ";{}":
            emit(i, c, depth)
            if c == "{":
                depth += 1
            elif c == "}":
                depth = max(0, depth - 1)
            start = i + 1
        i += 1
    if text[start:].strip():
        emit(n, "", depth)
    return stmts


@dataclass(frozen=True)
class Call:
    name: str
    offset: int  # offset of the method name within the searched text
    args: list[str]
    is_new: bool


def _split_top_level(expr: str, sep: str) -> list[str]:
    parts, depth, start, i = [], 0, 0, 0
    while i < len(expr):
        c = expr[i]
        if c in "\"'":
            i = _skip_literal(expr, i)
            continue
        if c in "([{":
            depth += 1
        elif c in ")]}":
            depth -= 1
        elif c == sep and depth == 0:
            parts.append(expr[start:i])
            start = i + 1
        i += 1
    parts.append(expr[start:])
    return [p.strip() for p in parts]


def find_calls(text: str, names: list[str] | tuple[str, ...]) -> list[Call]:
    """Locate calls to any of ``names`` and extract their top-level arguments."""
    if not names:
        return []
    pattern = re.compile(r"(?<![\w$])(new\s+)?(?:[\w$]+\.)*(" + "|".join(map(re.escape, names)) + r")\s*\(")
    calls = []
    for m in pattern.finditer(text):
        if _inside_literal(text, m.start(2)):
            continue
        open_at = m.end() - 1
        close_at = _matching_paren(text, open_at)
        if close_at is None:
            continue
        inner = text[open_at + 1:close_at]
        args = _split_top_level(inner, ",") if inner.strip() else []
        calls.append(Call(m.group(2), m.start(2), args, bool(m.group(1))))
    return calls


def _matching_paren(text: str, open_at: int) -> int | None:
    depth, i = 0, open_at
    while i < len(text):
        c = text[i]
        if c in "\"'":
            i = _skip_literal(text, i)
            continue
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
            if depth == 0:
                return i
        i += 1
    return None


def _inside_literal(text: str, pos: int) -> bool:
    line_start = text.rfind("\n", 0, pos) + 1
    i = line_start
    while i < pos:
        if text[i] in "\"'":
            j = _skip_literal(text, i)
            if j > pos:
                return True
            i = j
            continue
        i += 1
    return False


def concat_operands(expr: str) -> list[str]:
    """Top-level operands of a ``+`` chain (a single operand if no concatenation)."""
    return [p for p in _split_top_level(expr, "+") if p]


def is_string_literal(expr: str) -> bool:
    expr = expr.strip()
    return len(expr) >= 2 and expr[0] == '"' and _skip_literal(expr, 0) == len(expr)


def string_literal_value(expr: str) -> str | None:
    if not is_string_literal(expr):
        return None
    body = expr.strip()[1:-1]
    return re.sub(r"\\(.)", r"\1", body)


def is_literal(expr: str) -> bool:
    expr = strip_parens(expr.strip())
    if is_string_literal(expr):
        return True
    if len(expr) >= 3 and expr[0] == "'" and _skip_literal(expr, 0) == len(expr):
        return True
    return bool(_NUMBER.match(expr)) or expr in ("true", "false", "null")


def is_identifier(expr: str) -> bool:
    return bool(_IDENT.match(expr.strip()))


def strip_parens(expr: str) -> str:
    expr = expr.strip()
    while expr.startswith("(") and _matching_paren(expr, 0) == len(expr) - 1:
        expr = expr[1:-1].strip()
    return expr


def resolve_int(expr: str, constants: dict[str, int]) -> int | None:
    """Evaluate ``|``-combined integer literals and known symbolic constants.

    Qualified names resolve by their last component, so ``Context.MODE_PRIVATE``
    and a decompiler's bare literal resolve to the same value.
    """
    total = 0
    for part in _split_top_level(strip_parens(expr), "|"):
        part = strip_parens(part)
        if _NUMBER.match(part) and "." not in part:
            digits = part.rstrip("lL").replace("_", "")
            total |= int(digits, 16) if digits[:2].lower() == "0x" else int(digits)
            continue
        name = part.rsplit(".", 1)[-1]
        if name not in constants:
            return None
        total |= constants[name]
    return total
