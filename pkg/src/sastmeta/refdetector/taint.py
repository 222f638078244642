"""String-concatenation taint for SQL sinks, intra-procedural and flow-insensitive.

A variable becomes tainted once its initializer or any later assignment
concatenates a non-literal operand (a parameter, a field, a call result or an
already tainted variable).  Locals holding only literal text stay clean, so
``q += " WHERE 1"`` on a clean ``q`` is not a finding.  Taint never clears
within a method.
"""

from __future__ import annotations

import re

from sastmeta.normalizer import Location, RawFinding
from sastmeta.refdetector import javasrc

# SUPER's SQL-injection rule, applied line by line.
SUPER_SQL_REGEX = re.compile(r'(?:rawQuery|execSQL)\(.*"\s*\+\s*.*\)')

_ASSIGN = re.compile(
    r"^(?:(?:final|static|private|protected|public)\s+)*"
    r"(?P<decl>[\w$.<>\[\],?]+(?:\s*<[^=]*>)?\s+)?"
    r"(?P<var>[A-Za-z_$][\w$]*)\s*(?P<op>\+?=)(?!=)\s*(?P<rhs>.+)$",
    re.DOTALL,
)
_KEYWORDS = {"return", "throw", "new", "else", "case"}


class _Scope:
    def __init__(self):
        self.tainted: set[str] = set()
        self.clean_locals: set[str] = set()

    def operand_dirty(self, operand: str) -> bool:
        operand = javasrc.strip_parens(operand)
        if javasrc.is_literal(operand):
            return False
        if javasrc.is_identifier(operand):
            return operand not in self.clean_locals or operand in self.tainted
        inner = javasrc.concat_operands(operand)
        if len(inner) > 1:
            return any(self.operand_dirty(p) for p in inner)
        return True

    def expr_tainted(self, expr: str) -> bool:
        """True if ``expr`` is a tainted variable or a concatenation with a dirty operand."""
        expr = javasrc.strip_parens(expr)
        if javasrc.is_identifier(expr):
            return expr in self.tainted
        operands = javasrc.concat_operands(expr)
        return len(operands) > 1 and any(self.operand_dirty(p) for p in operands)

    def assign(self, var: str, op: str, rhs: str, declared: bool) -> None:
        if op == "+=":
            dirty = var in self.tainted or any(self.operand_dirty(p) for p in javasrc.concat_operands(rhs))
        else:
            dirty = self.expr_tainted(rhs)
        if dirty:
            self.tainted.add(var)
        elif declared and javasrc.is_literal(rhs) or declared and all(
            javasrc.is_literal(p) or p in self.clean_locals for p in javasrc.concat_operands(rhs)
        ):
            self.clean_locals.add(var)


_METHOD_HEAD = re.compile(
    r"^(?!(?:if|for|while|switch|catch|try|synchronized|else|do|return|new|throw)\b)"
    r"[\w$<>\[\],.?@\s]*?\b[A-Za-z_$][\w$]*\s*\([^)]*\)\s*(?:throws\s+[\w$.,\s]+)?$",
    re.DOTALL,
)


def _method_scopes(statements: list[javasrc.Statement]):
    """Yield (scope_key, statement); each method body gets its own key, code outside methods key 0."""
    scope = 0
    method_depth = None
    for st in statements:
        if method_depth is not None and st.depth <= method_depth:
            method_depth = None
        if method_depth is None and st.terminator == "{" and _METHOD_HEAD.match(st.text):
            scope += 1
            method_depth = st.depth
            yield scope, st
            continue
        yield (scope if method_depth is not None else 0), st


def concat_taint(
    source_unit: str,
    sinks: list[str] | tuple[str, ...] = ("rawQuery", "execSQL"),
    *,
    mode: str = "taint",
    file: str = "",
    rule_id: str = "SQL_CONCAT",
    tool_id: str = "refdetector",
) -> list[RawFinding]:
    """Findings for sink calls whose argument carries concatenated non-literal text.

    ``mode="regex"`` instead runs SUPER's single-line regex, for differential
    comparison against the taint pass.
    """
    if not sinks:
        raise ValueError("at least one sink is required")
    text = javasrc.strip_comments(source_unit)
    if mode == "regex":
        return [
            RawFinding(tool_id, rule_id, Location(file, n), "SQL built by concatenation (regex)")
            for n, line in enumerate(text.splitlines(), 1)
            if SUPER_SQL_REGEX.search(line)
        ]
    if mode != "taint":
        raise ValueError(f"unknown mode {mode!r}")

    lines = javasrc.LineIndex(text)
    scopes: dict[int, _Scope] = {}
    findings = []
    for key, st in _method_scopes(javasrc.iter_statements(text)):
        scope = scopes.setdefault(key, _Scope())
        for call in javasrc.find_calls(st.text, sinks):
            if call.args and scope.expr_tainted(call.args[0]):
                arg = javasrc.strip_parens(call.args[0])
                what = f"variable '{arg}'" if javasrc.is_identifier(arg) else "inline concatenation"
                findings.append(
                    RawFinding(
                        tool_id,
                        rule_id,
                        Location(file, lines.line_of(st.offset + call.offset)),
                        f"{call.name} receives {what} built from non-literal input",
                    )
                )
        m = _ASSIGN.match(st.text) if st.terminator == ";" else None
        if m and m.group("var") not in _KEYWORDS:
            decl = (m.group("decl") or "").strip()
            declared = bool(decl) and decl not in _KEYWORDS
            scope.assign(m.group("var"), m.group("op"), m.group("rhs"), declared)
    return findings
