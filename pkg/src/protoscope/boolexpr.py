"""Boolean expressions over identifiers: AND / OR / NOT and parentheses.

Precedence is NOT > AND > OR; keywords are case-insensitive. Expressions are
parsed once into a small tree of tuples::

    ("var", name) | ("not", e) | ("and", e1, e2, ...) | ("or", e1, e2, ...)
"""

from __future__ import annotations

import re
from functools import lru_cache
from typing import Mapping, Set, Tuple

_TOKEN = re.compile(r"\s*(?:(\()|(\))|([A-Za-z_][A-Za-z0-9_\-.]*))")
_KEYWORDS = {"and", "or", "not"}


class ExpressionError(ValueError):
    """Syntax error in a boolean expression."""


class EvaluationError(KeyError):
    """An identifier in the expression has no truth value."""


def _tokenize(text: str) -> list:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ExpressionError(f"unexpected character at offset {pos}: {text[pos:pos + 10]!r}")
        if m.group(1):
            tokens.append(("(", "("))
        elif m.group(2):
            tokens.append((")", ")"))
        else:
            word = m.group(3)
            low = word.lower()
            tokens.append((low, low) if low in _KEYWORDS else ("id", word))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i][0] if self.i < len(self.tokens) else None

    def take(self, kind):
        if self.peek() != kind:
            raise ExpressionError(f"expected {kind!r} at token {self.i} in {self.text!r}")
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def parse(self):
        if not self.tokens:
            raise ExpressionError("empty expression")
        node = self.or_expr()
        if self.i != len(self.tokens):
            raise ExpressionError(f"trailing tokens after offset {self.i} in {self.text!r}")
        return node

    def or_expr(self):
        parts = [self.and_expr()]
        while self.peek() == "or":
            self.i += 1
            parts.append(self.and_expr())
        return parts[0] if len(parts) == 1 else ("or", *parts)

    def and_expr(self):
        parts = [self.not_expr()]
        while self.peek() == "and":
            self.i += 1
            parts.append(self.not_expr())
        return parts[0] if len(parts) == 1 else ("and", *parts)

    def not_expr(self):
        if self.peek() == "not":
            self.i += 1
            return ("not", self.not_expr())
        return self.atom()

    def atom(self):
        kind = self.peek()
        if kind == "(":
            self.i += 1
            node = self.or_expr()
            self.take(")")
            return node
        if kind == "id":
            return ("var", self.take("id")[1])
        raise ExpressionError(f"expected identifier or '(' at token {self.i} in {self.text!r}")


@lru_cache(maxsize=1024)
def parse(text: str) -> Tuple:
    return _Parser(text).parse()


def identifiers(text: str) -> Set[str]:
    out: Set[str] = set()

    def walk(n):
        if n[0] == "var":
            out.add(n[1])
        else:
            for c in n[1:]:
                walk(c)

    walk(parse(text))
    return out


def _eval(node, truth: Mapping[str, bool]) -> bool:
    op = node[0]
    if op == "var":
        try:
            return bool(truth[node[1]])
        except KeyError:
            raise EvaluationError(f"unbound identifier {node[1]!r}") from None
    if op == "not":
        return not _eval(node[1], truth)
    if op == "and":
        return all(_eval(c, truth) for c in node[1:])
    return any(_eval(c, truth) for c in node[1:])


def eval_boolean(expr: str, truth: Mapping[str, bool]) -> bool:
    """Evaluate ``expr`` under ``truth``.

    Every identifier must be bound, even ones a short-circuit would skip.
    """
    missing = identifiers(expr) - set(truth)
    if missing:
        raise EvaluationError(f"unbound identifier(s): {', '.join(sorted(missing))}")
    return _eval(parse(expr), truth)
