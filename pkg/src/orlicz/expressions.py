"""Tiny arithmetic expression language for config-supplied fields.

Grammar (infix, ^ right associative, usual precedence):

    expr   := term  {("+" | "-") term}
    term   := factor {("*" | "/") factor}
    factor := ("+" | "-") factor | power
    power  := atom ["^" factor]
    atom   := NUMBER | NAME | NAME "(" expr {"," expr} ")" | "(" expr ")"

Names: coordinates x, y (aliases x1, x2), constants pi and e, functions
abs(a), min(a, b, ...), max(a, b, ...).  There are no conditionals;
min/max cover the piecewise-continuous data the problems need.  Parsing
never evaluates Python code.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

_CONSTANTS = {"pi": np.pi, "e": np.e}
_VARIABLES = {"x": 0, "x1": 0, "y": 1, "x2": 1}
_FUNCTIONS = {"abs": (1, 1), "min": (2, None), "max": (2, None)}


def _tokenize(text):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "+-*/^(),":
            tokens.append((c, c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE" and j + 1 < n and (
                    text[j + 1].isdigit() or text[j + 1] in "+-"):
                j += 2
                while j < n and text[j].isdigit():
                    j += 1
            try:
                value = float(text[i:j])
            except ValueError:
                raise ConfigError(f"bad number {text[i:j]!r}",
                                  location=f"column {i + 1}")
            tokens.append(("num", value, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("name", text[i:j], i))
            i = j
            continue
        raise ConfigError(f"unexpected character {c!r}",
                          location=f"column {i + 1}")
    tokens.append(("end", None, n))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0
        self.names = set()

    def peek(self):
        return self.tokens[self.pos]

    def take(self, kind=None):
        tok = self.tokens[self.pos]
        if kind is not None and tok[0] != kind:
            raise ConfigError(
                f"expected {kind!r}, found {tok[1]!r}" if tok[0] != "end"
                else f"unexpected end of expression",
                location=f"column {tok[2] + 1}")
        self.pos += 1
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ConfigError(f"trailing input starting at {tok[1]!r}",
                              location=f"column {tok[2] + 1}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] in "+-":
            op = self.take()[0]
            rhs = self.term()
            node = ("add" if op == "+" else "sub", node, rhs)
        return node

    def term(self):
        node = self.factor()
        while self.peek()[0] in "*/":
            op = self.take()[0]
            rhs = self.factor()
            node = ("mul" if op == "*" else "div", node, rhs)
        return node

    def factor(self):
        tok = self.peek()
        if tok[0] in "+-":
            self.take()
            inner = self.factor()
            return inner if tok[0] == "+" else ("neg", inner)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "^":
            self.take()
            return ("pow", base, self.factor())
        return base

    def atom(self):
        tok = self.take()
        if tok[0] == "num":
            return ("const", tok[1])
        if tok[0] == "(":
            node = self.expr()
            self.take(")")
            return node
        if tok[0] == "name":
            name = tok[1]
            if self.peek()[0] == "(":
                if name not in _FUNCTIONS:
                    raise ConfigError(f"unknown function {name!r}",
                                      location=f"column {tok[2] + 1}")
                self.take("(")
                args = [self.expr()]
                while self.peek()[0] == ",":
                    self.take(",")
                    args.append(self.expr())
                self.take(")")
                lo, hi = _FUNCTIONS[name]
                if len(args) < lo or (hi is not None and len(args) > hi):
                    raise ConfigError(
                        f"{name} takes {'exactly ' + str(lo) if hi == lo else 'at least ' + str(lo)} argument(s), got {len(args)}",
                        location=f"column {tok[2] + 1}")
                return ("call", name, args)
            if name in _CONSTANTS:
                return ("const", _CONSTANTS[name])
            if name in _VARIABLES:
                self.names.add(name)
                return ("var", _VARIABLES[name])
            raise ConfigError(f"unknown name {name!r}",
                              location=f"column {tok[2] + 1}")
        raise ConfigError(
            "unexpected end of expression" if tok[0] == "end"
            else f"unexpected token {tok[1]!r}",
            location=f"column {tok[2] + 1}")


def _eval(node, pts):
    kind = node[0]
    if kind == "const":
        return node[1]
    if kind == "var":
        return pts[..., node[1]]
    if kind == "neg":
        return -_eval(node[1], pts)
    if kind == "add":
        return _eval(node[1], pts) + _eval(node[2], pts)
    if kind == "sub":
        return _eval(node[1], pts) - _eval(node[2], pts)
    if kind == "mul":
        return _eval(node[1], pts) * _eval(node[2], pts)
    if kind == "div":
        return _eval(node[1], pts) / _eval(node[2], pts)
    if kind == "pow":
        return _eval(node[1], pts) ** _eval(node[2], pts)
    if kind == "call":
        args = [_eval(a, pts) for a in node[2]]
        if node[1] == "abs":
            return np.abs(args[0])
        fn = np.minimum if node[1] == "min" else np.maximum
        out = args[0]
        for a in args[1:]:
            out = fn(out, a)
        return out
    raise AssertionError(kind)


class Expression:
    """A parsed scalar expression over lattice coordinates."""

    def __init__(self, text, ast, names):
        self.text = text
        self.ast = ast
        self.names = names

    @property
    def dimension_needed(self):
        return max((_VARIABLES[n] + 1 for n in self.names), default=0)

    def compile(self, n):
        """Closure points(..., n) -> values, checking coordinate usage."""
        if self.dimension_needed > n:
            bad = sorted(v for v in self.names if _VARIABLES[v] + 1 > n)
            raise ConfigError(
                f"expression uses {', '.join(bad)} but the domain is {n}-dimensional",
                location=self.text)
        ast = self.ast

        def fn(pts):
            pts = np.asarray(pts, float)
            with np.errstate(divide="ignore", invalid="ignore"):
                out = _eval(ast, pts)
            return np.broadcast_to(np.asarray(out, float), pts.shape[:-1]).copy()

        return fn

    def __call__(self, pts):
        pts = np.asarray(pts, float)
        return self.compile(pts.shape[-1])(pts)


def parse_expression(text):
    """Parse the config expression language; ConfigError on bad input."""
    if not text or not text.strip():
        raise ConfigError("empty expression", location="column 1")
    parser = _Parser(text)
    ast = parser.parse()
    return Expression(text, ast, parser.names)
