"""Recursive-descent parser for the probabilistic logic surface syntax.

Accepted clauses::

    0.7435::entity("person_0", "person", 360, 171, 480, 386).
    target(ID) :- entity(ID, "person", _, _, _, _), X1 < 200.
    query(target(ID)).

``%`` starts a comment that runs to the end of the line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ProbabilityRange, ProgramSyntaxError, UnsupportedConstruct
from .terms import (
    INT64_MAX,
    INT64_MIN,
    Atom,
    BodyLiteral,
    Comparison,
    Int,
    ProbFact,
    Program,
    Rule,
    Str,
    Sym,
    Term,
    Var,
)

_TOKEN_SPEC = [
    ("WS", r"[ \t\r\n]+"),
    ("COMMENT", r"%[^\n]*"),
    ("NUMBER", r"-?\d+(?:\.\d+)?"),
    ("STRING", r'"(?:[^"\\\n]|\\.)*"'),
    ("UNSUPPORTED", r"\\\+|->|;|!(?!=)"),
    ("CMP", r"<=|>=|=<|==|!=|\\==|\\=|=|<|>"),
    ("IMPLIES", r":-"),
    ("PROB", r"::"),
    ("VARIABLE", r"[A-Z_][A-Za-z0-9_]*"),
    ("IDENT", r"[a-z][A-Za-z0-9_]*"),
    ("LPAREN", r"\("),
    ("RPAREN", r"\)"),
    ("COMMA", r","),
    ("DOT", r"\."),
    ("ARITH", r"[-+*/]"),
    ("MISMATCH", r"."),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{name}>{pattern})" for name, pattern in _TOKEN_SPEC))

# Aliases accepted on input; output always uses the canonical spelling.
_CMP_ALIASES = {"=<": "<=", "\\==": "!=", "\\=": "!=", "=": "=="}
_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}


@dataclass(frozen=True, slots=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(source: str) -> list[Token]:
    tokens = []
    line, line_start = 1, 0
    for m in _TOKEN_RE.finditer(source):
        kind, text = m.lastgroup, m.group()
        column = m.start() - line_start + 1
        if kind == "MISMATCH":
            if text == '"':
                raise ProgramSyntaxError("unterminated string", line, column)
            raise ProgramSyntaxError(f"unexpected character {text!r}", line, column)
        if kind == "UNSUPPORTED":
            raise UnsupportedConstruct(text, line, column)
        if kind not in ("WS", "COMMENT"):
            tokens.append(Token(kind, text, line, column))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + text.rindex("\n") + 1
    tokens.append(Token("EOF", "", line, len(source) - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = tokenize(source)
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tok
        self.pos += 1
        return tok

    def error(self, message: str, tok: Token | None = None) -> ProgramSyntaxError:
        tok = tok or self.tok
        return ProgramSyntaxError(message, tok.line, tok.column)

    def expect(self, kind: str, what: str) -> Token:
        if self.tok.kind != kind:
            found = self.tok.text or "end of input"
            raise self.error(f"expected {what}, found {found!r}")
        return self.advance()

    def program(self) -> Program:
        facts: list[ProbFact] = []
        rules: list[Rule] = []
        queries: list[Atom] = []
        order: list[tuple[str, int]] = []
        while self.tok.kind != "EOF":
            start = self.tok
            if start.kind == "NUMBER" and self.peek().kind == "PROB":
                facts.append(self.probfact())
                order.append(("fact", len(facts) - 1))
            elif start.kind == "IDENT" and start.text == "query" and self.peek().kind == "LPAREN":
                queries.append(self.query())
                order.append(("query", len(queries) - 1))
            else:
                rules.append(self.rule())
                order.append(("rule", len(rules) - 1))
        return Program(tuple(facts), tuple(rules), tuple(queries), tuple(order))

    def probfact(self) -> ProbFact:
        tok = self.advance()
        value = float(tok.text)
        if not 0.0 <= value <= 1.0:
            raise ProbabilityRange(value, tok.line, tok.column)
        self.advance()  # '::'
        atom = self.atom()
        if self.tok.kind == "IMPLIES":
            raise self.error("probabilistic rules are not supported")
        self.expect("DOT", "'.' after fact")
        return ProbFact(value, atom)

    def query(self) -> Atom:
        self.advance()
        self.expect("LPAREN", "'('")
        atom = self.atom()
        self.expect("RPAREN", "')' closing query")
        self.expect("DOT", "'.' after query")
        return atom

    def rule(self) -> Rule:
        head = self.atom()
        if self.tok.kind == "DOT":
            raise self.error("facts need a probability label (use 1.0:: for certain facts)")
        self.expect("IMPLIES", "':-'")
        body = [self.literal()]
        while self.tok.kind == "COMMA":
            self.advance()
            body.append(self.literal())
        self.expect("DOT", "'.' ending rule")
        return Rule(head, tuple(body))

    def literal(self) -> BodyLiteral:
        tok = self.tok
        if tok.kind == "IDENT" and tok.text == "not" and self.peek().kind == "LPAREN":
            raise UnsupportedConstruct("not", tok.line, tok.column)
        if tok.kind == "IDENT" and self.peek().kind != "CMP":
            if self.peek().kind == "IDENT" and self.peek().text == "is":
                nxt = self.peek()
                raise UnsupportedConstruct("is", nxt.line, nxt.column)
            return self.atom()
        left = self.term()
        if self.tok.kind == "IDENT" and self.tok.text == "is":
            raise UnsupportedConstruct("is", self.tok.line, self.tok.column)
        op_tok = self.expect("CMP", "comparison operator")
        right = self.term()
        return Comparison(left, _CMP_ALIASES.get(op_tok.text, op_tok.text), right)

    def atom(self) -> Atom:
        name = self.expect("IDENT", "predicate name")
        if self.tok.kind != "LPAREN":
            return Atom(name.text, ())
        self.advance()
        args = [self.term()]
        while self.tok.kind == "COMMA":
            self.advance()
            args.append(self.term())
        self.expect("RPAREN", "')'")
        return Atom(name.text, tuple(args))

    def term(self) -> Term:
        tok = self.tok
        if tok.kind == "VARIABLE":
            self.advance()
            return Var(tok.text)
        if tok.kind == "IDENT":
            if self.peek().kind == "LPAREN":
                raise self.error("compound terms are not supported")
            self.advance()
            return Sym(tok.text)
        if tok.kind == "STRING":
            self.advance()
            return Str(_unescape(tok))
        if tok.kind == "NUMBER":
            if "." in tok.text:
                raise self.error("real numbers are only allowed as fact probabilities")
            value = int(tok.text)
            if not INT64_MIN <= value <= INT64_MAX:
                raise self.error("integer does not fit in 64 bits")
            self.advance()
            return Int(value)
        raise self.error(f"expected a term, found {tok.text or 'end of input'!r}")


def _unescape(tok: Token) -> str:
    body = tok.text[1:-1]
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            nxt = body[i + 1]
            if nxt not in _ESCAPES:
                raise ProgramSyntaxError(f"unknown escape \\{nxt}", tok.line, tok.column + i + 1)
            out.append(_ESCAPES[nxt])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def parse_program(source: str) -> Program:
    return _Parser(source).program()


def parse_rule(source: str) -> Rule:
    """Parse text that must contain exactly one rule and nothing else."""
    program = parse_program(source)
    if len(program.rules) != 1 or program.facts or program.queries:
        raise ProgramSyntaxError("expected exactly one rule", 1, 1)
    return program.rules[0]
