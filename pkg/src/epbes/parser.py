"""Concrete text syntax: tokenizer, recursive-descent parser and printer.

Grammar (``&&`` binds tighter than ``||``; quantifier scope extends as far
right as possible)::

    pbes     ::= equation+
    equation ::= ("mu" | "nu") IDENT "(" params? ")" "=" formula ";"
    params   ::= IDENT ":" sort ("," IDENT ":" sort)*
    formula  ::= "exists" IDENT ":" sort "." formula
               | "forall" IDENT ":" sort "." formula
               | formula "||" formula | formula "&&" formula
               | "!" formula | expr cmp expr | expr
    expr     ::= term (("+" | "-") term)*
    term     ::= atom (("*" atom) | ("mod" NUMBER))*
    atom     ::= NUMBER | "true" | "false" | IDENT | IDENT "(" args? ")"
               | "even" "(" expr ")" | "odd" "(" expr ")" | "(" formula ")"

Line comments start with ``%``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .pbes import (
    CMP_OPS, Add, And, Apply, BoolLit, Call, Cmp, Equation, Exists, Expr,
    Fixpoint, Forall, Mod, Monus, NatLit, Not, Or, Pbes, Scale, Signature,
    Sort, Var, even, odd,
)


class ParseError(ValueError):
    """Diagnostic for malformed or ill-sorted input.

    ``kind`` is one of ``syntax``, ``sort``, ``unbound``, ``arity``,
    ``duplicate``.
    """

    def __init__(self, kind, message, line=None, col=None):
        self.kind = kind
        self.line = line
        self.col = col
        where = f"line {line}, col {col}: " if line is not None else ""
        super().__init__(f"{where}{kind} error: {message}")


KEYWORDS = {"mu", "nu", "exists", "forall", "true", "false", "mod", "even", "odd"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>%[^\n]*)
  | (?P<num>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op>\|\||&&|!=|<=|>=|[=<>!+\-*(),:.;])
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str  # num, ident, kw, op, eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError("syntax", f"unexpected character {text[pos]!r}",
                             line, pos - line_start + 1)
        kind = m.lastgroup
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "num":
            tokens.append(Token("num", m.group(), line, col))
        elif kind == "ident":
            word = m.group()
            tokens.append(Token("kw" if word in KEYWORDS else "ident", word, line, col))
        elif kind == "op":
            tokens.append(Token("op", m.group(), line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# expression kinds tracked during parsing
NAT, BOOL, FORM = "N", "B", "F"


class _Parser:
    def __init__(self, text):
        self.toks = tokenize(text)
        self.i = 0
        self.headers = {}

    # -- token helpers -------------------------------------------------
    @property
    def tok(self):
        return self.toks[self.i]

    def at(self, text):
        t = self.tok
        return t.kind in ("op", "kw") and t.text == text

    def advance(self):
        t = self.tok
        self.i += 1
        return t

    def expect(self, text):
        if not self.at(text):
            self.fail("syntax", f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def expect_ident(self):
        if self.tok.kind != "ident":
            self.fail("syntax", f"expected identifier, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def fail(self, kind, msg, tok=None):
        tok = tok or self.tok
        raise ParseError(kind, msg, tok.line, tok.col)

    # -- structure -----------------------------------------------------
    def sort(self):
        t = self.expect_ident()
        if t.text == "N":
            return Sort.NAT
        if t.text == "B":
            return Sort.BOOL
        self.fail("sort", f"unknown sort {t.text!r}", t)

    def header(self):
        t = self.advance()
        if t.text not in ("mu", "nu"):
            self.fail("syntax", f"expected 'mu' or 'nu', found {t.text or 'end of input'!r}", t)
        sigma = Fixpoint(t.text)
        name_tok = self.expect_ident()
        self.expect("(")
        params = []
        if not self.at(")"):
            while True:
                p = self.expect_ident()
                self.expect(":")
                s = self.sort()
                if any(p.text == q for q, _ in params):
                    self.fail("duplicate", f"parameter {p.text!r} declared twice", p)
                params.append((p.text, s))
                if not self.at(","):
                    break
                self.advance()
        self.expect(")")
        self.expect("=")
        return sigma, name_tok, tuple(params)

    def scan_headers(self):
        if self.tok.kind == "eof":
            self.fail("syntax", "no equations")
        while self.tok.kind != "eof":
            sigma, name_tok, params = self.header()
            if name_tok.text in self.headers:
                self.fail("duplicate", f"equation {name_tok.text!r} defined twice", name_tok)
            self.headers[name_tok.text] = params
            while not self.at(";"):
                if self.tok.kind == "eof":
                    self.fail("syntax", "missing ';' at end of equation")
                self.advance()
            self.advance()
        self.i = 0

    def pbes(self):
        self.scan_headers()
        eqs = []
        while self.tok.kind != "eof":
            sigma, name_tok, params = self.header()
            scope = dict(params)
            body, kind = self.formula(scope)
            if kind == NAT:
                self.fail("sort", f"body of {name_tok.text} is not Boolean", name_tok)
            self.expect(";")
            eqs.append(Equation(sigma, name_tok.text, params, body))
        return Pbes(tuple(eqs))

    # -- formulas ------------------------------------------------------
    def formula(self, scope):
        return self.disjunction(scope)

    def disjunction(self, scope):
        start = self.tok
        e, k = self.conjunction(scope)
        if not self.at("||"):
            return e, k
        args, kinds = [e], [k]
        while self.at("||"):
            self.advance()
            e, k = self.conjunction(scope)
            args.append(e)
            kinds.append(k)
        return Or(tuple(args)), self._junction_kind(kinds, start)

    def conjunction(self, scope):
        start = self.tok
        e, k = self.negation(scope)
        if not self.at("&&"):
            return e, k
        args, kinds = [e], [k]
        while self.at("&&"):
            self.advance()
            e, k = self.negation(scope)
            args.append(e)
            kinds.append(k)
        return And(tuple(args)), self._junction_kind(kinds, start)

    def _junction_kind(self, kinds, tok):
        if NAT in kinds:
            self.fail("sort", "Boolean connective applied to a natural-number expression", tok)
        return FORM if FORM in kinds else BOOL

    def negation(self, scope):
        if self.at("exists") or self.at("forall"):
            return self.quantifier(scope)
        if self.at("!"):
            t = self.advance()
            e, k = self.negation(scope)
            if k != BOOL:
                self.fail("sort", "negation is only allowed on Boolean data expressions", t)
            return Not(e), BOOL
        return self.comparison(scope)

    def quantifier(self, scope):
        q = self.advance()
        v = self.expect_ident()
        self.expect(":")
        s = self.sort()
        self.expect(".")
        body, k = self.formula({**scope, v.text: s})
        if k == NAT:
            self.fail("sort", "quantifier body is not Boolean", q)
        node = Exists if q.text == "exists" else Forall
        return node(v.text, s, body), FORM

    def comparison(self, scope):
        left, lk = self.additive(scope)
        if self.tok.kind == "op" and self.tok.text in CMP_OPS:
            op_tok = self.advance()
            right, rk = self.additive(scope)
            if op_tok.text in ("=", "!=") and lk == rk and lk in (NAT, BOOL):
                return Cmp(op_tok.text, left, right), BOOL
            if lk == NAT and rk == NAT:
                return Cmp(op_tok.text, left, right), BOOL
            self.fail("sort", f"ill-sorted operands of {op_tok.text!r}", op_tok)
        return left, lk

    def additive(self, scope):
        left, lk = self.term(scope)
        while self.at("+") or self.at("-"):
            op_tok = self.advance()
            right, rk = self.term(scope)
            if lk != NAT or rk != NAT:
                self.fail("sort", f"operands of {op_tok.text!r} must be natural numbers", op_tok)
            left = Add(left, right) if op_tok.text == "+" else Monus(left, right)
        return left, lk

    def term(self, scope):
        left, lk = self.atom(scope)
        while self.at("*") or self.at("mod"):
            op_tok = self.advance()
            if op_tok.text == "mod":
                if self.tok.kind != "num":
                    self.fail("syntax", "'mod' requires a constant modulus")
                k = int(self.advance().text)
                if lk != NAT:
                    self.fail("sort", "operand of 'mod' must be a natural number", op_tok)
                if k == 0:
                    self.fail("sort", "modulus must be positive", op_tok)
                left = Mod(left, k)
                continue
            right, rk = self.atom(scope)
            if lk != NAT or rk != NAT:
                self.fail("sort", "operands of '*' must be natural numbers", op_tok)
            left = _scale(left, right)
            if left is None:
                self.fail("sort", "multiplication requires a constant factor", op_tok)
        return left, lk

    def atom(self, scope):
        t = self.tok
        if t.kind == "num":
            self.advance()
            return NatLit(int(t.text)), NAT
        if self.at("true") or self.at("false"):
            self.advance()
            return BoolLit(t.text == "true"), BOOL
        if self.at("even") or self.at("odd"):
            self.advance()
            self.expect("(")
            e, k = self.formula(scope)
            self.expect(")")
            if k != NAT:
                self.fail("sort", f"argument of {t.text} must be a natural number", t)
            return (even(e) if t.text == "even" else odd(e)), BOOL
        if self.at("("):
            self.advance()
            e, k = self.formula(scope)
            self.expect(")")
            return e, k
        if t.kind == "ident":
            self.advance()
            if self.at("("):
                return self.call(t, scope)
            if t.text not in scope:
                self.fail("unbound", f"unbound data variable {t.text!r}", t)
            return Var(t.text), (NAT if scope[t.text] is Sort.NAT else BOOL)
        self.fail("syntax", f"unexpected {t.text or 'end of input'!r}")

    def call(self, name_tok, scope):
        self.expect("(")
        args = []
        kinds = []
        if not self.at(")"):
            while True:
                arg_tok = self.tok
                e, k = self.formula(scope)
                if k == FORM:
                    self.fail("sort", "predicate formula used as a call argument", arg_tok)
                args.append(e)
                kinds.append((k, arg_tok))
                if not self.at(","):
                    break
                self.advance()
        self.expect(")")
        if name_tok.text not in self.headers:
            self.fail("unbound", f"unbound predicate variable {name_tok.text!r}", name_tok)
        params = self.headers[name_tok.text]
        if len(params) != len(args):
            self.fail("arity", f"{name_tok.text} expects {len(params)} arguments, got {len(args)}",
                      name_tok)
        for (pname, psort), (k, arg_tok) in zip(params, kinds):
            if k != psort.value:
                self.fail("sort", f"argument for {pname} of {name_tok.text} must have sort {psort}",
                          arg_tok)
        return Call(name_tok.text, tuple(args)), FORM


def _scale(left, right):
    c = _const(left)
    if c is not None:
        return Scale(c, right)
    c = _const(right)
    if c is not None:
        return Scale(c, left)
    return None


def _const(e):
    if isinstance(e, NatLit):
        return e.value
    if isinstance(e, Scale):
        inner = _const(e.arg)
        return None if inner is None else e.factor * inner
    if isinstance(e, Add):
        a, b = _const(e.left), _const(e.right)
        return None if a is None or b is None else a + b
    return None


def parse_pbes(text: str) -> Pbes:
    """Parse, sort-check and close-check a PBES given in text form."""
    return _Parser(text).pbes()


def parse_query(text: str, pbes: Pbes | None = None) -> Signature:
    """Parse ``X(v1, ..., vn)``; values are naturals or ``true``/``false``."""
    toks = tokenize(text)
    i = 0

    def fail(msg):
        t = toks[i]
        raise ParseError("syntax", msg, t.line, t.col)

    if toks[i].kind != "ident":
        fail("query must start with a predicate variable")
    name = toks[i].text
    i += 1
    if not (toks[i].kind == "op" and toks[i].text == "("):
        fail("expected '('")
    i += 1
    values = []
    if not (toks[i].kind == "op" and toks[i].text == ")"):
        while True:
            t = toks[i]
            if t.kind == "num":
                values.append(int(t.text))
            elif t.kind == "kw" and t.text in ("true", "false"):
                values.append(t.text == "true")
            else:
                fail("expected a value")
            i += 1
            if toks[i].kind == "op" and toks[i].text == ",":
                i += 1
                continue
            break
    if not (toks[i].kind == "op" and toks[i].text == ")"):
        fail("expected ')'")
    i += 1
    if toks[i].kind != "eof":
        fail("trailing input after query")
    sig = Signature(name, tuple(values))
    if pbes is not None:
        check_signature(pbes, sig)
    return sig


def check_signature(pbes, sig: Signature) -> None:
    try:
        idx = pbes.index(sig.name)
    except KeyError:
        raise ParseError("unbound", f"unknown predicate variable {sig.name!r}") from None
    params = pbes.equations[idx].params
    if len(params) != len(sig.values):
        raise ParseError("arity", f"{sig.name} expects {len(params)} values, got {len(sig.values)}")
    for (pname, psort), v in zip(params, sig.values):
        if not psort.contains(v):
            raise ParseError("sort", f"value {v!r} for {pname} is not of sort {psort}")


# -- printing ------------------------------------------------------------

# precedence levels, higher binds tighter
_P_QUANT, _P_OR, _P_AND, _P_NOT, _P_CMP, _P_ADD, _P_MUL, _P_ATOM = range(8)


def _prec(e):
    if isinstance(e, (Exists, Forall)):
        return _P_QUANT
    if isinstance(e, Or):
        return _P_OR
    if isinstance(e, And):
        return _P_AND
    if isinstance(e, Not):
        return _P_NOT
    if isinstance(e, Cmp):
        return _P_ATOM if _parity_test(e) else _P_CMP
    if isinstance(e, (Add, Monus)):
        return _P_ADD
    if isinstance(e, (Scale, Mod)):
        return _P_MUL
    return _P_ATOM


def _parity_test(e):
    if (isinstance(e, Cmp) and e.op == "=" and isinstance(e.left, Mod) and e.left.modulus == 2
            and isinstance(e.right, NatLit) and e.right.value in (0, 1)):
        return "even" if e.right.value == 0 else "odd"
    return None


def format_expr(e: Expr) -> str:
    return _fmt(e, _P_QUANT)


def _wrap(s, cond):
    return f"({s})" if cond else s


def _fmt(e, ctx):
    p = _prec(e)
    if isinstance(e, NatLit):
        return str(e.value)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, (Exists, Forall)):
        q = "exists" if isinstance(e, Exists) else "forall"
        return _wrap(f"{q} {e.var}:{e.sort} . {_fmt(e.body, _P_QUANT)}", ctx > _P_QUANT)
    if isinstance(e, (And, Or)):
        op = " && " if isinstance(e, And) else " || "
        # nested same-operator junctions keep their grouping
        s = op.join(_fmt(a, p + 1) for a in e.args)
        return _wrap(s, ctx > p or (ctx == p and ctx in (_P_AND, _P_OR)))
    if isinstance(e, Not):
        return _wrap(f"!{_fmt(e.arg, _P_NOT)}", ctx > _P_NOT)
    if isinstance(e, Cmp):
        kind = _parity_test(e)
        if kind:
            return f"{kind}({_fmt(e.left.arg, _P_QUANT)})"
        s = f"{_fmt(e.left, _P_ADD)} {e.op} {_fmt(e.right, _P_ADD)}"
        return _wrap(s, ctx >= _P_CMP)
    if isinstance(e, (Add, Monus)):
        op = "+" if isinstance(e, Add) else "-"
        s = f"{_fmt(e.left, _P_ADD)} {op} {_fmt(e.right, _P_MUL)}"
        return _wrap(s, ctx > _P_ADD)
    if isinstance(e, Scale):
        return _wrap(f"{e.factor}*{_fmt(e.arg, _P_ATOM)}", ctx > _P_MUL)
    if isinstance(e, Mod):
        return _wrap(f"{_fmt(e.arg, _P_MUL)} mod {e.modulus}", ctx > _P_MUL)
    if isinstance(e, Call):
        return f"{e.name}({', '.join(_fmt(a, _P_QUANT) for a in e.args)})"
    if isinstance(e, Apply):
        args = ", ".join(_fmt(a, _P_QUANT) for a in e.args)
        return f"{e.target.label}({args})"
    raise TypeError(f"cannot print {e!r}")


def format_params(params) -> str:
    return ", ".join(f"{n}:{s}" for n, s in params)


def print_pbes(p: Pbes) -> str:
    lines = []
    for eq in p.equations:
        lines.append(f"{eq.sigma} {eq.name}({format_params(eq.params)}) = {format_expr(eq.body)};")
    return "\n".join(lines) + "\n"
