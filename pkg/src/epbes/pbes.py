"""Abstract syntax for parameterised Boolean equation systems.

Expressions are immutable trees of frozen dataclasses.  Data expressions
(arithmetic and Boolean terms without predicate calls or quantifiers) and
predicate formulas share one node hierarchy; ``is_data`` tells them apart.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Iterator, Mapping, Union


class Sort(enum.Enum):
    NAT = "N"
    BOOL = "B"

    def __str__(self):
        return self.value

    def contains(self, value) -> bool:
        if self is Sort.BOOL:
            return isinstance(value, bool)
        return isinstance(value, int) and not isinstance(value, bool) and value >= 0


class Fixpoint(enum.Enum):
    MU = "mu"
    NU = "nu"

    def __str__(self):
        return self.value


class Expr:
    """Base class of every expression node."""

    __slots__ = ()


@dataclass(frozen=True)
class NatLit(Expr):
    value: int


@dataclass(frozen=True)
class BoolLit(Expr):
    value: bool


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Monus(Expr):
    """Natural subtraction, truncated at zero."""

    left: Expr
    right: Expr


@dataclass(frozen=True)
class Scale(Expr):
    factor: int
    arg: Expr


@dataclass(frozen=True)
class Mod(Expr):
    arg: Expr
    modulus: int


@dataclass(frozen=True)
class Cmp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Not(Expr):
    arg: Expr


@dataclass(frozen=True)
class And(Expr):
    args: tuple


@dataclass(frozen=True)
class Or(Expr):
    args: tuple


@dataclass(frozen=True)
class Exists(Expr):
    var: str
    sort: Sort
    body: Expr


@dataclass(frozen=True)
class Forall(Expr):
    var: str
    sort: Sort
    body: Expr


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: tuple


@dataclass(frozen=True)
class Apply(Expr):
    """Membership of ``args`` in a named lambda-bound set.

    ``target`` is a :class:`epbes.sets.SetExpr`; it compares by identity so
    that deep set definitions are never walked for equality or hashing.
    """

    target: object
    args: tuple


CMP_OPS = ("=", "!=", "<", "<=", ">", ">=")

TRUE = BoolLit(True)
FALSE = BoolLit(False)


def conj(*args: Expr) -> Expr:
    """Flattening conjunction with unit/zero folding."""
    out = []
    for a in args:
        if isinstance(a, And):
            out.extend(a.args)
        elif a == TRUE:
            continue
        elif a == FALSE:
            return FALSE
        else:
            out.append(a)
    if not out:
        return TRUE
    if len(out) == 1:
        return out[0]
    return And(tuple(out))


def disj(*args: Expr) -> Expr:
    out = []
    for a in args:
        if isinstance(a, Or):
            out.extend(a.args)
        elif a == FALSE:
            continue
        elif a == TRUE:
            return TRUE
        else:
            out.append(a)
    if not out:
        return FALSE
    if len(out) == 1:
        return out[0]
    return Or(tuple(out))


def neg(a: Expr) -> Expr:
    if isinstance(a, BoolLit):
        return BoolLit(not a.value)
    if isinstance(a, Not):
        return a.arg
    return Not(a)


def even(e: Expr) -> Expr:
    return Cmp("=", Mod(e, 2), NatLit(0))


def odd(e: Expr) -> Expr:
    return Cmp("=", Mod(e, 2), NatLit(1))


def children(e: Expr) -> tuple:
    if isinstance(e, (Add, Monus)):
        return (e.left, e.right)
    if isinstance(e, Cmp):
        return (e.left, e.right)
    if isinstance(e, (Scale, Mod, Not)):
        return (e.arg,)
    if isinstance(e, (And, Or)):
        return e.args
    if isinstance(e, (Exists, Forall)):
        return (e.body,)
    if isinstance(e, (Call, Apply)):
        return e.args
    return ()


def walk(e: Expr) -> Iterator[Expr]:
    """Pre-order traversal; does not descend into Apply targets."""
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def is_data(e: Expr) -> bool:
    """True for call-free, quantifier-free expressions."""
    return not any(isinstance(n, (Call, Exists, Forall)) for n in walk(e))


def free_vars(e: Expr) -> set:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, (Exists, Forall)):
        return free_vars(e.body) - {e.var}
    out = set()
    for c in children(e):
        out |= free_vars(c)
    return out


def calls(e: Expr) -> list:
    return [n for n in walk(e) if isinstance(n, Call)]


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Capture-avoiding substitution of data variables."""
    if not mapping:
        return e
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, (NatLit, BoolLit)):
        return e
    if isinstance(e, (Exists, Forall)):
        inner = {k: v for k, v in mapping.items() if k != e.var}
        if not inner:
            return e
        clash = set()
        for v in inner.values():
            clash |= free_vars(v)
        var, body = e.var, e.body
        if var in clash:
            taken = clash | free_vars(body) | set(inner)
            fresh = fresh_name(var, taken)
            body = substitute(body, {var: Var(fresh)})
            var = fresh
        return type(e)(var, e.sort, substitute(body, inner))
    if isinstance(e, (Add, Monus)):
        return type(e)(substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Cmp):
        return Cmp(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Scale):
        return Scale(e.factor, substitute(e.arg, mapping))
    if isinstance(e, Mod):
        return Mod(substitute(e.arg, mapping), e.modulus)
    if isinstance(e, Not):
        return Not(substitute(e.arg, mapping))
    if isinstance(e, (And, Or)):
        return type(e)(tuple(substitute(a, mapping) for a in e.args))
    if isinstance(e, Call):
        return Call(e.name, tuple(substitute(a, mapping) for a in e.args))
    if isinstance(e, Apply):
        return Apply(e.target, tuple(substitute(a, mapping) for a in e.args))
    raise TypeError(f"unknown expression node {e!r}")


def fresh_name(base: str, taken) -> str:
    stem = base.rstrip("0123456789") or base
    for n in itertools.count(1):
        cand = f"{stem}{n}"
        if cand not in taken:
            return cand


class UnboundVariable(KeyError):
    pass


class UnboundedQuantifier(ValueError):
    """Raised when ground evaluation meets an unbounded existential."""


Value = Union[int, bool]


def eval_data(e: Expr, env: Mapping[str, Value], exists_bound: int | None = None) -> Value:
    """Evaluate ``e`` under the environment ``env``.

    Existentials are only evaluated when ``exists_bound`` is given; they then
    range over ``0..exists_bound`` (Nat) or both truth values (Bool).
    """
    if isinstance(e, NatLit):
        return e.value
    if isinstance(e, BoolLit):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariable(e.name) from None
    if isinstance(e, Add):
        return eval_data(e.left, env, exists_bound) + eval_data(e.right, env, exists_bound)
    if isinstance(e, Monus):
        return max(0, eval_data(e.left, env, exists_bound) - eval_data(e.right, env, exists_bound))
    if isinstance(e, Scale):
        return e.factor * eval_data(e.arg, env, exists_bound)
    if isinstance(e, Mod):
        return eval_data(e.arg, env, exists_bound) % e.modulus
    if isinstance(e, Cmp):
        a = eval_data(e.left, env, exists_bound)
        b = eval_data(e.right, env, exists_bound)
        return _CMP[e.op](a, b)
    if isinstance(e, Not):
        return not eval_data(e.arg, env, exists_bound)
    if isinstance(e, And):
        return all(eval_data(a, env, exists_bound) for a in e.args)
    if isinstance(e, Or):
        return any(eval_data(a, env, exists_bound) for a in e.args)
    if isinstance(e, (Exists, Forall)):
        if exists_bound is None:
            raise UnboundedQuantifier(f"cannot evaluate quantifier over {e.var} without a bound")
        dom = (False, True) if e.sort is Sort.BOOL else range(exists_bound + 1)
        test = any if isinstance(e, Exists) else all
        return test(eval_data(e.body, {**env, e.var: v}, exists_bound) for v in dom)
    if isinstance(e, Apply):
        vals = [eval_data(a, env, exists_bound) for a in e.args]
        target = e.target
        inner = dict(zip(target.names, vals))
        return eval_data(target.body, inner, exists_bound)
    if isinstance(e, Call):
        raise TypeError(f"predicate call {e.name} is not a data expression")
    raise TypeError(f"unknown expression node {e!r}")


_CMP = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


@dataclass(frozen=True)
class Equation:
    sigma: Fixpoint
    name: str
    params: tuple  # ((name, Sort), ...)
    body: Expr

    @property
    def param_names(self):
        return tuple(n for n, _ in self.params)

    @property
    def param_sorts(self):
        return tuple(s for _, s in self.params)


class UnknownVariable(KeyError):
    pass


def alternation_ranks(sigmas) -> list:
    """Rank of each binder: alternations in the prefix ``nu s_1 ... s_i``."""
    ranks = []
    prev, r = Fixpoint.NU, 0
    for s in sigmas:
        if s is not prev:
            r += 1
            prev = s
        ranks.append(r)
    return ranks


@dataclass(frozen=True)
class Pbes:
    equations: tuple

    @property
    def names(self):
        return tuple(eq.name for eq in self.equations)

    def index(self, name: str) -> int:
        for i, eq in enumerate(self.equations):
            if eq.name == name:
                return i
        raise UnknownVariable(name)

    def rank(self, name: str) -> int:
        return alternation_ranks(eq.sigma for eq in self.equations)[self.index(name)]

    def ranks(self) -> list:
        return alternation_ranks(eq.sigma for eq in self.equations)


@dataclass(frozen=True)
class Signature:
    """A ground atom ``X(v1, ..., vn)``."""

    name: str
    values: tuple

    def __str__(self):
        return f"{self.name}({', '.join(format_value(v) for v in self.values)})"


def format_value(v: Value) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)
