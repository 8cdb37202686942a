"""Existential normal form: every equation as a disjunction of clauses

    exists e. phi(d, e) && X_a1(f_1(d, e)) && ... && X_ap(f_p(d, e))

obtained by renaming bound variables apart, lifting existentials to the
front, and distributing the quantifier-free matrix into disjunctive normal
form.
"""
from __future__ import annotations

from dataclasses import dataclass

from .parser import format_expr, format_params
from .pbes import (
    FALSE, TRUE, And, Call, Equation, Exists, Expr, Forall, Or, Pbes, UnknownVariable, Var,
    alternation_ranks, conj, fresh_name, free_vars, is_data, substitute,
)

MAX_CLAUSES = 10_000


class UniversalNotAllowed(ValueError):
    """A universal quantifier occurs in a predicate formula."""


class DnfTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class Clause:
    variables: tuple  # ((name, Sort), ...) quantified by exists
    constraint: Expr
    calls: tuple  # ((target equation index, (arg, ...)), ...)

    @property
    def var_names(self):
        return tuple(n for n, _ in self.variables)


@dataclass(frozen=True)
class ClauseEquation:
    sigma: object
    name: str
    params: tuple
    clauses: tuple

    @property
    def param_names(self):
        return tuple(n for n, _ in self.params)


@dataclass(frozen=True)
class ClausePbes:
    equations: tuple

    @property
    def names(self):
        return tuple(eq.name for eq in self.equations)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownVariable(name) from None

    def ranks(self):
        return alternation_ranks(eq.sigma for eq in self.equations)

    def rank(self, name):
        return self.ranks()[self.index(name)]

    def clause(self, i, k) -> Clause:
        return self.equations[i].clauses[k]

    def clause_ids(self):
        for i, eq in enumerate(self.equations):
            for k in range(len(eq.clauses)):
                yield i, k

    def to_pbes(self) -> Pbes:
        eqs = []
        for eq in self.equations:
            body = _disj([clause_formula(c, self.names) for c in eq.clauses])
            eqs.append(Equation(eq.sigma, eq.name, eq.params, body))
        return Pbes(tuple(eqs))


def _disj(args):
    if not args:
        return FALSE
    return args[0] if len(args) == 1 else Or(tuple(args))


def clause_formula(c: Clause, names) -> Expr:
    parts = [] if c.constraint == TRUE and c.calls else [c.constraint]
    if isinstance(c.constraint, And):
        parts = list(c.constraint.args)
    parts += [Call(names[a], args) for a, args in c.calls]
    body = parts[0] if len(parts) == 1 else And(tuple(parts))
    for n, s in reversed(c.variables):
        body = Exists(n, s, body)
    return body


def rename_apart(f: Expr, reserved=()) -> Expr:
    """Give every binder a distinct name, distinct from free variables."""
    taken = set(reserved) | free_vars(f)

    def go(e, env):
        if isinstance(e, Var):
            return env.get(e.name, e)
        if isinstance(e, (Exists, Forall)):
            name = e.var
            if name in taken:
                name = fresh_name(name, taken)
            taken.add(name)
            inner = {**env, e.var: Var(name)}
            return type(e)(name, e.sort, go(e.body, inner))
        if isinstance(e, (And, Or)):
            return type(e)(tuple(go(a, env) for a in e.args))
        if isinstance(e, Call):
            return Call(e.name, tuple(go(a, env) for a in e.args))
        if not env:
            return e
        return substitute(e, env)

    return go(f, {})


def lift_existentials(f: Expr):
    """Return (binders, matrix) with ``exists binders. matrix`` equivalent to ``f``.

    Expects binders already renamed apart.
    """
    binders = []

    def go(e):
        if isinstance(e, Forall):
            raise UniversalNotAllowed(f"universal quantifier over {e.var} is not allowed")
        if isinstance(e, Exists):
            binders.append((e.var, e.sort))
            return go(e.body)
        if isinstance(e, (And, Or)):
            return type(e)(tuple(go(a) for a in e.args))
        return e

    matrix = go(f)
    return tuple(binders), matrix


def dnf_split(matrix: Expr, limit: int = MAX_CLAUSES) -> list:
    """Split a quantifier-free matrix into (constraint, calls) cores."""
    disjuncts = _dnf(matrix, limit)
    cores = []
    for lits in disjuncts:
        data = [x for x in lits if not isinstance(x, Call)]
        calls = tuple(x for x in lits if isinstance(x, Call))
        cores.append((conj(*data) if data else TRUE, calls))
    return cores


def _dnf(e, limit):
    # list of conjunctions, each a list of literals
    if isinstance(e, Or):
        out = []
        for a in e.args:
            out.extend(_dnf(a, limit))
            if len(out) > limit:
                raise DnfTooLarge(f"disjunctive normal form exceeds {limit} clauses")
        return out
    if isinstance(e, And):
        out = [[]]
        for a in e.args:
            part = _dnf(a, limit)
            if len(out) * len(part) > limit:
                raise DnfTooLarge(f"disjunctive normal form exceeds {limit} clauses")
            out = [x + y for x in out for y in part]
        return out
    if isinstance(e, (Exists, Forall)):
        raise ValueError("dnf_split expects a quantifier-free matrix")
    return [[e]]


def to_clause_form(p: Pbes, limit: int = MAX_CLAUSES) -> ClausePbes:
    names = p.names
    eqs = []
    for eq in p.equations:
        body = rename_apart(eq.body, reserved=eq.param_names)
        binders, matrix = lift_existentials(body)
        clauses = []
        for constraint, call_list in dnf_split(matrix, limit):
            call_tuple = tuple((names.index(c.name), c.args) for c in call_list)
            used = free_vars(constraint)
            for _, args in call_tuple:
                for a in args:
                    used |= free_vars(a)
            variables = tuple(b for b in binders if b[0] in used)
            clauses.append(Clause(variables, constraint, call_tuple))
        eqs.append(ClauseEquation(eq.sigma, eq.name, eq.params, tuple(clauses)))
    return ClausePbes(tuple(eqs))


def check_clause(c: Clause, params) -> None:
    """Assert the syntactic clause invariants."""
    assert is_data(c.constraint), "constraint contains a call or quantifier"
    scope = {n for n, _ in params} | set(c.var_names)
    assert free_vars(c.constraint) <= scope
    for _, args in c.calls:
        for a in args:
            assert is_data(a) and free_vars(a) <= scope


def format_clause_pbes(cp: ClausePbes) -> str:
    """Surface syntax with one clause per line."""
    lines = []
    names = cp.names
    for eq in cp.equations:
        head = f"{eq.sigma} {eq.name}({format_params(eq.params)}) ="
        if not eq.clauses:
            lines.append(f"{head} false;")
            continue
        lines.append(head)
        for k, c in enumerate(eq.clauses):
            sep = "   " if k == 0 else "|| "
            text = format_expr(clause_formula(c, names))
            if isinstance(clause_formula(c, names), Or):
                text = f"({text})"
            end = ";" if k == len(eq.clauses) - 1 else ""
            lines.append(f"    {sep}{_paren_quant(text, len(eq.clauses))}{end}")
    return "\n".join(lines) + "\n"


def _paren_quant(text, n):
    # an unparenthesised quantifier would swallow the following clauses
    if n > 1 and (text.startswith("exists ") or text.startswith("forall ")):
        return f"({text})"
    return text
