"""Lambda-bound Boolean expressions read as (possibly infinite) sets.

A :class:`SetExpr` over binders ``d`` denotes ``{v | body[d := v]}``; over
``d, e`` it denotes a set of pairs.  Emptiness and membership are decided by
an SMT solver session.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

from .pbes import (
    TRUE, FALSE, Apply, BoolLit, Cmp, Exists, Expr, NatLit, Sort, Var, conj, disj, free_vars,
    neg, walk,
)
from .smt import (
    ELIMINATE_TACTIC, FALLBACK_TACTIC, SolverSession, SolverUnknown, UNKNOWN, Untranslatable, from_smt,
)

log = logging.getLogger(__name__)

_uids = itertools.count()


class SignatureMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SetExpr:
    """``binders[:primary]`` is the tuple d, the rest (if any) is e.

    Compares by identity; use :func:`equivalent` for denotational equality.
    """

    binders: tuple
    body: Expr
    primary: int | None = None
    name: str | None = None
    uid: int = field(default_factory=lambda: next(_uids))

    def __post_init__(self):
        if self.primary is None:
            object.__setattr__(self, "primary", len(self.binders))
        extra = free_vars(self.body) - set(self.names)
        if extra:
            raise ValueError(f"set body has free variables {sorted(extra)}")

    @property
    def names(self):
        return tuple(n for n, _ in self.binders)

    @property
    def sorts(self):
        return tuple(s for _, s in self.binders)

    @property
    def label(self):
        return self.name or f"S{self.uid}"

    @property
    def vars(self):
        return tuple(Var(n) for n in self.names)

    def named(self, name):
        return SetExpr(self.binders, self.body, self.primary, name)

    def __repr__(self):
        from .parser import format_expr, format_params
        return f"SetExpr(\\{format_params(self.binders)}. {format_expr(self.body)})"


def full(binders, primary=None) -> SetExpr:
    return SetExpr(tuple(binders), TRUE, primary)


def empty(binders, primary=None) -> SetExpr:
    return SetExpr(tuple(binders), FALSE, primary)


def _same(a: SetExpr, b: SetExpr):
    if a.binders != b.binders:
        raise SignatureMismatch(f"{a.binders} vs {b.binders}")


def meet(a: SetExpr, b: SetExpr) -> SetExpr:
    _same(a, b)
    return SetExpr(a.binders, conj(a.body, b.body), a.primary)


def complement(a: SetExpr) -> SetExpr:
    return SetExpr(a.binders, neg(a.body), a.primary)


def difference(a: SetExpr, b: SetExpr) -> SetExpr:
    return meet(a, complement(b))


def ref(a: SetExpr, args=None) -> Expr:
    """Membership test of ``args`` (default: a's own binders) in ``a``."""
    if args is None:
        args = a.vars
    return Apply(a, tuple(args))


def is_empty(a: SetExpr, session: SolverSession) -> bool:
    if isinstance(a.body, BoolLit):
        return not a.body.value
    res = session.check(a.body, a.binders)
    if res.status == UNKNOWN:
        raise SolverUnknown("solver returned unknown on an emptiness check", res.script)
    return res.unsat


def contains(a: SetExpr, point, session: SolverSession) -> bool:
    point = tuple(point)
    if len(point) != len(a.binders):
        raise SignatureMismatch(f"point {point} does not match {a.binders}")
    for (n, s), v in zip(a.binders, point):
        if not s.contains(v):
            raise SignatureMismatch(f"value {v!r} for {n} is not of sort {s}")
    body = Apply(a, tuple(_lit(v) for v in point))
    res = session.check(body, ())
    if res.status == UNKNOWN:
        raise SolverUnknown("solver returned unknown on a membership check", res.script)
    return res.sat


def witness(a: SetExpr, session: SolverSession):
    """A member of ``a`` as a value tuple, or None when ``a`` is empty."""
    res = session.check(a.body, a.binders, want=a.names)
    if res.status == UNKNOWN:
        raise SolverUnknown("solver returned unknown on a witness query", res.script)
    if res.unsat:
        return None
    return tuple(res.model[n] for n in a.names)


def _lit(v):
    return BoolLit(v) if isinstance(v, bool) else NatLit(v)


def exists_project(a: SetExpr) -> SetExpr:
    """Project a pair set onto its primary tuple."""
    body = a.body
    for n, s in reversed(a.binders[a.primary:]):
        if n in free_vars(body):
            body = Exists(n, s, body)
    return SetExpr(a.binders[:a.primary], body)


def substitute_into(target: SetExpr, args, binders, primary=None) -> SetExpr:
    """Inverse image of ``target`` under the map ``binders -> args``."""
    args = tuple(args)
    binders = tuple(binders)
    if len(args) != len(target.binders):
        raise SignatureMismatch(f"{len(args)} arguments for {len(target.binders)} binders")
    if isinstance(target.body, BoolLit):
        return SetExpr(binders, target.body, primary)
    if binders == target.binders and args == target.vars:
        return SetExpr(binders, target.body, primary)
    return SetExpr(binders, Apply(target, args), primary)


def subset(a: SetExpr, b: SetExpr, session: SolverSession) -> bool:
    return is_empty(difference(a, b), session)


def equivalent(a: SetExpr, b: SetExpr, session: SolverSession) -> bool:
    return subset(a, b, session) and subset(b, a, session)


def lam(binders, body, primary=None) -> SetExpr:
    """Build a set from ``[(name, Sort), ...]`` and a body expression."""
    binders = tuple((n, s if isinstance(s, Sort) else Sort(s)) for n, s in binders)
    return SetExpr(binders, body, primary)


SIMPLIFY_LIMIT = 400  # expression nodes; larger results keep the original body


def simplify(a: SetExpr, session: SolverSession) -> SetExpr:
    """An equivalent set with a quantifier-free body over plain arithmetic.

    Each candidate is checked against ``a`` before it is used, since solver
    quantifier elimination is not always sound on modular arithmetic. Falls
    back to ``a`` itself when no candidate is readable, small and equivalent.
    """
    if isinstance(a.body, BoolLit):
        return a
    for tactic in (ELIMINATE_TACTIC, FALLBACK_TACTIC):
        b = _eliminated(a, session, tactic)
        if b is None:
            continue
        try:
            if equivalent(a, b, session):
                return b
        except SolverUnknown:
            pass
        log.debug("discarding an unconfirmed quantifier elimination result")
    return a


def _eliminated(a, session, tactic):
    goals = session.eliminate(a.body, a.binders, tactic)
    if goals is None:
        return None
    sorts = dict(a.binders)
    nat_facts = {Cmp(">=", Var(n), NatLit(0)) for n, s in a.binders if s is Sort.NAT}
    try:
        alts = []
        for g in goals:
            parts = [from_smt(t, sorts) for t in g]
            alts.append(conj(*(p for p in parts if p not in nat_facts)))
    except Untranslatable:
        return None
    body = disj(*alts)
    if sum(1 for _ in walk(body)) > SIMPLIFY_LIMIT:
        return None
    return SetExpr(a.binders, body, a.primary, a.name)
