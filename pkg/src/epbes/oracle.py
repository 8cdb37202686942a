"""Bounded explicit instantiation of the dependency space.

Exploration enumerates witnesses up to a cap and stops expanding signatures
whose values exceed another cap.  The resulting game is solved as a plain
Boolean equation system by nested fixpoint iteration, which keeps this
module independent of the parity game solver it is used to check.
"""
from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .game import BOX, CIRCLE, ParityGame, priorities
from .pbes import Signature, Sort, eval_data

log = logging.getLogger(__name__)

VALUE_CAP, WITNESS_CAP, VERTEX_CAP = 256, 64, 100_000
DEAD = ("dead",)


class ExplicitVerdict(Enum):
    TRUE = "true"
    FALSE = "false"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Bounds:
    value_cap: int = VALUE_CAP
    witness_cap: int = WITNESS_CAP
    vertex_cap: int = VERTEX_CAP

    def __post_init__(self):
        for name in ("value_cap", "witness_cap", "vertex_cap"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class AndVertex:
    eq: int
    clause: int
    values: tuple
    witness: tuple


@dataclass
class ExplicitGame:
    cp: object
    root: Signature
    bounds: Bounds
    or_edges: dict = field(default_factory=dict)  # Signature -> [AndVertex]
    and_edges: dict = field(default_factory=dict)  # AndVertex -> [Signature or DEAD]
    frontier: set = field(default_factory=set)  # stuck because of a cap
    cap_hit: bool = False

    @property
    def closed(self):
        return not self.frontier and not self.cap_hit

    def size(self):
        return len(self.or_edges) + len(self.and_edges)

    def to_parity_game(self) -> ParityGame:
        prio = priorities(self.cp)
        owner, priority, edges = {}, {}, {}
        for v, succ in self.or_edges.items():
            owner[v], priority[v], edges[v] = CIRCLE, prio[self.cp.index(v.name)], list(succ)
        for a, succ in self.and_edges.items():
            owner[a], priority[a], edges[a] = BOX, 0, list(succ)
            if DEAD in succ:
                owner[DEAD], priority[DEAD], edges[DEAD] = CIRCLE, 1, []
        return ParityGame(owner, priority, edges)


def witness_tuples(variables, cap):
    """All witness tuples with components at most ``cap``: by largest component, then lexicographic."""
    domains = [(False, True) if s is Sort.BOOL else range(cap + 1) for _, s in variables]
    return sorted(itertools.product(*domains),
                  key=lambda t: (max((int(x) for x in t), default=0), tuple(int(x) for x in t)))


def _over(values, sorts, cap):
    return any(s is Sort.NAT and v > cap for v, s in zip(values, sorts))


def explore(cp, sig: Signature, bounds: Bounds | None = None) -> ExplicitGame:
    bounds = bounds or Bounds()
    g = ExplicitGame(cp, sig, bounds)
    witnesses = {}
    todo = deque([sig])
    seen = {sig}
    while todo:
        v = todo.popleft()
        i = cp.index(v.name)
        eq = cp.equations[i]
        if g.size() >= bounds.vertex_cap:
            g.cap_hit = True
            g.frontier.add(v)
            g.or_edges[v] = []
            g.frontier.update(todo)
            for rest in todo:
                g.or_edges[rest] = []
            break
        if _over(v.values, [s for _, s in eq.params], bounds.value_cap):
            g.frontier.add(v)
            g.or_edges[v] = []
            continue
        env0 = dict(zip(eq.param_names, v.values))
        succ = []
        for k, c in enumerate(eq.clauses):
            key = (i, k)
            if key not in witnesses:
                witnesses[key] = witness_tuples(c.variables, bounds.witness_cap)
            for w in witnesses[key]:
                env = dict(env0)
                env.update(zip(c.var_names, w))
                if eval_data(c.constraint, env) is not True:
                    continue
                a = AndVertex(i, k, v.values, w)
                succ.append(a)
                if a in g.and_edges:
                    continue
                if g.size() >= bounds.vertex_cap:
                    g.cap_hit = True
                    g.and_edges[a] = [DEAD]
                    continue
                targets = []
                for t, args in c.calls:
                    x = Signature(cp.names[t], tuple(eval_data(e, env) for e in args))
                    targets.append(x)
                    if x not in seen:
                        seen.add(x)
                        todo.append(x)
                g.and_edges[a] = list(dict.fromkeys(targets))
        g.or_edges[v] = list(dict.fromkeys(succ))
    log.info("explored %d or-vertices, %d and-vertices, closed=%s",
             len(g.or_edges), len(g.and_edges), g.closed)
    return g


def solve_bes(or_edges, and_edges, rank) -> dict:
    """Solve ``X = OR_a AND_{Y in a} Y`` with fixpoints nested by rank.

    ``rank[X]`` even means greatest fixpoint; smaller ranks are outermost.
    Unlisted successors (such as ``DEAD``) are false.
    """
    levels = sorted(set(rank.values()))
    by_level = {r: [x for x in or_edges if rank[x] == r] for r in levels}

    def rhs(x, val):
        return any(all(val.get(y, False) for y in and_edges[a]) for a in or_edges[x])

    def solve(depth, val):
        if depth == len(levels):
            return {}
        r = levels[depth]
        xs = by_level[r]
        cur = {x: r % 2 == 0 for x in xs}
        while True:
            inner = solve(depth + 1, {**val, **cur})
            env = {**val, **cur, **inner}
            new = {x: rhs(x, env) for x in xs}
            if new == cur:
                return {**cur, **inner}
            cur = new

    return solve(0, {})


def solve_explicit(g: ExplicitGame) -> ExplicitVerdict:
    """True is sound even on partial games; False needs a closed game."""
    rank = {x: g.cp.rank(x.name) for x in g.or_edges}
    val = solve_bes(g.or_edges, g.and_edges, rank)
    if val[g.root]:
        return ExplicitVerdict.TRUE
    return ExplicitVerdict.FALSE if g.closed else ExplicitVerdict.UNKNOWN
