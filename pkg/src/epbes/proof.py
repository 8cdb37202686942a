"""Proof graphs: extraction from a winning strategy and validation.

A concrete proof graph annotates each signature with the clause it satisfies
and the witness chosen for the clause's quantified variables, so the local
condition is a ground evaluation.  The global condition asks that along every
infinite path the least rank seen infinitely often is even.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import networkx as nx

from .game import CIRCLE, ParityGame, ReducedGame, edge_unsound
from .pbes import BoolLit, NatLit, Signature, Var, conj, eval_data, substitute
from .refinement import block_of
from .sets import SetExpr, ref, witness


class InternalInconsistency(RuntimeError):
    """A strategy edge has no concrete witness; the game is not edge-sound."""


class NotWinning(ValueError):
    """The queried signature is not in circle's winning region."""


@dataclass(frozen=True)
class Ok:
    def __bool__(self):
        return True

    def __str__(self):
        return "ok"


@dataclass(frozen=True)
class Violation:
    kind: str
    location: object
    detail: str = ""

    def __bool__(self):
        return False

    def __str__(self):
        loc = self.location
        text = f"violation of {self.kind} at {loc}"
        return f"{text}: {self.detail}" if self.detail else text


@dataclass
class ConcreteProofGraph:
    root: Signature
    annotation: dict = field(default_factory=dict)  # Signature -> (clause k, witness tuple)
    edges: dict = field(default_factory=dict)  # Signature -> [Signature]
    frontier: list = field(default_factory=list)

    @property
    def vertices(self):
        return list(self.edges)

    @property
    def closed(self):
        return not self.frontier

    def remove_edge(self, v, w):
        self.edges[v] = [x for x in self.edges[v] if x != w]


def _lit(v):
    return BoolLit(v) if isinstance(v, bool) else NatLit(v)


def call_targets(cp, sig, k, w):
    """The signatures called by clause ``k`` of ``sig`` under witness ``w``."""
    i = cp.index(sig.name)
    eq = cp.equations[i]
    c = eq.clauses[k]
    env = dict(zip(eq.param_names, sig.values))
    env.update(zip(c.var_names, w))
    return [Signature(cp.names[a], tuple(eval_data(x, env) for x in args)) for a, args in c.calls]


def choose_witness(cp, game, and_vertex, sig, session):
    """A witness placing ``sig`` and its clause pair inside the chosen and-block."""
    psi = game.blocks[and_vertex]
    i, k = psi.eq, psi.clause
    c = cp.clause(i, k)
    env = {x: _lit(v) for x, v in zip(cp.equations[i].param_names, sig.values)}
    point = tuple(env[x] for x in cp.equations[i].param_names) + tuple(Var(x) for x in c.var_names)
    body = conj(ref(psi.shape, point), substitute(c.constraint, env))
    return witness(SetExpr(c.variables, body), session)


def extract_concrete(game: ReducedGame, strategy, sig: Signature, budget, session) -> ConcreteProofGraph:
    """Unroll circle's strategy breadth-first from ``sig``.

    Expands at most ``budget`` signatures; whatever is left unexpanded is
    listed in ``frontier`` (an empty frontier means a closed proof graph).
    """
    cp = game.cp
    start = block_of(game.family, cp, sig, session).id
    if strategy.winner.get(start) != CIRCLE:
        raise NotWinning(f"{sig} is not won by circle")
    pg = ConcreteProofGraph(sig)
    todo = deque([sig])
    queued = {sig}
    while todo:
        if len(pg.edges) >= budget:
            pg.frontier = list(todo)
            break
        v = todo.popleft()
        blk = block_of(game.family, cp, v, session).id
        if strategy.winner.get(blk) != CIRCLE or blk not in strategy.circle:
            raise InternalInconsistency(f"{v} reached block {blk} outside circle's strategy")
        psi = strategy.circle[blk]
        w = choose_witness(cp, game, psi, v, session)
        if w is None:
            raise InternalInconsistency(f"no witness for {v} in and-block {psi}")
        k = game.blocks[psi].clause
        succ = call_targets(cp, v, k, w)
        pg.annotation[v] = (k, w)
        pg.edges[v] = list(dict.fromkeys(succ))
        for x in pg.edges[v]:
            if x not in queued:
                queued.add(x)
                todo.append(x)
    for v in pg.frontier:
        pg.edges.setdefault(v, [])
    return pg


def _to_digraph(vertices, edges):
    g = nx.DiGraph()
    g.add_nodes_from(vertices)
    for v in vertices:
        for w in edges.get(v, ()):
            if w in g:
                g.add_edge(v, w)
    return g


def bad_cycle(vertices, edges, weight, odd_is_bad_at, keep):
    """A vertex on a cycle that violates the parity condition, or None.

    For each bad value ``q`` (``odd_is_bad_at``), looks for a cycle through a
    vertex of weight ``q`` inside the subgraph of vertices passing ``keep(q)``.
    """
    for q in sorted(odd_is_bad_at):
        sub = [v for v in vertices if keep(weight[v], q)]
        g = _to_digraph(sub, edges)
        for comp in nx.strongly_connected_components(g):
            hit = [v for v in comp if weight[v] == q]
            if not hit:
                continue
            if len(comp) > 1 or any(g.has_edge(v, v) for v in hit):
                return sorted(hit, key=str)[0], q
    return None


def validate_concrete(pg: ConcreteProofGraph, cp):
    """Check both proof-graph conditions on a finite, annotated graph.

    The cycle condition is checked first because it depends on the graph
    alone; the local condition then checks each annotation.
    """
    if pg.frontier:
        return Violation("finiteness", pg.frontier[0], "graph has unexpanded vertices")
    vertices = list(pg.edges)
    rank = {}
    for v in vertices:
        try:
            rank[v] = cp.rank(v.name)
        except KeyError:
            return Violation("condition 1", v, f"unknown predicate {v.name}")
    odd = {r for r in rank.values() if r % 2}
    hit = bad_cycle(vertices, pg.edges, rank, odd, lambda r, q: r >= q)
    if hit:
        return Violation("condition 2", hit[0], f"cycle with least rank {hit[1]}")
    for v in vertices:
        if v not in pg.annotation:
            return Violation("condition 1", v, "no clause annotation")
        k, w = pg.annotation[v]
        eq = cp.equations[cp.index(v.name)]
        if not 0 <= k < len(eq.clauses):
            return Violation("condition 1", v, f"clause {k} does not exist")
        c = eq.clauses[k]
        if len(w) != len(c.variables) or len(v.values) != len(eq.params):
            return Violation("condition 1", v, "witness or value arity mismatch")
        if not all(s.contains(x) for (_, s), x in zip(c.variables + eq.params, tuple(w) + v.values)):
            return Violation("condition 1", v, "witness or value of the wrong sort")
        env = dict(zip(eq.param_names, v.values))
        env.update(zip(c.var_names, w))
        if eval_data(c.constraint, env) is not True:
            return Violation("condition 1", v, "clause constraint is false")
        post = set(pg.edges[v])
        for t in call_targets(cp, v, k, w):
            if t not in post:
                return Violation("condition 1", v, f"call {t} is not in the postset")
        for t in post:
            if t not in pg.edges:
                return Violation("condition 1", v, f"successor {t} is not a vertex")
    return Ok()


# -- reduced strategy graphs ----------------------------------------------------

def strategy_graph(game: ParityGame, strategy, root=None, region=None) -> ParityGame:
    """Circle's winning region with circle vertices keeping only the chosen edge.

    ``region`` overrides the vertex set; ``root`` restricts to what it reaches.
    """
    keep = set(region) if region is not None else strategy.region(CIRCLE)
    edges = {}
    for v in keep:
        if game.owner[v] == CIRCLE:
            w = strategy.circle.get(v)
            edges[v] = [] if w is None else [w]
        else:
            edges[v] = list(game.successors(v))
    if root is not None:
        seen, todo = {root}, deque([root])
        while todo:
            v = todo.popleft()
            for w in edges.get(v, ()):
                if w in keep and w not in seen:
                    seen.add(w)
                    todo.append(w)
        keep = seen
        edges = {v: ws for v, ws in edges.items() if v in keep}
    owner = {v: game.owner[v] for v in keep}
    priority = {v: game.priority[v] for v in keep}
    if isinstance(game, ReducedGame):
        return ReducedGame(owner, priority, edges,
                           {v: game.blocks[v] for v in keep}, game.cp, game.family)
    return ParityGame(owner, priority, edges)


def validate_reduced_strategy(rsg: ParityGame, session=None, samples=10):
    """Closure, one edge per circle vertex, even cycles, and (given a session)
    edge soundness of every remaining edge.
    """
    for v in sorted(rsg.owner, key=str):
        succ = rsg.successors(v)
        for w in succ:
            if w not in rsg.owner:
                return Violation("closure", v, f"edge to {w} leaves the graph")
        if rsg.owner[v] == CIRCLE and len(succ) != 1:
            return Violation("strategy", v, f"circle vertex has {len(succ)} edges")
    odd = {p for p in rsg.priority.values() if p % 2}
    hit = bad_cycle(list(rsg.owner), rsg.edges, rsg.priority, odd, lambda p, q: p <= q)
    if hit:
        return Violation("parity", hit[0], f"cycle with greatest priority {hit[1]}")
    if session is not None and isinstance(rsg, ReducedGame):
        for v in sorted(rsg.edges):
            for w in rsg.edges[v]:
                u = edge_unsound(rsg, v, w, session, samples)
                if u is not None:
                    return Violation("edge soundness", (v, w), f"member {u} has no successor")
    return Ok()

