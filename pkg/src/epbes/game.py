"""Reduced dependency spaces read as parity games, and a parity game solver.

Circle (player 0) owns or-blocks and wins a play when the largest priority
seen infinitely often is even; box (player 1) owns and-blocks.  A player who
cannot move loses.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

from .pbes import Cmp, NatLit, BoolLit, Var, Not, conj, disj
from .refinement import AND, OR, Block, and_binders, block_of, or_binders, splitter_g
from .sets import SetExpr, is_empty, meet, ref, witness, exists_project

log = logging.getLogger(__name__)

CIRCLE, BOX = 0, 1
PLAYER_NAMES = {CIRCLE: "circle", BOX: "box"}


@dataclass
class ParityGame:
    """Finite game graph. ``edges`` maps every vertex to its successor list."""

    owner: dict
    priority: dict
    edges: dict

    @property
    def vertices(self):
        return list(self.owner)

    def successors(self, v):
        return self.edges.get(v, [])

    def predecessors(self):
        pred = {v: [] for v in self.owner}
        for v, ws in self.edges.items():
            for w in ws:
                pred[w].append(v)
        return pred

    def check(self):
        for v, ws in self.edges.items():
            if v not in self.owner or any(w not in self.owner for w in ws):
                raise ValueError(f"edge from {v} leaves the vertex set")
        for v, p in self.priority.items():
            if p < 0:
                raise ValueError(f"negative priority on {v}")


@dataclass
class Strategy:
    winner: dict  # vertex -> player
    circle: dict = field(default_factory=dict)  # circle vertex -> successor
    box: dict = field(default_factory=dict)

    def region(self, player):
        return {v for v, p in self.winner.items() if p == player}

    def choice(self, player):
        return self.circle if player == CIRCLE else self.box


# -- solver ----------------------------------------------------------------

def attractor(game, pred, domain, target, player):
    """Vertices of ``domain`` from which ``player`` forces a visit to ``target``.

    Returns (region, strategy) where the strategy covers the player's own
    vertices added outside ``target``.
    """
    region = set(target)
    strat = {}
    count = {}
    for v in domain:
        if v not in region:
            count[v] = sum(1 for w in game.successors(v) if w in domain)
    todo = deque(region)
    while todo:
        w = todo.popleft()
        for v in pred[w]:
            if v not in domain or v in region:
                continue
            if game.owner[v] == player:
                region.add(v)
                strat[v] = w
                todo.append(v)
            else:
                count[v] -= 1
                if count[v] == 0:
                    region.add(v)
                    todo.append(v)
    return region, strat


def _zielonka(game, pred, domain):
    if not domain:
        return [set(), set()], [{}, {}]
    p = max(game.priority[v] for v in domain)
    i = p % 2
    top = {v for v in domain if game.priority[v] == p}
    a, a_strat = attractor(game, pred, domain, top, i)
    wins, strats = _zielonka(game, pred, domain - a)
    if not wins[1 - i]:
        wins = [None, None]
        wins[i], wins[1 - i] = set(domain), set()
        strat_i = dict(strats[i])
        strat_i.update(a_strat)
        for v in top:
            if game.owner[v] == i:
                strat_i[v] = next(w for w in game.successors(v) if w in domain)
        out = [None, None]
        out[i], out[1 - i] = strat_i, {}
        return wins, out
    b, b_strat = attractor(game, pred, domain, wins[1 - i], 1 - i)
    wins2, strats2 = _zielonka(game, pred, domain - b)
    out_w = [None, None]
    out_s = [None, None]
    out_w[i] = wins2[i]
    out_s[i] = strats2[i]
    out_w[1 - i] = wins2[1 - i] | b
    s = dict(strats2[1 - i])
    s.update(strats[1 - i])
    s.update(b_strat)
    out_s[1 - i] = s
    return out_w, out_s


def _with_sinks(game):
    """Give every stuck vertex an edge to a self-looping sink its owner loses at."""
    owner, priority = dict(game.owner), dict(game.priority)
    edges = {v: list(game.successors(v)) for v in owner}
    sinks = {}
    for v in list(owner):
        if edges[v]:
            continue
        loser = owner[v]
        sink = ("sink", loser)
        if sink not in owner:
            owner[sink] = loser
            priority[sink] = 1 if loser == CIRCLE else 0
            edges[sink] = [sink]
            sinks[sink] = loser
        edges[v] = [sink]
    return ParityGame(owner, priority, edges), sinks


def solve_parity(game: ParityGame) -> Strategy:
    """Recursive attractor decomposition (Zielonka), with positional strategies."""
    game.check()
    total, sinks = _with_sinks(game)
    pred = total.predecessors()
    wins, strats = _zielonka(total, pred, set(total.owner))
    winner = {}
    for player in (CIRCLE, BOX):
        for v in wins[player]:
            if v not in sinks:
                winner[v] = player
    circle = {v: w for v, w in strats[CIRCLE].items()
              if v not in sinks and w not in sinks and total.owner[v] == CIRCLE and winner[v] == CIRCLE}
    box = {v: w for v, w in strats[BOX].items()
           if v not in sinks and w not in sinks and total.owner[v] == BOX and winner[v] == BOX}
    return Strategy(winner, circle, box)


# -- reduced game -------------------------------------------------------------

@dataclass
class ReducedGame(ParityGame):
    blocks: dict = field(default_factory=dict)  # vertex id -> Block
    cp: object = None
    family: object = None

    def or_vertices(self):
        return [v for v, b in self.blocks.items() if b.kind == OR]

    def and_vertices(self):
        return [v for v, b in self.blocks.items() if b.kind == AND]

    def label(self, v):
        b = self.blocks[v]
        if b.kind == OR:
            return f"{self.cp.names[b.eq]}(B{b.id})"
        return f"B{b.id}"

    def subgame(self, keep):
        keep = set(keep)
        return ReducedGame(
            {v: o for v, o in self.owner.items() if v in keep},
            {v: p for v, p in self.priority.items() if v in keep},
            {v: [w for w in ws if w in keep] for v, ws in self.edges.items() if v in keep},
            {v: b for v, b in self.blocks.items() if v in keep},
            self.cp, self.family,
        )


def priorities(cp):
    ranks = cp.ranks()
    u = max(ranks, default=0)
    u += u % 2
    return [u - r for r in ranks]


def or_and_edge(cp, phi: Block, psi: Block, session) -> bool:
    i, k = psi.eq, psi.clause
    c = cp.clause(i, k)
    n = len(cp.equations[i].params)
    binders = and_binders(cp, i, k)
    head = tuple(Var(x) for x, _ in binders[:n])
    body = conj(ref(phi.shape, head), ref(psi.shape), c.constraint)
    return not is_empty(SetExpr(binders, body, n), session)


def and_or_edge(cp, psi: Block, j, phi: Block, session) -> bool:
    return not is_empty(meet(psi.shape, splitter_g(cp, psi.eq, psi.clause, j, phi)), session)


def build_reduced_game(fam, cp, session) -> ReducedGame:
    """Quotient game of a saturated family: one vertex per nonempty block."""
    prio = priorities(cp)
    owner, priority, edges, blocks = {}, {}, {}, {}
    for b in fam.blocks():
        owner[b.id] = CIRCLE if b.kind == OR else BOX
        priority[b.id] = prio[b.eq] if b.kind == OR else 0
        edges[b.id] = []
        blocks[b.id] = b
    for i, _ in enumerate(cp.equations):
        for phi in fam.phi[i]:
            for k, _ in enumerate(cp.equations[i].clauses):
                for psi in fam.psi[(i, k)]:
                    if or_and_edge(cp, phi, psi, session):
                        edges[phi.id].append(psi.id)
    for (i, k), psis in sorted(fam.psi.items()):
        for psi in psis:
            targets = []
            for j, (a, _) in enumerate(cp.clause(i, k).calls):
                for phi in fam.phi[a]:
                    if phi.id in targets:
                        continue
                    if and_or_edge(cp, psi, j, phi, session):
                        targets.append(phi.id)
                        # a saturated and-block maps call j into a single or-block
                        break
            edges[psi.id] = sorted(targets)
    game = ReducedGame(owner, priority, edges, blocks, cp, fam)
    log.info("reduced game: %d vertices, %d edges", len(owner), sum(len(w) for w in edges.values()))
    return game


def reachable(game, roots):
    seen = set(roots)
    todo = deque(roots)
    while todo:
        v = todo.popleft()
        for w in game.successors(v):
            if w not in seen:
                seen.add(w)
                todo.append(w)
    return seen


def prune(game: ReducedGame, roots) -> ReducedGame:
    """Drop the vertices not reachable from ``roots``."""
    return game.subgame(reachable(game, roots))


def is_bipartite(game) -> bool:
    return all(game.owner[v] != game.owner[w] for v, ws in game.edges.items() for w in ws)


# -- edge soundness -------------------------------------------------------------

def _lit(v):
    return BoolLit(v) if isinstance(v, bool) else NatLit(v)


def sample_members(shape: SetExpr, n, session) -> list:
    """Up to ``n`` distinct members of a set."""
    out = []
    body = shape.body
    while len(out) < n:
        pt = witness(SetExpr(shape.binders, body, shape.primary), session)
        if pt is None:
            break
        out.append(pt)
        same = conj(*(Cmp("=", Var(x), _lit(v)) if s.name == "NAT" else
                      (Var(x) if v else Not(Var(x)))
                      for (x, s), v in zip(shape.binders, pt)))
        body = conj(body, Not(same)) if shape.binders else BoolLit(False)
    return out


def edge_unsound(game: ReducedGame, v, w, session, samples=10):
    """A sampled member of block ``v`` without a concrete successor in ``w``, or None."""
    cp = game.cp
    src, dst = game.blocks[v], game.blocks[w]
    if src.kind == OR:
        c = cp.clause(dst.eq, dst.clause)
        binders = and_binders(cp, dst.eq, dst.clause)
        n = len(binders) - len(c.variables)
        succ = exists_project(SetExpr(binders, conj(ref(dst.shape), c.constraint), n))
    else:
        parts = [ref(splitter_g(cp, src.eq, src.clause, j, dst))
                 for j, (a, _) in enumerate(cp.clause(src.eq, src.clause).calls) if a == dst.eq]
        succ = SetExpr(src.shape.binders, disj(*parts), src.shape.primary)
    for u in sample_members(src.shape, samples, session):
        point = tuple(_lit(x) for x in u)
        probe = SetExpr((), conj(ref(src.shape, point), Not(ref(succ, point))))
        if not is_empty(probe, session):
            return u
    return None


def check_edge_soundness(game: ReducedGame, session, samples=10) -> list:
    """All edges with a sampled source member lacking a successor in the target."""
    bad = []
    for v in sorted(game.edges):
        for w in game.edges[v]:
            u = edge_unsound(game, v, w, session, samples)
            if u is not None:
                bad.append((v, w, u))
    return bad


# -- membership -------------------------------------------------------------------

def membership_vertex(game: ReducedGame, sig, session):
    return block_of(game.family, game.cp, sig, session).id


def winner_of(game: ReducedGame, strategy: Strategy, sig, session) -> bool:
    return strategy.winner[membership_vertex(game, sig, session)] == CIRCLE
