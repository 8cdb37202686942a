"""Symbolic partition refinement towards a feasible pair of equivalences.

Each equation ``i`` owns a partition of its parameter domain (the or-blocks)
and each clause ``(i, k)`` a partition of parameter/witness pairs (the
and-blocks).  One round ``H`` first divides or-blocks by the projections of
the and-blocks through the clause constraint, then divides and-blocks by
the inverse images of or-blocks under each call's argument map.  Rounds
repeat until no block splits.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

from .pbes import conj, disj
from .sets import (
    SetExpr, complement, contains, exists_project, full, is_empty, meet, ref,
    simplify, substitute_into,
)

log = logging.getLogger(__name__)

OR, AND = "or", "and"


class NoBlock(RuntimeError):
    """No or-block contains a signature; the partition invariant is broken."""


@dataclass(frozen=True)
class Block:
    id: int
    kind: str
    eq: int
    clause: int | None
    shape: SetExpr

    @property
    def owner(self):
        return (self.kind, self.eq) if self.kind == OR else (self.kind, self.eq, self.clause)


@dataclass
class PartitionFamily:
    phi: list  # equation index -> [Block]
    psi: dict  # (i, k) -> [Block]
    iteration: int = 0
    next_id: int = 0

    def copy(self):
        return PartitionFamily([list(bs) for bs in self.phi],
                               {key: list(bs) for key, bs in self.psi.items()},
                               self.iteration, self.next_id)

    def blocks(self):
        for bs in self.phi:
            yield from bs
        for key in sorted(self.psi):
            yield from self.psi[key]

    def size(self):
        return sum(len(bs) for bs in self.phi) + sum(len(bs) for bs in self.psi.values())

    def block(self, bid):
        for b in self.blocks():
            if b.id == bid:
                return b
        raise KeyError(bid)


def or_binders(cp, i):
    return cp.equations[i].params


def and_binders(cp, i, k):
    return cp.equations[i].params + cp.clause(i, k).variables


def initial_family(cp) -> PartitionFamily:
    fam = PartitionFamily([], {})
    for i in range(len(cp.equations)):
        fam.phi.append([_new_block(fam, OR, i, None, full(or_binders(cp, i)))])
    for i, k in cp.clause_ids():
        n = len(cp.equations[i].params)
        fam.psi[(i, k)] = [_new_block(fam, AND, i, k, full(and_binders(cp, i, k), n))]
    return fam


def _new_block(fam, kind, i, k, shape):
    bid = fam.next_id
    fam.next_id += 1
    return Block(bid, kind, i, k, shape.named(f"B{bid}"))


def splitter_f(cp, i, k, psi: Block) -> SetExpr:
    """Parameters with at least one witness landing in and-block ``psi``."""
    c = cp.clause(i, k)
    n = len(cp.equations[i].params)
    pairs = SetExpr(and_binders(cp, i, k), conj(c.constraint, ref(psi.shape)), n)
    return exists_project(pairs)


def splitter_g(cp, i, k, j, phi: Block) -> SetExpr:
    """Pairs whose ``j``-th call lands in or-block ``phi``."""
    target, args = cp.clause(i, k).calls[j]
    if phi.eq != target:
        raise ValueError(f"block {phi.id} belongs to equation {phi.eq}, call targets {target}")
    n = len(cp.equations[i].params)
    return substitute_into(phi.shape, args, and_binders(cp, i, k), n)


@dataclass
class SaturationResult:
    status: str  # "saturated" or "diverged"
    family: PartitionFamily
    iterations: int
    events: list = field(default_factory=list)

    @property
    def saturated(self):
        return self.status == "saturated"

    @property
    def last_events(self):
        return self.events[-5:]


class Refiner:
    """Carries the solver session, the split-event log and a cache of block
    and splitter pairs already known not to split.

    With ``simplify`` on, every new block is rewritten to a quantifier-free
    formula when the solver can do so; otherwise block formulas nest the
    splitters that produced them.
    """

    def __init__(self, cp, session, trace=True, simplify=True):
        self.cp = cp
        self.session = session
        self.trace = trace
        self.simplify = simplify
        self.events = []
        self.created = {}  # block id -> Block, for resolving trace events
        self._stable = set()
        self._trivial = {}

    def divide(self, fam, blocks, splitter, source, phase="") -> list:
        """Replace every block by its meets with the splitter and its complement."""
        verdict = self._trivial.get(source)
        if verdict is None:
            verdict = "empty" if is_empty(splitter, self.session) else (
                "full" if is_empty(complement(splitter), self.session) else "proper")
            self._trivial[source] = verdict
        if verdict != "proper":
            return list(blocks)
        out = []
        for b in blocks:
            key = (b.id, source)
            if key in self._stable:
                out.append(b)
                continue
            inside = meet(b.shape, splitter)
            outside = meet(b.shape, complement(splitter))
            if is_empty(inside, self.session) or is_empty(outside, self.session):
                self._stable.add(key)
                out.append(b)
                continue
            if self.simplify:
                inside, outside = simplify(inside, self.session), simplify(outside, self.session)
            left = _new_block(fam, b.kind, b.eq, b.clause, inside)
            right = _new_block(fam, b.kind, b.eq, b.clause, outside)
            out.extend((left, right))
            self.created[left.id], self.created[right.id] = left, right
            if self.trace:
                self.events.append({
                    "iteration": fam.iteration,
                    "phase": phase,
                    "owner": list(b.owner),
                    "splitter": list(source),
                    "parent": b.id,
                    "blocks": [left.id, right.id],
                })
        return out

    def step_hd(self, fam) -> PartitionFamily:
        fam = fam.copy()
        for i, k in self.cp.clause_ids():
            for psi in list(fam.psi[(i, k)]):
                s = splitter_f(self.cp, i, k, psi)
                fam.phi[i] = self.divide(fam, fam.phi[i], s, ("F", i, k, psi.id), "D")
        return fam

    def step_hb(self, fam) -> PartitionFamily:
        fam = fam.copy()
        for i, k in self.cp.clause_ids():
            for j, (a, _) in enumerate(self.cp.clause(i, k).calls):
                for phi in list(fam.phi[a]):
                    s = splitter_g(self.cp, i, k, j, phi)
                    fam.psi[(i, k)] = self.divide(fam, fam.psi[(i, k)], s, ("G", i, k, j, phi.id), "B")
        return fam

    def step(self, fam) -> PartitionFamily:
        fam = fam.copy()
        fam.iteration += 1
        return self.step_hb(self.step_hd(fam))

    def saturate(self, max_iter=100, fam=None) -> SaturationResult:
        if max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        fam = fam or initial_family(self.cp)
        for it in range(1, max_iter + 1):
            before = fam.size()
            fam = self.step(fam)
            log.info("iteration %d: %d blocks (%d solver queries)", it, fam.size(),
                     self.session.stats.queries)
            if fam.size() == before:
                return SaturationResult("saturated", fam, it, self.events)
        return SaturationResult("diverged", fam, max_iter, self.events)


def saturate(cp, max_iter, session, trace=True, simplify=True) -> SaturationResult:
    return Refiner(cp, session, trace, simplify).saturate(max_iter)


def step_hd(cp, fam, session):
    return Refiner(cp, session).step_hd(fam)


def step_hb(cp, fam, session):
    return Refiner(cp, session).step_hb(fam)


def divide(blocks, splitter, session, fam=None):
    """Stand-alone division of a block list (fresh ids come from ``fam``)."""
    if fam is None:
        fam = PartitionFamily([], {}, next_id=max((b.id for b in blocks), default=-1) + 1)
    return Refiner(None, session, trace=False).divide(fam, blocks, splitter, ("adhoc", id(splitter)))


def block_of(fam, cp, sig, session) -> Block:
    i = cp.index(sig.name)
    blocks = fam.phi[i]
    for b in blocks[:-1]:
        if contains(b.shape, sig.values, session):
            return b
    # the last block holds whatever the others do not, provided it contains sig
    last = blocks[-1]
    if len(blocks) == 1 or contains(last.shape, sig.values, session):
        return last
    raise NoBlock(f"no block of {cp.names[i]} contains {sig}")


def partition_violations(blocks, session) -> list:
    """Pairs of overlapping blocks and, as ``("cover", None)``, a coverage gap."""
    bad = []
    for x in range(len(blocks)):
        for y in range(x + 1, len(blocks)):
            if not is_empty(meet(blocks[x].shape, blocks[y].shape), session):
                bad.append((blocks[x].id, blocks[y].id))
    if blocks:
        union = blocks[0].shape
        body = disj(*(b.shape.body for b in blocks))
        rest = SetExpr(union.binders, body, union.primary)
        if not is_empty(complement(rest), session):
            bad.append(("cover", None))
    return bad


def refines(new_blocks, old_blocks, session) -> bool:
    """Every new block lies inside exactly one old block."""
    for nb in new_blocks:
        hits = 0
        for ob in old_blocks:
            if is_empty(meet(nb.shape, complement(ob.shape)), session):
                hits += 1
        if hits != 1:
            return False
    return True


def reachable_blocks(edges, start):
    seen = {start}
    todo = deque([start])
    while todo:
        v = todo.popleft()
        for w in edges.get(v, ()):
            if w not in seen:
                seen.add(w)
                todo.append(w)
    return seen
