import random

import pytest

from epbes.export import proof_from_json, proof_to_json
from epbes.game import CIRCLE, solve_parity
from epbes.normalize import to_clause_form
from epbes.oracle import AndVertex, Bounds, explore
from epbes.parser import parse_pbes
from epbes.pbes import Signature
from epbes.proof import (
    ConcreteProofGraph, InternalInconsistency, NotWinning, Ok, Violation, bad_cycle,
    extract_concrete, strategy_graph, validate_concrete, validate_reduced_strategy,
)

from .conftest import clauses


# -- cycle condition against naive enumeration ------------------------------------

def simple_cycles(vertices, edges):
    """Every simple cycle, each listed once starting from its least vertex."""
    order = {v: i for i, v in enumerate(vertices)}
    out = []

    def dfs(start, v, path, on_path):
        for w in edges.get(v, ()):
            if w == start:
                out.append(list(path))
            elif w not in on_path and order[w] > order[start]:
                on_path.add(w)
                path.append(w)
                dfs(start, w, path, on_path)
                path.pop()
                on_path.discard(w)

    for s in vertices:
        dfs(s, s, [s], {s})
    return out


def random_graph(rng, n):
    vertices = list(range(n))
    edges = {v: rng.sample(vertices, rng.randint(0, min(3, n))) for v in vertices}
    weight = {v: rng.randint(0, 4) for v in vertices}
    return vertices, edges, weight


@pytest.mark.parametrize("seed", range(150))
def test_min_rank_condition_matches_cycle_enumeration(seed):
    rng = random.Random(seed)
    vertices, edges, rank = random_graph(rng, rng.randint(1, 10))
    cycles = simple_cycles(vertices, edges)
    bad = [c for c in cycles if min(rank[v] for v in c) % 2]
    odd = {r for r in rank.values() if r % 2}
    hit = bad_cycle(vertices, edges, rank, odd, lambda r, q: r >= q)
    assert (hit is not None) == bool(bad)
    if hit:
        v, q = hit
        assert rank[v] == q
        assert any(v in c and min(rank[x] for x in c) == q for c in bad)


@pytest.mark.parametrize("seed", range(150))
def test_max_priority_condition_matches_cycle_enumeration(seed):
    rng = random.Random(1000 + seed)
    vertices, edges, prio = random_graph(rng, rng.randint(1, 10))
    bad = [c for c in simple_cycles(vertices, edges) if max(prio[v] for v in c) % 2]
    odd = {p for p in prio.values() if p % 2}
    hit = bad_cycle(vertices, edges, prio, odd, lambda p, q: p <= q)
    assert (hit is not None) == bool(bad)


# -- concrete proof graphs ---------------------------------------------------------

def test_mccarthy_m54_proof(session, pipeline):
    run = pipeline("mccarthy3.pbes")
    pg = extract_concrete(run.game, run.strategy, Signature("M", (5, 4)), 64, session)
    assert pg.closed
    assert set(pg.edges) == {Signature("M", (5, 4)), Signature("X_T", ())}
    assert validate_concrete(pg, run.cp) == Ok()


@pytest.mark.parametrize("x", range(0, 7))
def test_mccarthy_proofs_validate(session, pipeline, x):
    run = pipeline("mccarthy3.pbes")
    y = x - 1 if x > 3 else 3
    pg = extract_concrete(run.game, run.strategy, Signature("M", (x, y)), 200, session)
    assert pg.closed
    assert validate_concrete(pg, run.cp)


def test_false_signature_has_no_proof(session, pipeline):
    run = pipeline("mccarthy3.pbes")
    with pytest.raises(NotWinning):
        extract_concrete(run.game, run.strategy, Signature("M", (0, 4)), 64, session)


def test_budget_gives_partial_graph(session, pipeline):
    run = pipeline("e4.pbes")
    pg = extract_concrete(run.game, run.strategy, Signature("X1", (2,)), 8, session)
    assert not pg.closed and len(pg.frontier) > 0
    v = validate_concrete(pg, run.cp)
    assert isinstance(v, Violation) and v.kind == "finiteness"


def mutations(pg, cp):
    for v, ws in pg.edges.items():
        for w in ws:
            g = _copy(pg)
            g.remove_edge(v, w)
            yield f"drop {v}->{w}", g
    for v, (k, w) in pg.annotation.items():
        if w:
            g = _copy(pg)
            g.annotation[v] = (k, tuple(x + 1 for x in w))
            yield f"witness {v}", g
        n = len(cp.equations[cp.index(v.name)].clauses)
        for k2 in range(n + 1):
            if k2 != k:
                g = _copy(pg)
                g.annotation[v] = (k2, w)
                yield f"clause {v} {k2}", g


def _copy(pg):
    return ConcreteProofGraph(pg.root, dict(pg.annotation), {v: list(ws) for v, ws in pg.edges.items()},
                              list(pg.frontier))


@pytest.mark.parametrize("sig", [Signature("M", (5, 4)), Signature("M", (2, 3))])
def test_mutations_are_rejected(session, pipeline, sig):
    run = pipeline("mccarthy3.pbes")
    pg = extract_concrete(run.game, run.strategy, sig, 64, session)
    count = 0
    for what, g in mutations(pg, run.cp):
        assert isinstance(validate_concrete(g, run.cp), Violation), what
        count += 1
    assert count >= 3


def test_odd_cycle_violates_condition_2():
    cp = clauses("e1.pbes")
    y0, y1 = Signature("Y", (0,)), Signature("Y", (1,))
    pg = ConcreteProofGraph(y0, {y0: (0, ()), y1: (0, ())}, {y0: [y1], y1: [y0]})
    v = validate_concrete(pg, cp)
    assert isinstance(v, Violation) and v.kind == "condition 2" and v.location == y0
    assert not v and "condition 2" in str(v)


@pytest.mark.parametrize("sigma,ok", [("nu", True), ("mu", False)])
def test_cycle_parity_decides(sigma, ok):
    cp = to_clause_form(parse_pbes(f"{sigma} X(n:N) = X((n + 1) mod 3);"))
    x = [Signature("X", (n,)) for n in range(3)]
    pg = ConcreteProofGraph(x[0], {v: (0, ()) for v in x}, {x[i]: [x[(i + 1) % 3]] for i in range(3)})
    assert bool(validate_concrete(pg, cp)) == ok
    pg.edges[x[2]] = [x[2]]
    assert validate_concrete(pg, cp).kind == ("condition 1" if ok else "condition 2")


def test_unknown_predicate_and_bad_sorts():
    cp = clauses("e1.pbes")
    z = Signature("Z", (0,))
    assert validate_concrete(ConcreteProofGraph(z, {}, {z: []}), cp).kind == "condition 1"
    y = Signature("Y", (True,))
    pg = ConcreteProofGraph(y, {y: (0, ())}, {y: []})
    assert validate_concrete(pg, cp).kind == "condition 1"


def test_json_roundtrip(session, pipeline):
    run = pipeline("mccarthy3.pbes")
    pg = extract_concrete(run.game, run.strategy, Signature("M", (2, 3)), 64, session)
    again = proof_from_json(proof_to_json(pg, run.cp))
    assert again.edges == pg.edges and again.annotation == pg.annotation and again.root == pg.root
    assert validate_concrete(again, run.cp)


# -- validator completeness on proofs built from explicit games ------------------------

def proof_from_explicit(cp, sig, bounds):
    """A proof graph read off circle's strategy in a closed explicit game."""
    g = explore(cp, sig, bounds)
    assert g.closed
    pgame = g.to_parity_game()
    s = solve_parity(pgame)
    if s.winner[sig] != CIRCLE:
        return None
    pg = ConcreteProofGraph(sig)
    todo, seen = [sig], {sig}
    while todo:
        v = todo.pop()
        a = s.circle[v]
        assert isinstance(a, AndVertex)
        pg.annotation[v] = (a.clause, a.witness)
        pg.edges[v] = list(pgame.edges[a])
        for w in pg.edges[v]:
            if w not in seen:
                seen.add(w)
                todo.append(w)
    return pg


@pytest.mark.parametrize("name,sig", [
    ("mccarthy3.pbes", Signature("M", (0, 3))),
    ("mccarthy3.pbes", Signature("M", (7, 6))),
    ("countdown.pbes", Signature("X", (6,))),
    ("nu X(n:N) = exists m:N . m < 3 && Y((n + m) mod 4); mu Y(n:N) = n = 2 || X(n + 1 mod 4);",
     Signature("X", (1,))),
])
def test_validator_accepts_proofs_from_explicit_games(name, sig):
    cp = clauses(name) if name.endswith(".pbes") else to_clause_form(parse_pbes(name))
    pg = proof_from_explicit(cp, sig, Bounds(40, 20, 50_000))
    assert pg is not None
    assert validate_concrete(pg, cp) == Ok()


# -- reduced strategy graphs -------------------------------------------------------------

def test_reduced_strategy_graph(session, pipeline):
    run = pipeline("mccarthy3.pbes")
    g, s = run.game, run.strategy
    root = g.or_vertices()[0]
    region = strategy_graph(g, s)
    assert validate_reduced_strategy(region) == Ok()
    rsg = strategy_graph(g, s, root=next(v for v in g.or_vertices() if s.winner[v] == CIRCLE))
    assert validate_reduced_strategy(rsg, session, samples=2)
    # an extra circle edge breaks the one-choice rule
    v = next(v for v in rsg.owner if rsg.owner[v] == CIRCLE)
    extra = [w for w in g.edges[v] if w in rsg.owner and w not in rsg.edges[v]]
    if extra:
        rsg.edges[v] = rsg.edges[v] + extra[:1]
        assert validate_reduced_strategy(rsg).kind == "strategy"
    assert root in g.owner


def test_reduced_strategy_violations():
    from epbes.game import BOX, ParityGame
    g = ParityGame({0: CIRCLE, 1: BOX}, {0: 1, 1: 0}, {0: [1], 1: [0]})
    assert validate_reduced_strategy(g).kind == "parity"
    g = ParityGame({0: CIRCLE, 1: BOX}, {0: 2, 1: 0}, {0: [1], 1: [0, 2]})
    assert validate_reduced_strategy(g).kind == "closure"


def test_internal_inconsistency_is_an_error():
    assert issubclass(InternalInconsistency, RuntimeError)
