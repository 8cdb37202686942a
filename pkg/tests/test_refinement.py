import random

import pytest

from epbes.game import sample_members
from epbes.pbes import BoolLit, Cmp, Mod, NatLit, Signature, Sort, Var, conj, substitute
from epbes.refinement import (
    AND, OR, NoBlock, PartitionFamily, Refiner, _new_block, block_of, divide, initial_family,
    partition_violations, refines,
)
from epbes.sets import SetExpr, contains, equivalent, is_empty, lam, ref, witness

from .conftest import clauses
from .gen import ref_eval

N1 = (("n", Sort.NAT),)


def partitions(fam):
    for i, bs in enumerate(fam.phi):
        yield ("phi", i), bs
    for key in sorted(fam.psi):
        yield ("psi", key), fam.psi[key]


def test_initial_family():
    cp = clauses("mccarthy3.pbes")
    fam = initial_family(cp)
    assert [len(bs) for bs in fam.phi] == [1, 1]
    assert sorted(fam.psi) == [(0, 0), (0, 1), (1, 0)]
    assert all(b.shape.body == BoolLit(True) for b in fam.blocks())
    assert fam.size() == 5
    assert len({b.id for b in fam.blocks()}) == 5
    psi = fam.psi[(0, 1)][0]
    assert psi.kind == AND and psi.shape.names == ("x", "y", "e") and psi.shape.primary == 2


@pytest.mark.parametrize("name,iters", [("e4.pbes", 5), ("e1.pbes", 5), ("e2.pbes", 4),
                                        ("countdown.pbes", 4)])
def test_invariants_after_each_iteration(session, name, iters):
    cp = clauses(name)
    refiner = Refiner(cp, session)
    fam = initial_family(cp)
    for _ in range(iters):
        new = refiner.step(fam)
        for (key, bs), (_, old) in zip(partitions(new), partitions(fam)):
            assert all(not is_empty(b.shape, session) for b in bs), key
            assert partition_violations(bs, session) == [], key
            assert refines(bs, old, session), key
        assert new.size() >= fam.size()
        fam = new


def test_e4_saturates_to_parities(session, pipeline):
    run = pipeline("e4.pbes")
    assert run.result.saturated and run.result.iterations <= 5
    [phis] = run.family.phi
    evens = lam(N1, Cmp("=", Mod(Var("n"), 2), NatLit(0)))
    odds = lam(N1, Cmp("=", Mod(Var("n"), 2), NatLit(1)))
    assert len(phis) == 2
    assert any(equivalent(b.shape, evens, session) for b in phis)
    assert any(equivalent(b.shape, odds, session) for b in phis)
    assert len(run.family.psi[(0, 0)]) == 4


def _hit_blocks(cp, fam, i, sig_values, session):
    """Per clause, the and-blocks reachable from a signature, computed directly."""
    eq = cp.equations[i]
    out = []
    for k, c in enumerate(eq.clauses):
        env = {x: (BoolLit(v) if isinstance(v, bool) else NatLit(v))
               for x, v in zip(eq.param_names, sig_values)}
        point = tuple(env[x] for x in eq.param_names) + tuple(Var(x) for x in c.var_names)
        hits = set()
        for psi in fam.psi[(i, k)]:
            body = conj(ref(psi.shape, point), substitute(c.constraint, env))
            if witness(SetExpr(c.variables, body), session) is not None:
                hits.add(psi.id)
        out.append(frozenset(hits))
    return out


def _target_block(cp, fam, sig, session):
    hits = [b.id for b in fam.phi[cp.index(sig.name)] if contains(b.shape, sig.values, session)]
    assert len(hits) == 1, (sig, hits)
    return hits[0]


@pytest.mark.parametrize("name", ["e4.pbes", "mccarthy3.pbes", "e1.pbes"])
def test_saturated_family_is_feasible_on_samples(session, pipeline, name):
    run = pipeline(name)
    cp, fam = run.cp, run.family
    assert run.result.saturated
    # members of one or-block reach the same and-blocks
    for i, bs in enumerate(fam.phi):
        for b in bs:
            members = sample_members(b.shape, 2, session)
            assert members
            hit = {tuple(_hit_blocks(cp, fam, i, m, session)) for m in members}
            assert len(hit) == 1, (b.id, members)
    # members of one and-block send each call into the same or-block
    for (i, k), bs in fam.psi.items():
        eq, c = cp.equations[i], cp.clause(i, k)
        names = eq.param_names + c.var_names
        for b in bs:
            seen = set()
            for m in sample_members(b.shape, 2, session):
                env = dict(zip(names, m))
                targets = tuple(
                    _target_block(cp, fam, Signature(cp.names[a], tuple(ref_eval(x, env, None, 0)
                                                                        for x in args)), session)
                    for a, args in c.calls)
                seen.add(targets)
            assert len(seen) <= 1, (b.id, seen)


def test_trace_events_resolve_to_splits(session, pipeline):
    run = pipeline("e4.pbes")
    created = run.refiner.created
    assert run.result.events
    for e in run.result.events:
        left, right = (created[x] for x in e["blocks"])
        assert e["phase"] in ("D", "B")
        assert left.owner == right.owner == tuple(e["owner"])
        assert is_empty(conj_sets(left.shape, right.shape), session)


def conj_sets(a, b):
    return SetExpr(a.binders, conj(a.body, b.body), a.primary)


def test_divide_stand_alone(session):
    blocks = initial_family(clauses("countdown.pbes")).phi[0]
    d1 = (("d", Sort.NAT),)
    assert divide(blocks, lam(d1, BoolLit(True)), session) == blocks
    small = lam(d1, Cmp("<", Var("d"), NatLit(3)))
    out = divide(blocks, small, session)
    assert len(out) == 2
    assert equivalent(SetExpr(d1, out[0].shape.body), small, session)


def _same_partition(xs, ys, session):
    if len(xs) != len(ys):
        return False
    return all(any(equivalent(SetExpr(N1, x.shape.body), SetExpr(N1, y.shape.body), session)
                   for y in ys) for x in xs)


@pytest.mark.parametrize("seed", range(8))
def test_division_order_does_not_matter(session, seed):
    rng = random.Random(seed)
    fam = PartitionFamily([], {}, next_id=0)
    start = [_new_block(fam, OR, 0, None, lam(N1, BoolLit(True)))]

    def splitter():
        kind = rng.choice(("lt", "mod"))
        if kind == "lt":
            return lam(N1, Cmp("<", Var("n"), NatLit(rng.randint(1, 8))))
        m = rng.randint(2, 4)
        return lam(N1, Cmp("=", Mod(Var("n"), m), NatLit(rng.randrange(m))))

    s1, s2 = splitter(), splitter()
    ab = divide(divide(start, s1, session, fam), s2, session, fam)
    ba = divide(divide(start, s2, session, fam), s1, session, fam)
    assert _same_partition(ab, ba, session)


def test_block_of_and_no_block(session, pipeline):
    run = pipeline("e4.pbes")
    b2 = block_of(run.family, run.cp, Signature("X1", (2,)), session)
    b40 = block_of(run.family, run.cp, Signature("X1", (40,)), session)
    b3 = block_of(run.family, run.cp, Signature("X1", (3,)), session)
    assert b2.id == b40.id != b3.id
    broken = PartitionFamily([[b2, b40]], {})
    with pytest.raises(NoBlock):
        block_of(broken, run.cp, Signature("X1", (3,)), session)


def test_diverging_fixtures_report_divergence(session):
    for name in ("e2.pbes", "countdown.pbes"):
        r = Refiner(clauses(name), session).saturate(4)
        assert not r.saturated and r.iterations == 4
        assert r.last_events == r.events[-5:]


def test_max_iter_validation(session):
    with pytest.raises(ValueError):
        Refiner(clauses("e4.pbes"), session).saturate(0)
