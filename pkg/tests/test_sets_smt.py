"""Symbolic sets against two independent references: cvc5 (through its own
parser, on formulas printed here with every set reference inlined) and
direct evaluation on grid points."""
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epbes.pbes import (
    Add, And, Apply, BoolLit, Cmp, Exists, Mod, Monus, NatLit, Not, Or, Scale, Sort, Var, conj,
    walk,
)
from epbes.sets import (
    SignatureMismatch, complement, contains, difference, equivalent, exists_project, full, is_empty,
    lam, meet, simplify, substitute_into, subset, witness,
)
from epbes.smt import (
    SolverError, SolverSession, Untranslatable, from_smt, parse_sexpr, resolve_command, to_smt,
)

from .gen import bool_data, nat_expr, ref_eval

cvc5 = pytest.importorskip("cvc5")

N2 = (("n", Sort.NAT), ("m", Sort.NAT))


# -- reference printer and cvc5 runner --------------------------------------------

def ref_smt(e):
    """SMT-LIB text with set references inlined by substitution."""
    t = type(e)
    if t is NatLit:
        return str(e.value)
    if t is BoolLit:
        return "true" if e.value else "false"
    if t is Var:
        return f"|{e.name}|"
    if t is Add:
        return f"(+ {ref_smt(e.left)} {ref_smt(e.right)})"
    if t is Monus:
        d = f"(- {ref_smt(e.left)} {ref_smt(e.right)})"
        return f"(ite (> {d} 0) {d} 0)"
    if t is Scale:
        return f"(* {e.factor} {ref_smt(e.arg)})"
    if t is Mod:
        return f"(mod {ref_smt(e.arg)} {e.modulus})"
    if t is Cmp:
        a, b = ref_smt(e.left), ref_smt(e.right)
        return f"(not (= {a} {b}))" if e.op == "!=" else f"({e.op} {a} {b})"
    if t is Not:
        return f"(not {ref_smt(e.arg)})"
    if t is And:
        return f"(and true {' '.join(ref_smt(a) for a in e.args)})"
    if t is Or:
        return f"(or false {' '.join(ref_smt(a) for a in e.args)})"
    if t is Exists:
        v = f"|{e.var}|"
        if e.sort is Sort.NAT:
            return f"(exists (({v} Int)) (and (<= 0 {v}) {ref_smt(e.body)}))"
        return f"(exists (({v} Bool)) {ref_smt(e.body)})"
    if t is Apply:
        target = e.target
        if not target.binders:
            return ref_smt(target.body)
        binds = " ".join(f"(|{n}| {ref_smt(a)})" for (n, _), a in zip(target.binders, e.args))
        return f"(let ({binds}) {ref_smt(target.body)})"
    raise TypeError(e)


def cvc5_sat(body, binders):
    tm = cvc5.TermManager()
    solver = cvc5.Solver(tm)
    solver.setOption("tlimit-per", "20000")
    sm = cvc5.SymbolManager(tm)
    parser = cvc5.InputParser(solver, sm)
    lines = ["(set-logic ALL)"]
    for n, s in binders:
        lines.append(f"(declare-const |{n}| {'Int' if s is Sort.NAT else 'Bool'})")
        if s is Sort.NAT:
            lines.append(f"(assert (>= |{n}| 0))")
    lines.append(f"(assert {ref_smt(body)})")
    lines.append("(check-sat)")
    parser.setStringInput(cvc5.InputLanguage.SMT_LIB_2_6, "\n".join(lines), "ref")
    out = ""
    while True:
        cmd = parser.nextCommand()
        if cmd.isNull():
            break
        out += cmd.invoke(solver, sm)
    out = out.strip()
    assert out in ("sat", "unsat"), out
    return out == "sat"


def random_body(rng, quantified=True):
    body = bool_data(rng, ["n", "m"], [], 2)
    if quantified and rng.random() < 0.4:
        inner = conj(Cmp("=", nat_expr(rng, ["n", "m"], 1), Add(Scale(rng.randint(2, 3), Var("k")),
                                                                    NatLit(rng.randint(0, 2)))),
                     bool_data(rng, ["n", "m", "k"], [], 1))
        body = conj(body, Exists("k", Sort.NAT, inner)) if rng.random() < 0.5 else \
            Or((body, Exists("k", Sort.NAT, inner)))
    return body


def grid(hi=6):
    return [(a, b) for a in range(hi) for b in range(hi)]


# -- emptiness and membership -----------------------------------------------------

@settings(max_examples=120, deadline=None)
@given(st.integers(0, 2**32))
def test_emptiness_agrees_with_cvc5(session, seed):
    rng = random.Random(seed)
    s = lam(N2, random_body(rng))
    assert is_empty(s, session) == (not cvc5_sat(s.body, s.binders))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32))
def test_nested_set_references_agree_with_cvc5(session, seed):
    rng = random.Random(seed)
    a = lam(N2, random_body(rng))
    b = substitute_into(a, (nat_expr(rng, ["n", "m"], 2), nat_expr(rng, ["n", "m"], 2)), N2)
    c = meet(b, complement(lam(N2, random_body(rng))))
    d = substitute_into(c, (Var("m"), Add(Var("n"), NatLit(1))), N2)
    for x in (b, c, d, meet(d, a)):
        assert is_empty(x, session) == (not cvc5_sat(x.body, x.binders))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32))
def test_contains_and_witness_agree_with_evaluation(session, seed):
    rng = random.Random(seed)
    s = lam(N2, random_body(rng, quantified=False))
    for p in rng.sample(grid(), 6):
        assert contains(s, p, session) == ref_eval(s.body, dict(zip(("n", "m"), p)), None, 0)
    w = witness(s, session)
    if w is None:
        assert not any(ref_eval(s.body, dict(zip(("n", "m"), p)), None, 0) for p in grid())
    else:
        assert all(isinstance(x, int) and x >= 0 for x in w)
        assert ref_eval(s.body, dict(zip(("n", "m"), w)), None, 0)


def test_nat_binders_are_non_negative(session):
    s = lam([("n", Sort.NAT)], Cmp("<", Var("n"), NatLit(0)))
    assert is_empty(s, session)
    t = lam([("n", Sort.NAT)], Exists("k", Sort.NAT, Cmp("=", Add(Var("n"), Var("k")), NatLit(0))))
    assert witness(t, session) == (0,)


def test_monus_clamps_at_zero(session):
    s = lam([("n", Sort.NAT)], Cmp("=", Monus(Var("n"), NatLit(5)), NatLit(0)))
    assert contains(s, (3,), session) and contains(s, (5,), session)
    assert not contains(s, (6,), session)


def test_bool_binders(session):
    s = lam([("b", Sort.BOOL), ("n", Sort.NAT)], And((Var("b"), Cmp(">", Var("n"), NatLit(2)))))
    assert contains(s, (True, 3), session)
    assert not contains(s, (False, 3), session)
    assert witness(s, session)[0] is True


def test_set_algebra(session):
    evens = lam([("n", Sort.NAT)], Cmp("=", Mod(Var("n"), 2), NatLit(0)))
    big = lam([("n", Sort.NAT)], Cmp(">", Var("n"), NatLit(10)))
    assert not is_empty(meet(evens, big), session)
    assert subset(meet(evens, big), evens, session)
    assert not subset(evens, big, session)
    assert is_empty(meet(evens, complement(evens)), session)
    assert equivalent(difference(evens, big), meet(evens, complement(big)), session)
    assert is_empty(complement(full(evens.binders)), session)
    with pytest.raises(SignatureMismatch):
        meet(evens, lam(N2, BoolLit(True)))
    with pytest.raises(SignatureMismatch):
        contains(evens, (1, 2), session)
    with pytest.raises(SignatureMismatch):
        contains(evens, (True,), session)


def test_projection(session):
    pairs = lam(N2, Cmp("=", Var("n"), Scale(3, Var("m"))), primary=1)
    proj = exists_project(pairs)
    assert proj.binders == (("n", Sort.NAT),)
    assert contains(proj, (9,), session) and not contains(proj, (10,), session)


def test_free_variables_rejected():
    with pytest.raises(ValueError):
        lam([("n", Sort.NAT)], Cmp("=", Var("n"), Var("z")))


# -- reading solver terms back -------------------------------------------------------

@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32))
def test_from_smt_roundtrip(seed):
    rng = random.Random(seed)
    body = random_body(rng, quantified=False)
    text = to_smt(body, None)
    try:
        back = from_smt(parse_sexpr(text), dict(N2))
    except Untranslatable:
        assert any(isinstance(x, Monus) for x in walk(body))
        return
    for p in grid(5):
        env = dict(zip(("n", "m"), p))
        assert ref_eval(back, env, None, 0) == ref_eval(body, env, None, 0), text


@pytest.mark.parametrize("text,point,want", [
    ("(and (>= n 2) (not (= n 3)))", (4,), True),
    ("(let ((a!1 (+ n 1))) (= a!1 3))", (2,), True),
    ("((_ divisible 3) n)", (6,), True),
    ("((_ divisible 3) n)", (7,), False),
    ("(=> (> n 2) (= (mod (+ n 1) 2) 0))", (3,), True),
    ("(xor (> n 2) (< n 5))", (3,), False),
    ("(<= (+ (* (- 1) n) 4) 0)", (4,), True),
    ("(ite (> n 2) (= n 3) (= n 0))", (0,), True),
])
def test_from_smt_forms(text, point, want):
    e = from_smt(parse_sexpr(text), {"n": Sort.NAT})
    assert ref_eval(e, {"n": point[0]}, None, 0) == want


def test_from_smt_rejects_unknown_operators():
    with pytest.raises(Untranslatable):
        from_smt(parse_sexpr("(= (div n 2) 1)"), {"n": Sort.NAT})


# -- simplification ------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32))
def test_simplify_is_equivalent(session, seed):
    rng = random.Random(seed)
    a = lam(N2, random_body(rng))
    b = lam(N2, random_body(rng))
    s = meet(substitute_into(a, (Var("m"), Var("n")), N2), complement(b))
    t = simplify(s, session)
    assert t.binders == s.binders
    if t is s:
        return
    diff = Or((And((s.body, Not(t.body))), And((t.body, Not(s.body)))))
    assert not cvc5_sat(diff, N2)
    assert not any(isinstance(x, (Exists, Apply)) for x in walk(t.body))


def test_simplify_rejects_wrong_elimination(session, monkeypatch):
    n, m = Var("n"), Var("m")
    s = lam([("n", Sort.NAT)], Exists("m", Sort.NAT, conj(Cmp("<", m, NatLit(3)),
                                                          Cmp("=", Mod(Add(n, m), 5), NatLit(0)))))
    real = session.eliminate
    calls = []

    def eliminate(formula, decls, tactic):
        calls.append(tactic)
        if len(calls) == 1:
            # keep only the m = 0 case, as an unsound eliminator might
            return [[["=", ["mod", "n", "5"], "0"]]]
        return real(formula, decls, tactic)

    monkeypatch.setattr(session, "eliminate", eliminate)
    t = simplify(s, session)
    assert len(calls) == 2
    assert equivalent(s, t, session) and contains(t, (3,), session)
    monkeypatch.setattr(session, "eliminate", lambda f, d, tactic: [["false"]])
    assert simplify(s, session) is s


def test_simplify_peels_singletons(session):
    n = Var("n")
    rest = lam([("n", Sort.NAT)], And((Cmp(">", n, NatLit(0)), Not(Cmp("=", n, NatLit(1))))))
    s = simplify(meet(rest, lam([("n", Sort.NAT)], Cmp("<=", n, NatLit(2)))), session)
    assert s.body == Cmp("=", n, NatLit(2))


# -- the session itself --------------------------------------------------------------

def test_resolve_command(monkeypatch):
    monkeypatch.delenv("EPBES_SMT_CMD", raising=False)
    assert resolve_command(None)[0] == "z3"
    monkeypatch.setenv("EPBES_SMT_CMD", "mysolver --flag")
    assert resolve_command(None) == ["mysolver", "--flag"]
    assert resolve_command("other -x") == ["other", "-x"]


def test_missing_solver_binary():
    with pytest.raises(SolverError):
        s = SolverSession("definitely-not-a-solver-binary")
        s.check(BoolLit(True), ())


def test_session_survives_many_queries(session):
    base = session.stats.queries
    s = lam([("n", Sort.NAT)], Cmp("=", Mod(Var("n"), 7), NatLit(3)))
    for i in range(30):
        assert contains(s, (i,), session) == (i % 7 == 3)
    assert session.stats.queries >= base + 30
