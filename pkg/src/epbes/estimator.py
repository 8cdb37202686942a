"""Estimator-style front end: ``fit`` a PBES, ``predict`` signatures.

``ReducedSpaceSolver`` runs the symbolic pipeline (clause form, partition
refinement, reduced game, parity solving); ``ExplicitSolver`` runs the
bounded explicit oracle.  Both accept PBES source text or a parsed
:class:`~epbes.pbes.Pbes`, and signatures as ``"X(1, 2)"`` strings,
:class:`~epbes.pbes.Signature` objects or ``(name, values)`` pairs.
"""
from __future__ import annotations

import warnings
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_is_fitted

from .game import CIRCLE, build_reduced_game, solve_parity
from .normalize import to_clause_form
from .oracle import Bounds, ExplicitVerdict, explore, solve_explicit
from .parser import ParseError, check_signature, parse_pbes, parse_query
from .pbes import Pbes, Signature
from .refinement import Refiner, block_of
from .smt import SolverSession, SolverUnknown


class Verdict(str, Enum):
    TRUE = "true"
    FALSE = "false"
    DIVERGED = "diverged"
    UNKNOWN = "unknown"

    def __str__(self):
        return self.value


def check_pbes(X) -> Pbes:
    """Accept PBES source text or a parsed system."""
    if isinstance(X, Pbes):
        return X
    if isinstance(X, str):
        return parse_pbes(X)
    raise TypeError(f"expected PBES text or a Pbes, got {type(X).__name__}")


def check_signatures(X, pbes) -> list:
    """Normalize a signature or an iterable of them, checking arity and sorts."""
    if isinstance(X, (str, Signature)):
        X = [X]
    out = []
    for item in X:
        if isinstance(item, str):
            sig = parse_query(item, pbes)
        elif isinstance(item, Signature):
            sig = item
            check_signature(pbes, sig)
        elif isinstance(item, tuple) and len(item) == 2:
            sig = Signature(item[0], tuple(item[1]))
            check_signature(pbes, sig)
        else:
            raise ParseError("syntax", f"cannot read a signature from {item!r}")
        out.append(sig)
    return out


class ReducedSpaceSolver(BaseEstimator):
    """Membership by symbolic partition refinement and a reduced parity game.

    Parameters
    ----------
    max_iter : int
        Refinement rounds before giving up as diverged.
    smt_cmd : str or None
        Solver command line; ``None`` reads ``EPBES_SMT_CMD`` or uses z3.
    smt_timeout_ms : int
        Per-query solver timeout.
    trace : bool
        Record split events in ``events_``.

    Attributes set by ``fit``: ``pbes_``, ``clauses_``, ``refiner_``, ``family_``,
    ``n_iter_``, ``converged_``, ``events_``, ``game_`` and ``strategy_``
    (the last two are None after divergence), ``session_``.
    """

    def __init__(self, max_iter=100, smt_cmd=None, smt_timeout_ms=30000, trace=True):
        self.max_iter = max_iter
        self.smt_cmd = smt_cmd
        self.smt_timeout_ms = smt_timeout_ms
        self.trace = trace

    def _validate_params(self):
        if not isinstance(self.max_iter, int) or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter!r}")
        if not isinstance(self.smt_timeout_ms, int) or self.smt_timeout_ms < 0:
            raise ValueError(f"smt_timeout_ms must be a non-negative integer, got {self.smt_timeout_ms!r}")

    def fit(self, X, y=None):
        self._validate_params()
        self.pbes_ = check_pbes(X)
        self.clauses_ = to_clause_form(self.pbes_)
        self.session_ = SolverSession(self.smt_cmd, self.smt_timeout_ms)
        refiner = Refiner(self.clauses_, self.session_, self.trace)
        result = refiner.saturate(self.max_iter)
        self.refiner_ = refiner
        self.saturation_ = result
        self.family_ = result.family
        self.n_iter_ = result.iterations
        self.events_ = result.events
        self.converged_ = result.saturated
        self.game_ = self.strategy_ = None
        if not self.converged_:
            warnings.warn(f"refinement diverged after {self.n_iter_} iterations", ConvergenceWarning)
            return self
        self.game_ = build_reduced_game(self.family_, self.clauses_, self.session_)
        self.strategy_ = solve_parity(self.game_)
        return self

    def vertex_of(self, sig):
        check_is_fitted(self, "clauses_")
        return block_of(self.family_, self.clauses_, sig, self.session_).id

    def decide(self, sig) -> Verdict:
        check_is_fitted(self, "clauses_")
        if not self.converged_:
            return Verdict.DIVERGED
        try:
            v = self.vertex_of(sig)
        except SolverUnknown:
            return Verdict.UNKNOWN
        return Verdict.TRUE if self.strategy_.winner[v] == CIRCLE else Verdict.FALSE

    def predict(self, X):
        """One :class:`Verdict` per signature, as an object array."""
        check_is_fitted(self, "clauses_")
        sigs = check_signatures(X, self.pbes_)
        return np.array([self.decide(s) for s in sigs], dtype=object)

    def close(self):
        session = getattr(self, "session_", None)
        if session is not None:
            session.close()


class ExplicitSolver(BaseEstimator):
    """Bounded explicit instantiation; answers true, false or unknown."""

    def __init__(self, value_cap=256, witness_cap=64, vertex_cap=100_000):
        self.value_cap = value_cap
        self.witness_cap = witness_cap
        self.vertex_cap = vertex_cap

    def fit(self, X, y=None):
        self.bounds_ = Bounds(self.value_cap, self.witness_cap, self.vertex_cap)
        self.pbes_ = check_pbes(X)
        self.clauses_ = to_clause_form(self.pbes_)
        self.games_ = {}
        return self

    def explore(self, sig):
        check_is_fitted(self, "clauses_")
        if sig not in self.games_:
            self.games_[sig] = explore(self.clauses_, sig, self.bounds_)
        return self.games_[sig]

    def decide(self, sig) -> Verdict:
        return Verdict(solve_explicit(self.explore(sig)).value)

    def predict(self, X):
        check_is_fitted(self, "clauses_")
        sigs = check_signatures(X, self.pbes_)
        return np.array([self.decide(s) for s in sigs], dtype=object)


def membership(pbes, sig, max_iter=100, smt_cmd=None, smt_timeout_ms=30000) -> Verdict:
    """One-shot membership query through the reduced pipeline."""
    est = ReducedSpaceSolver(max_iter, smt_cmd, smt_timeout_ms, trace=False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        est.fit(pbes)
    try:
        return est.predict([sig])[0]
    finally:
        est.close()


def agrees(verdict: Verdict, oracle: ExplicitVerdict) -> bool:
    """False only when both sides are definite and differ."""
    if verdict not in (Verdict.TRUE, Verdict.FALSE) or oracle is ExplicitVerdict.UNKNOWN:
        return True
    return verdict.value == oracle.value

