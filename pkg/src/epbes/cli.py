"""Command line interface.

Exit codes: 0 true/ok, 1 false, 2 diverged/unknown, 3 input error,
4 solver error or disagreement with the explicit oracle.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from dataclasses import dataclass

from sklearn.exceptions import ConvergenceWarning

from . import export
from .estimator import ExplicitSolver, ReducedSpaceSolver, Verdict, agrees, check_signatures
from .game import prune
from .normalize import DnfTooLarge, UniversalNotAllowed, format_clause_pbes, to_clause_form
from .oracle import Bounds, ExplicitVerdict, explore, solve_explicit
from .parser import ParseError, format_expr, format_params, parse_pbes, print_pbes
from .proof import NotWinning, extract_concrete, strategy_graph, validate_concrete, validate_reduced_strategy
from .smt import DEFAULT_SMT_CMD, ENV_SMT_CMD, SolverError, SolverUnknown

log = logging.getLogger("epbes")

EXIT_TRUE, EXIT_FALSE, EXIT_UNDECIDED, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3, 4
VERDICT_EXIT = {Verdict.TRUE: EXIT_TRUE, Verdict.FALSE: EXIT_FALSE,
                Verdict.DIVERGED: EXIT_UNDECIDED, Verdict.UNKNOWN: EXIT_UNDECIDED}
# small caps for the automatic cross-check in ``solve``
CROSS_CHECK = Bounds(value_cap=64, witness_cap=8, vertex_cap=20_000)


class InputError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    smt_cmd: str = DEFAULT_SMT_CMD
    smt_timeout_ms: int = 30000
    max_iter: int = 100
    value_cap: int = 256
    witness_cap: int = 64
    vertex_cap: int = 100_000
    budget: int = 64
    format: str = "text"
    prune: bool = False
    trace: bool = False
    cross_check: bool = True

    def validate(self):
        for name in ("max_iter", "value_cap", "witness_cap", "vertex_cap", "budget"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise InputError(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(self.smt_timeout_ms, int) or self.smt_timeout_ms < 0:
            raise InputError(f"smt_timeout_ms must be a non-negative integer, got {self.smt_timeout_ms!r}")
        if self.format not in ("text", "json", "dot"):
            raise InputError(f"unknown format {self.format!r}")
        if not isinstance(self.smt_cmd, str) or not self.smt_cmd.strip():
            raise InputError("smt_cmd must be a non-empty command line")
        return self

    @property
    def bounds(self):
        return Bounds(self.value_cap, self.witness_cap, self.vertex_cap)


CONFIG_KEYS = set(RunConfig.__dataclass_fields__)


def resolve_config(args, environ=None) -> RunConfig:
    """Flags beat environment, which beats the config file, which beats defaults."""
    environ = os.environ if environ is None else environ
    values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise InputError("config file must hold a JSON object")
        unknown = set(data) - CONFIG_KEYS
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(sorted(unknown))}")
        values.update(data)
    if environ.get(ENV_SMT_CMD):
        values["smt_cmd"] = environ[ENV_SMT_CMD]
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if values.get("format") is None and getattr(args, "default_format", None):
        values["format"] = args.default_format
    return RunConfig(**values).validate()


# -- helpers -------------------------------------------------------------------

def read_pbes(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return parse_pbes(text)


def emit(text):
    sys.stdout.write(text)


def fit_solver(pbes, cfg: RunConfig) -> ReducedSpaceSolver:
    est = ReducedSpaceSolver(cfg.max_iter, cfg.smt_cmd, cfg.smt_timeout_ms, trace=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        est.fit(pbes)
    return est


def require_format(cfg, allowed):
    if cfg.format not in allowed:
        raise InputError(f"format {cfg.format!r} is not available here (use {', '.join(allowed)})")


def combine(codes):
    """Aggregate exit code for several queries."""
    if not codes:
        return EXIT_TRUE
    if EXIT_UNDECIDED in codes:
        return EXIT_UNDECIDED
    return max(codes)


# -- subcommands -----------------------------------------------------------------

def cmd_parse(args, cfg):
    require_format(cfg, ("text", "json"))
    p = read_pbes(args.file)
    if cfg.format == "text":
        emit(print_pbes(p))
        return EXIT_TRUE
    ranks = p.ranks()
    doc = {"kind": "pbes", "equations": [
        {"sigma": eq.sigma.value, "name": eq.name, "params": format_params(eq.params),
         "rank": r, "body": format_expr(eq.body)}
        for eq, r in zip(p.equations, ranks)]}
    emit(export.dumps(doc))
    return EXIT_TRUE


def cmd_normalize(args, cfg):
    require_format(cfg, ("text", "json"))
    cp = to_clause_form(read_pbes(args.file))
    if cfg.format == "text":
        emit(format_clause_pbes(cp))
        return EXIT_TRUE
    eqs = []
    for eq, r in zip(cp.equations, cp.ranks()):
        eqs.append({
            "sigma": eq.sigma.value, "name": eq.name, "params": format_params(eq.params), "rank": r,
            "clauses": [{
                "variables": format_params(c.variables),
                "constraint": format_expr(c.constraint),
                "calls": [{"target": cp.names[a], "args": [format_expr(x) for x in xs]}
                          for a, xs in c.calls],
            } for c in eq.clauses],
        })
    emit(export.dumps({"kind": "clause-form", "equations": eqs}))
    return EXIT_TRUE


def cmd_refine(args, cfg):
    require_format(cfg, ("text", "json"))
    est = fit_solver(read_pbes(args.file), cfg)
    try:
        if cfg.format == "json":
            emit(export.dumps(export.family_to_json(est.saturation_, est.clauses_, cfg.trace)))
        else:
            if cfg.trace:
                emit("".join(export.format_event(e) + "\n" for e in est.events_))
            emit(export.format_family(est.saturation_, est.clauses_))
    finally:
        est.close()
    return EXIT_TRUE if est.converged_ else EXIT_UNDECIDED


def cmd_solve(args, cfg):
    require_format(cfg, ("text", "json"))
    p = read_pbes(args.file)
    sigs = check_signatures(args.query, p)
    est = fit_solver(p, cfg)
    results, codes, disagree = [], [], False
    try:
        if cfg.trace:
            for e in est.events_:
                print(export.format_event(e), file=sys.stderr)
        for sig in sigs:
            verdict = est.decide(sig)
            entry = {"query": str(sig), "verdict": verdict.value, "oracle": None}
            if verdict in (Verdict.TRUE, Verdict.FALSE):
                v = est.vertex_of(sig)
                entry["vertex"] = v
            if cfg.cross_check and verdict in (Verdict.TRUE, Verdict.FALSE):
                g = explore(est.clauses_, sig, CROSS_CHECK)
                ov = solve_explicit(g)
                entry["oracle"] = {"verdict": ov.value, "closed": g.closed}
                if not agrees(verdict, ov):
                    disagree = True
                    print(f"error: {sig}: reduced game says {verdict}, explicit oracle says {ov.value}",
                          file=sys.stderr)
            results.append(entry)
            codes.append(VERDICT_EXIT[verdict])
    finally:
        est.close()
    if cfg.format == "json":
        doc = {"kind": "solve", "status": est.saturation_.status, "iterations": est.n_iter_,
               "vertices": None if est.game_ is None else len(est.game_.owner),
               "results": results}
        emit(export.dumps(doc))
    else:
        for r in results:
            line = f"{r['query']}: {r['verdict']}"
            if r["verdict"] == Verdict.DIVERGED.value:
                line += f" (diverged after {est.n_iter_} iterations)"
            emit(line + "\n")
        if not est.converged_:
            print(f"diverged after {est.n_iter_} iterations; last splits:", file=sys.stderr)
            for e in est.saturation_.last_events:
                print(f"  {export.format_event(e)}", file=sys.stderr)
    return EXIT_SOLVER if disagree else combine(codes)


def _game_or_diverged(est):
    if est.converged_:
        return True
    print(f"diverged after {est.n_iter_} iterations", file=sys.stderr)
    return False


def cmd_prove(args, cfg):
    p = read_pbes(args.file)
    [sig] = check_signatures(args.query, p)
    est = fit_solver(p, cfg)
    try:
        if not _game_or_diverged(est):
            return EXIT_UNDECIDED
        root = est.vertex_of(sig)
        try:
            pg = extract_concrete(est.game_, est.strategy_, sig, cfg.budget, est.session_)
        except NotWinning:
            print(f"{sig} is false: it lies in box's winning region, so no proof graph exists",
                  file=sys.stderr)
            return EXIT_FALSE
        rsg = strategy_graph(est.game_, est.strategy_, root=root)
        reduced_ok = validate_reduced_strategy(rsg, est.session_)
    finally:
        est.close()
    concrete_ok = validate_concrete(pg, est.clauses_) if pg.closed else None
    if cfg.format == "json":
        doc = {"kind": "proof", "query": str(sig),
               "concrete": export.proof_to_json(pg, est.clauses_),
               "concrete_valid": None if concrete_ok is None else bool(concrete_ok),
               "strategy": export.game_to_json(rsg, est.strategy_),
               "strategy_valid": bool(reduced_ok)}
        emit(export.dumps(doc))
    elif cfg.format == "dot":
        emit(export.proof_to_dot(pg, est.clauses_) + export.game_to_dot(rsg, est.strategy_, "strategy"))
    else:
        status = "closed" if pg.closed else f"partial, {len(pg.frontier)} frontier vertices"
        emit(f"proof graph for {sig} ({status})\n")
        for v in pg.edges:
            if v in pg.annotation:
                k, w = pg.annotation[v]
                succ = ", ".join(str(x) for x in pg.edges[v])
                wit = f" w={list(w)}" if w else ""
                emit(f"  {v} [clause {k}{wit}] -> {succ}\n")
            else:
                emit(f"  {v} [frontier]\n")
        if concrete_ok is not None:
            emit(f"concrete check: {concrete_ok}\n")
        emit(f"reduced strategy graph: {len(rsg.owner)} vertices, check: {reduced_ok}\n")
    if (concrete_ok is not None and not concrete_ok) or not reduced_ok:
        return EXIT_SOLVER
    return EXIT_TRUE if pg.closed else EXIT_UNDECIDED


def cmd_validate(args, cfg):
    require_format(cfg, ("text", "json"))
    cp = to_clause_form(read_pbes(args.file))
    try:
        with open(args.proof) as fh:
            doc = json.load(fh)
        if doc.get("kind") == "proof":
            doc = doc["concrete"]
        pg = export.proof_from_json(doc)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, AttributeError) as exc:
        raise InputError(f"cannot read proof graph {args.proof}: {exc}") from exc
    result = validate_concrete(pg, cp)
    if cfg.format == "json":
        viol = None if result else {"kind": result.kind, "location": str(result.location),
                                    "detail": result.detail}
        emit(export.dumps({"kind": "validation", "ok": bool(result), "violation": viol}))
    else:
        emit(f"{result}\n")
    return EXIT_TRUE if result else EXIT_FALSE


def cmd_oracle(args, cfg):
    p = read_pbes(args.file)
    est = ExplicitSolver(cfg.value_cap, cfg.witness_cap, cfg.vertex_cap).fit(p)
    sigs = check_signatures(args.query, p)
    codes, docs, dots = [], [], []
    for sig in sigs:
        g = est.explore(sig)
        verdict = solve_explicit(g)
        codes.append({ExplicitVerdict.TRUE: EXIT_TRUE, ExplicitVerdict.FALSE: EXIT_FALSE,
                      ExplicitVerdict.UNKNOWN: EXIT_UNDECIDED}[verdict])
        if cfg.format == "json":
            docs.append(export.explicit_to_json(g, verdict))
        elif cfg.format == "dot":
            dots.append(export.explicit_to_dot(g))
        else:
            closed = "closed" if g.closed else "not closed"
            emit(f"{sig}: {verdict.value} ({closed}, {len(g.or_edges)} or-vertices, "
                 f"{len(g.and_edges)} and-vertices)\n")
    if cfg.format == "json":
        emit(export.dumps(docs[0] if len(docs) == 1 else {"kind": "explicit-games", "games": docs}))
    elif cfg.format == "dot":
        emit("".join(dots))
    return combine(codes)


def cmd_export(args, cfg):
    require_format(cfg, ("dot", "json"))
    p = read_pbes(args.file)
    sigs = check_signatures(args.query, p) if args.query else []
    if cfg.prune and not sigs:
        raise InputError("--prune needs at least one --query to prune towards")
    est = fit_solver(p, cfg)
    try:
        if not _game_or_diverged(est):
            return EXIT_UNDECIDED
        game = est.game_
        if cfg.prune:
            game = prune(game, [est.vertex_of(s) for s in sigs])
    finally:
        est.close()
    if cfg.format == "json":
        emit(export.dumps(export.game_to_json(game, est.strategy_)))
    else:
        emit(export.game_to_dot(game, est.strategy_))
    return EXIT_TRUE


# -- argument parsing --------------------------------------------------------------

def _positive(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("expected a non-negative integer")
    return v


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the input-error code instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_INPUT)


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with default settings")
    common.add_argument("--smt-cmd", dest="smt_cmd", help=f"solver command (default: ${ENV_SMT_CMD} or {DEFAULT_SMT_CMD!r})")
    common.add_argument("--smt-timeout-ms", dest="smt_timeout_ms", type=_positive)
    common.add_argument("--max-iter", dest="max_iter", type=_positive, help="refinement rounds before giving up")
    common.add_argument("--prune", action="store_const", const=True, help="drop game vertices unreachable from the query")
    common.add_argument("--trace", action="store_const", const=True, help="report block splits")
    common.add_argument("--format", choices=("text", "json", "dot"))
    common.add_argument("--value-cap", dest="value_cap", type=_positive)
    common.add_argument("--witness-cap", dest="witness_cap", type=_positive)
    common.add_argument("--vertex-cap", dest="vertex_cap", type=_positive)
    common.add_argument("--budget", type=_positive, help="signatures to expand when extracting a proof graph")
    common.add_argument("--no-cross-check", dest="cross_check", action="store_const", const=False,
                        help="skip the explicit oracle check in solve")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="epbes", description="Membership solving for existential PBESs.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help, query=None, default_format=None):
        sp = sub.add_parser(name, parents=[common], help=help)
        sp.add_argument("file", help="PBES source file")
        if query == "required":
            sp.add_argument("--query", action="append", required=True, help="signature such as 'X(2)'; repeatable")
        elif query == "optional":
            sp.add_argument("--query", action="append", help="signature such as 'X(2)'; repeatable")
        sp.set_defaults(func=func, default_format=default_format)
        return sp

    add("parse", cmd_parse, "parse and pretty-print")
    add("normalize", cmd_normalize, "print the clause form")
    add("refine", cmd_refine, "run partition refinement")
    add("solve", cmd_solve, "decide membership of signatures", query="required")
    sp = add("prove", cmd_prove, "extract and check a proof graph", query="required")
    sp.set_defaults(query_single=True)
    sp = add("validate", cmd_validate, "check a proof graph given as JSON")
    sp.add_argument("proof", help="proof graph JSON file")
    add("oracle", cmd_oracle, "bounded explicit exploration", query="required")
    add("export", cmd_export, "dump the reduced game", query="optional", default_format="dot")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if getattr(args, "query_single", False) and len(args.query) != 1:
            raise InputError("prove takes exactly one --query")
        return args.func(args, cfg)
    except (InputError, ParseError, UniversalNotAllowed, DnfTooLarge) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverUnknown as exc:
        print(f"unknown: {exc}", file=sys.stderr)
        return EXIT_UNDECIDED
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
