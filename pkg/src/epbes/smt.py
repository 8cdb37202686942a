"""SMT-LIB2 encoding and a persistent child-process solver session.

Naturals are solver integers; every declared constant and every quantified
Nat variable carries an explicit ``>= 0`` constraint.  Monus becomes an
``ite`` and ``mod`` by a constant is native.  Lambda-bound sets referenced
through :class:`~epbes.pbes.Apply` are emitted once per session as
``define-fun`` macros, so formulas stay linear in size however deeply block
definitions nest.

Queries are separated by ``reset`` rather than ``push``/``pop``: z3 answers
``unknown`` on quantified arithmetic once it is in incremental mode.
"""
from __future__ import annotations

import logging
import os
import queue
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass, field

from .pbes import (
    Add, And, Apply, BoolLit, Call, Cmp, Exists, Forall, Mod, Monus, NatLit,
    Not, Or, Scale, Sort, Var,
)

log = logging.getLogger(__name__)

DEFAULT_SMT_CMD = "z3 -in -smt2"
ENV_SMT_CMD = "EPBES_SMT_CMD"
LOGIC = "LIA"
# quantifier elimination followed by context-aware cleanup of the result
ELIMINATE_TACTIC = ("(then simplify qe simplify ctx-simplify propagate-ineqs simplify "
                    "ctx-solver-simplify simplify)")
# a second eliminator, tried when the first one's result fails the equivalence check
FALLBACK_TACTIC = "(then simplify qe2 simplify ctx-simplify simplify)"


class SolverError(RuntimeError):
    """The solver process crashed or violated the protocol."""


class SolverUnknown(RuntimeError):
    """The solver could not decide a query; carries the offending script."""

    def __init__(self, message, script=""):
        super().__init__(message)
        self.script = script


def symbol(name: str) -> str:
    return f"|{name}|"


def smt_sort(s: Sort) -> str:
    return "Bool" if s is Sort.BOOL else "Int"


_CMP = {"=": "=", "!=": "distinct", "<": "<", "<=": "<=", ">": ">", ">=": ">="}


def to_smt(e, define) -> str:
    """Render an expression; ``define(target)`` returns the macro name of a set."""
    if isinstance(e, NatLit):
        return str(e.value)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, Var):
        return symbol(e.name)
    if isinstance(e, Add):
        return f"(+ {to_smt(e.left, define)} {to_smt(e.right, define)})"
    if isinstance(e, Monus):
        a, b = to_smt(e.left, define), to_smt(e.right, define)
        return f"(ite (>= {a} {b}) (- {a} {b}) 0)"
    if isinstance(e, Scale):
        return f"(* {e.factor} {to_smt(e.arg, define)})"
    if isinstance(e, Mod):
        return f"(mod {to_smt(e.arg, define)} {e.modulus})"
    if isinstance(e, Cmp):
        return f"({_CMP[e.op]} {to_smt(e.left, define)} {to_smt(e.right, define)})"
    if isinstance(e, Not):
        return f"(not {to_smt(e.arg, define)})"
    if isinstance(e, (And, Or)):
        op = "and" if isinstance(e, And) else "or"
        return f"({op} {' '.join(to_smt(a, define) for a in e.args)})"
    if isinstance(e, (Exists, Forall)):
        v = symbol(e.var)
        body = to_smt(e.body, define)
        if isinstance(e, Exists):
            if e.sort is Sort.NAT:
                body = f"(and (>= {v} 0) {body})"
            return f"(exists (({v} {smt_sort(e.sort)})) {body})"
        if e.sort is Sort.NAT:
            body = f"(=> (>= {v} 0) {body})"
        return f"(forall (({v} {smt_sort(e.sort)})) {body})"
    if isinstance(e, Apply):
        name = define(e.target)
        if not e.args:
            return name
        return f"({name} {' '.join(to_smt(a, define) for a in e.args)})"
    if isinstance(e, Call):
        raise TypeError(f"predicate call {e.name} cannot be sent to the solver")
    raise TypeError(f"unknown expression node {e!r}")


def format_value_smt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


# -- s-expressions ---------------------------------------------------------

def parse_sexpr(text: str):
    """Parse one s-expression into nested lists of atom strings."""
    tokens = _sexpr_tokens(text)
    pos = 0

    def read():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            out = []
            while tokens[pos] != ")":
                out.append(read())
            pos += 1
            return out
        return tok

    return read()


def _sexpr_tokens(text):
    out, i, n = [], 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "()":
            out.append(c)
            i += 1
        elif c == '"':
            j = i + 1
            while j < n:
                if text[j] == '"':
                    if j + 1 < n and text[j + 1] == '"':
                        j += 2
                        continue
                    break
                j += 1
            out.append(text[i:j + 1])
            i = j + 1
        elif c == "|":
            j = text.index("|", i + 1)
            out.append(text[i + 1:j])
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in '()"|':
                j += 1
            out.append(text[i:j])
            i = j
    return out


def _balance(line, depth, in_str, in_bar):
    for c in line:
        if in_str:
            if c == '"':
                in_str = False
        elif in_bar:
            if c == "|":
                in_bar = False
        elif c == '"':
            in_str = True
        elif c == "|":
            in_bar = True
        elif c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
    return depth, in_str, in_bar


def _decode_value(v):
    if v == "true":
        return True
    if v == "false":
        return False
    if isinstance(v, list):
        if len(v) == 2 and v[0] == "-":
            return -_decode_value(v[1])
        raise SolverError(f"unexpected model value {v!r}")
    return int(v)


# -- results ---------------------------------------------------------------

SAT, UNSAT, UNKNOWN = "sat", "unsat", "unknown"
_SYNC = "epbes-sync"


@dataclass
class CheckResult:
    status: str
    model: dict = field(default_factory=dict)
    script: str = ""

    @property
    def sat(self):
        return self.status == SAT

    @property
    def unsat(self):
        return self.status == UNSAT


@dataclass
class SolverStats:
    queries: int = 0
    seconds: float = 0.0
    restarts: int = 0


def resolve_command(cmd=None) -> list:
    if cmd is None:
        cmd = os.environ.get(ENV_SMT_CMD) or DEFAULT_SMT_CMD
    if isinstance(cmd, str):
        cmd = shlex.split(cmd)
    return list(cmd)


class SolverSession:
    """One SMT-LIB2 solver child process; each query runs from a fresh reset.

    Not thread-safe: use one session per worker.
    """

    def __init__(self, cmd=None, timeout_ms: int = 30000):
        self.cmd = resolve_command(cmd)
        self.timeout_ms = timeout_ms
        self.stats = SolverStats()
        self._defined = {}  # SetExpr uid -> (macro name, define-fun, dependency closure)
        self._needed = set()
        self._proc = None
        self._lines = None
        self._start()

    # -- process management ----------------------------------------------
    def _start(self):
        try:
            self._proc = subprocess.Popen(
                self.cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL, text=True, bufsize=1,
            )
        except OSError as exc:
            raise SolverError(f"cannot start solver {self.cmd!r}: {exc}") from exc
        self._lines = queue.Queue()
        threading.Thread(target=self._pump, args=(self._proc, self._lines), daemon=True).start()
        self._run(self._preamble())

    def _preamble(self):
        preamble = ["(set-option :print-success true)", f"(set-logic {LOGIC})"]
        if self.timeout_ms and "z3" in os.path.basename(self.cmd[0]):
            preamble.append(f"(set-option :timeout {int(self.timeout_ms)})")
        return preamble

    @staticmethod
    def _pump(proc, lines):
        # the reader thread owns stdout and closes it at end of stream
        with proc.stdout:
            for line in proc.stdout:
                lines.put(line)
        lines.put(None)

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            try:
                self._proc.stdin.write("(exit)\n")
                self._proc.stdin.flush()
                self._proc.wait(timeout=2)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
                self._proc.wait()
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
        self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

    def restart(self):
        if self._proc is not None:
            self._proc.kill()
            self._proc.wait()
        self.close()
        self.stats.restarts += 1
        self._start()

    # -- protocol -----------------------------------------------------------
    def _read_response(self, deadline):
        buf, depth, in_str, in_bar = [], 0, False, False
        while True:
            remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
            try:
                line = self._lines.get(timeout=remaining)
            except queue.Empty:
                raise TimeoutError from None
            if line is None:
                raise SolverError("solver process terminated")
            if not buf and not line.strip():
                continue
            buf.append(line)
            depth, in_str, in_bar = _balance(line, depth, in_str, in_bar)
            if depth <= 0 and not in_str and not in_bar:
                return "".join(buf).strip()

    def _reset(self, deadline):
        # solvers differ on whether reset keeps print-success, so resync on a marker
        self._send(["(reset)"] + self._preamble() + [f'(echo "{_SYNC}")'])
        while True:
            resp = self._read_response(deadline)
            if resp.strip('"') == _SYNC:
                return
            if resp.startswith("(error"):
                raise SolverError(f"solver rejected reset preamble: {resp}")

    def _send(self, commands):
        try:
            self._proc.stdin.write("\n".join(commands) + "\n")
            self._proc.stdin.flush()
        except OSError as exc:
            raise SolverError(f"solver pipe closed: {exc}") from exc

    def _run(self, commands, deadline=None):
        self._send(commands)
        out = []
        for cmd in commands:
            resp = self._read_response(deadline)
            if resp.startswith("(error"):
                raise SolverError(f"solver rejected {cmd[:200]!r}: {resp}")
            out.append(resp)
        return out

    # -- definitions ----------------------------------------------------------
    def define(self, target) -> str:
        """Register a macro for a lambda-bound set and return its name."""
        entry = self._defined.get(target.uid)
        if entry is not None:
            self._needed.add(target.uid)
            return entry[0]
        deps = set()
        outer, self._needed = self._needed, deps
        try:
            body = to_smt(target.body, self.define)
        finally:
            self._needed = outer
        name = symbol(f"set!{target.uid}")
        params = " ".join(f"({symbol(n)} {smt_sort(s)})" for n, s in target.binders)
        cmd = f"(define-fun {name} ({params}) Bool {body})"
        closure = set(deps)
        for d in deps:
            closure |= self._defined[d][2]
        self._defined[target.uid] = (name, cmd, frozenset(closure))
        self._needed.add(target.uid)
        return name

    def _definitions_for(self, uids):
        needed = set(uids)
        for u in uids:
            needed |= self._defined[u][2]
        # uids grow monotonically and every macro only refers to older ones
        return [self._defined[u][1] for u in sorted(needed)]

    # -- queries ----------------------------------------------------------------
    def check(self, formula, decls, want=()) -> CheckResult:
        """Decide satisfiability of ``formula`` over the declared constants.

        ``decls`` is a sequence of (name, Sort); ``want`` names constants
        whose model values are returned on sat.  Each query starts from a
        ``reset`` solver state with only the macros it needs.
        """
        self._needed = set()
        body = to_smt(formula, self.define)
        cmds = self._definitions_for(self._needed)
        for n, s in decls:
            cmds.append(f"(declare-const {symbol(n)} {smt_sort(s)})")
            if s is Sort.NAT:
                cmds.append(f"(assert (>= {symbol(n)} 0))")
        cmds.append(f"(assert {body})")
        cmds.append("(check-sat)")
        script = "\n".join(self._preamble()[1:] + cmds)
        self.stats.queries += 1
        t0 = time.monotonic()
        hard = None
        if self.timeout_ms:
            hard = t0 + 2 * self.timeout_ms / 1000.0 + 5.0
        try:
            self._reset(hard)
            resp = self._run(cmds, hard)
            status = resp[-1]
            model = {}
            if status == SAT and want:
                [vals] = self._run([f"(get-value ({' '.join(symbol(n) for n in want)}))"], hard)
                for name, val in parse_sexpr(vals):
                    model[name] = _decode_value(val)
        except TimeoutError:
            log.warning("solver timed out; restarting")
            self.restart()
            status, model = UNKNOWN, {}
        except SolverError:
            self.restart()
            raise
        finally:
            self.stats.seconds += time.monotonic() - t0
        if status not in (SAT, UNSAT, UNKNOWN):
            raise SolverError(f"unexpected check-sat response {status!r}")
        return CheckResult(status, model, script)

    @property
    def supports_elimination(self):
        return "z3" in os.path.basename(self.cmd[0])

    def eliminate(self, formula, decls, tactic=ELIMINATE_TACTIC):
        """Quantifier-free goals equivalent to ``formula`` (z3 only), or None.

        Uses z3's ``apply`` command with quantifier elimination; other
        solvers, errors and timeouts all yield None.
        """
        if not self.supports_elimination:
            return None
        self._needed = set()
        body = to_smt(formula, self.define)
        cmds = self._definitions_for(self._needed)
        for n, s in decls:
            cmds.append(f"(declare-const {symbol(n)} {smt_sort(s)})")
            if s is Sort.NAT:
                cmds.append(f"(assert (>= {symbol(n)} 0))")
        cmds.append(f"(assert {body})")
        cmds.append(f"(apply {tactic})")
        t0 = time.monotonic()
        hard = t0 + 2 * self.timeout_ms / 1000.0 + 5.0 if self.timeout_ms else None
        try:
            self._reset(hard)
            resp = self._run(cmds, hard)[-1]
        except TimeoutError:
            self.restart()
            return None
        except SolverError:
            self.restart()
            return None
        finally:
            self.stats.seconds += time.monotonic() - t0
        tree = parse_sexpr(resp)
        if not tree or tree[0] != "goals":
            return None
        goals = []
        for g in tree[1:]:
            if not (isinstance(g, list) and g and g[0] == "goal"):
                return None
            items, rest = [], g[1:]
            while rest:
                if isinstance(rest[0], str) and rest[0].startswith(":"):
                    rest = rest[2:]
                    continue
                items.append(rest[0])
                rest = rest[1:]
            goals.append(items)
        return goals


# -- reading solver terms back -------------------------------------------------

class Untranslatable(ValueError):
    """A solver term falls outside the expression language."""


def _is_int_literal(t):
    if isinstance(t, str):
        return t.isdigit()
    return isinstance(t, list) and len(t) == 2 and t[0] == "-" and _is_int_literal(t[1])


def _int_literal(t):
    return int(t) if isinstance(t, str) else -_int_literal(t[1])


def _replace(t, old, new):
    if t is old:
        return new
    if isinstance(t, list):
        return [_replace(x, old, new) for x in t]
    return t


def _expand_lets(t, env=None):
    env = env or {}
    if isinstance(t, str):
        return env.get(t, t)
    if t and t[0] == "let":
        inner = dict(env)
        for name, val in t[1]:
            inner[name] = _expand_lets(val, env)
        return _expand_lets(t[2], inner)
    return [_expand_lets(x, env) for x in t]


class _Reader:
    def __init__(self, sorts):
        self.sorts = sorts

    def is_bool(self, t):
        if isinstance(t, str):
            return t in ("true", "false") or self.sorts.get(t) is Sort.BOOL
        head = t[0]
        if isinstance(head, list):
            return True
        if head == "ite":
            return self.is_bool(t[2])
        return head in ("not", "and", "or", "=>", "xor", "=", "distinct", "<=", ">=", "<", ">",
                        "exists", "forall")

    def boolean(self, t):
        if isinstance(t, str):
            if t == "true":
                return BoolLit(True)
            if t == "false":
                return BoolLit(False)
            if self.sorts.get(t) is Sort.BOOL:
                return Var(t)
            raise Untranslatable(f"unexpected atom {t!r}")
        head, args = t[0], t[1:]
        if self._is_atom(t):
            ite = self._int_ite(args)
            if ite is not None:
                # case split on an integer-valued if-then-else inside the atom
                c = self.boolean(ite[1])
                yes = self.boolean(_replace(t, ite, ite[2]))
                no = self.boolean(_replace(t, ite, ite[3]))
                return Or((And((c, yes)), And((Not(c), no))))
        if isinstance(head, list):
            if len(head) == 3 and head[:2] == ["_", "divisible"] and len(args) == 1:
                return Cmp("=", self.modulo(args[0], int(head[2])), NatLit(0))
            raise Untranslatable(f"unsupported operator {head!r}")
        if head == "not":
            return Not(self.boolean(args[0]))
        if head in ("and", "or"):
            parts = tuple(self.boolean(a) for a in args)
            if not parts:
                return BoolLit(head == "and")
            return parts[0] if len(parts) == 1 else (And if head == "and" else Or)(parts)
        if head == "=>":
            return Or((Not(self.boolean(args[0])), self.boolean(args[1])))
        if head == "xor":
            a, b = self.boolean(args[0]), self.boolean(args[1])
            return Or((And((a, Not(b))), And((Not(a), b))))
        if head == "ite" and self.is_bool(t[2]):
            c, a, b = (self.boolean(x) for x in args)
            return Or((And((c, a)), And((Not(c), b))))
        if head in ("=", "distinct") and len(args) == 2:
            if self.is_bool(args[0]) or self.is_bool(args[1]):
                a, b = self.boolean(args[0]), self.boolean(args[1])
                same = Or((And((a, b)), And((Not(a), Not(b)))))
            else:
                same = self.compare("=", args[0], args[1])
            return same if head == "=" else Not(same)
        if head in ("<=", ">=", "<", ">") and len(args) == 2:
            return self.compare(head, args[0], args[1])
        raise Untranslatable(f"unsupported operator {head!r}")

    def _is_atom(self, t):
        head, args = t[0], t[1:]
        if isinstance(head, list):
            return head[:2] == ["_", "divisible"]
        if head in ("<=", ">=", "<", ">"):
            return True
        return head in ("=", "distinct") and not any(self.is_bool(a) for a in args)

    def _int_ite(self, terms):
        for t in terms:
            if isinstance(t, list) and t:
                if t[0] == "ite" and not self.is_bool(t[2]):
                    return t
                found = self._int_ite(t[1:])
                if found is not None:
                    return found
        return None

    def linear(self, t):
        """Map a term to {atom: coefficient}, with the constant under None."""
        if _is_int_literal(t):
            return {None: _int_literal(t)}
        if isinstance(t, str):
            if self.sorts.get(t) is Sort.NAT:
                return {Var(t): 1}
            raise Untranslatable(f"unexpected integer atom {t!r}")
        head, args = t[0], t[1:]
        if head == "+":
            out = {}
            for a in args:
                for k, c in self.linear(a).items():
                    out[k] = out.get(k, 0) + c
            return out
        if head == "-":
            first = self.linear(args[0])
            if len(args) == 1:
                return {k: -c for k, c in first.items()}
            out = dict(first)
            for a in args[1:]:
                for k, c in self.linear(a).items():
                    out[k] = out.get(k, 0) - c
            return out
        if head == "*":
            consts = [a for a in args if _is_int_literal(a)]
            others = [a for a in args if not _is_int_literal(a)]
            if len(others) > 1:
                raise Untranslatable("non-linear multiplication")
            factor = 1
            for c in consts:
                factor *= _int_literal(c)
            if not others:
                return {None: factor}
            return {k: factor * c for k, c in self.linear(others[0]).items()}
        if head == "mod" and len(args) == 2 and _is_int_literal(args[1]):
            return {self.modulo(args[0], _int_literal(args[1])): 1}
        raise Untranslatable(f"unsupported integer operator {head!r}")

    def modulo(self, t, m):
        if m <= 0:
            raise Untranslatable("non-positive modulus")
        lin = {k: c % m for k, c in self.linear(t).items()}
        body = _nat_sum({k: c for k, c in lin.items() if c})
        if isinstance(body, NatLit):
            return NatLit(body.value % m)
        return Mod(body, m)

    def compare(self, op, a, b):
        diff = self.linear(a)
        for k, c in self.linear(b).items():
            diff[k] = diff.get(k, 0) - c
        pos = {k: c for k, c in diff.items() if c > 0}
        neg = {k: -c for k, c in diff.items() if c < 0}
        left, right = _nat_sum(pos), _nat_sum(neg)
        if isinstance(left, NatLit) and isinstance(right, NatLit):
            return BoolLit(_CMP_EVAL[op](left.value, right.value))
        return Cmp(op, left, right)


_CMP_EVAL = {"=": lambda a, b: a == b, "<=": lambda a, b: a <= b, ">=": lambda a, b: a >= b,
             "<": lambda a, b: a < b, ">": lambda a, b: a > b}


def _atom_key(k):
    return (0, k.name) if isinstance(k, Var) else (1, repr(k))


def _nat_sum(coeffs):
    const = coeffs.pop(None, 0)
    terms = []
    for k in sorted(coeffs, key=_atom_key):
        c = coeffs[k]
        terms.append(k if c == 1 else Scale(c, k))
    if const or not terms:
        terms.append(NatLit(const))
    out = terms[0]
    for x in terms[1:]:
        out = Add(out, x)
    return out


def from_smt(term, sorts):
    """Translate a quantifier-free solver term over ``sorts`` ({name: Sort})."""
    return _Reader(sorts).boolean(_expand_lets(term))
