"""DOT and JSON renderings of games, partition families and proof graphs.

JSON documents carry a ``kind`` field and validate against the schema files
shipped in ``epbes/schemas``.
"""
from __future__ import annotations

import json
from importlib import resources

from .game import CIRCLE, PLAYER_NAMES
from .oracle import DEAD, AndVertex
from .parser import ParseError, format_expr, format_params
from .pbes import Signature
from .proof import ConcreteProofGraph
from .refinement import OR

SCHEMAS = ("game", "proof", "explicit", "family", "solve", "validate", "pbes", "clauses")


def load_schema(name):
    text = resources.files("epbes").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _dot_str(s):
    return '"' + str(s).replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def block_formula(b) -> str:
    return f"\\{format_params(b.shape.binders)}. {format_expr(b.shape.body)}"


# -- reduced games ---------------------------------------------------------------

def game_to_json(game, strategy=None) -> dict:
    cp = game.cp
    vertices = []
    for v in sorted(game.owner):
        b = game.blocks[v]
        entry = {
            "id": v,
            "player": PLAYER_NAMES[game.owner[v]],
            "priority": game.priority[v],
            "block": b.kind,
            "equation": cp.names[b.eq],
            "clause": b.clause,
            "formula": block_formula(b),
        }
        if strategy is not None:
            entry["winner"] = PLAYER_NAMES[strategy.winner[v]]
            entry["choice"] = strategy.choice(game.owner[v]).get(v)
        vertices.append(entry)
    edges = [[v, w] for v in sorted(game.edges) for w in game.edges[v]]
    return {"kind": "reduced-game", "vertices": vertices, "edges": edges}


def game_to_dot(game, strategy=None, name="reduced") -> str:
    lines = [f"digraph {name} {{"]
    for v in sorted(game.owner):
        b = game.blocks[v]
        shape = "ellipse" if b.kind == OR else "box"
        head = f"{game.cp.names[b.eq]}(B{b.id})" if b.kind == OR else f"B{b.id}"
        label = f"{head}  prio {game.priority[v]}\n{block_formula(b)}"
        attrs = [f"shape={shape}", f"label={_dot_str(label)}"]
        if strategy is not None and strategy.winner.get(v) == CIRCLE:
            attrs.append("style=bold")
        lines.append(f"  v{v} [{', '.join(attrs)}];")
    chosen = set()
    if strategy is not None:
        chosen = {(v, w) for v, w in strategy.circle.items()}
    for v in sorted(game.edges):
        for w in game.edges[v]:
            extra = " [style=bold]" if (v, w) in chosen else ""
            lines.append(f"  v{v} -> v{w}{extra};")
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- partition families ------------------------------------------------------------

def family_to_json(result, cp, trace=False) -> dict:
    fam = result.family
    doc = {
        "kind": "partition-family",
        "status": result.status,
        "iterations": result.iterations,
        "or_blocks": [{"id": b.id, "equation": cp.names[b.eq], "formula": block_formula(b)}
                      for bs in fam.phi for b in bs],
        "and_blocks": [{"id": b.id, "equation": cp.names[b.eq], "clause": b.clause,
                        "formula": block_formula(b)}
                       for key in sorted(fam.psi) for b in fam.psi[key]],
    }
    if trace:
        doc["trace"] = [dict(e) for e in result.events]
    return doc


def format_family(result, cp) -> str:
    fam = result.family
    out = [f"{result.status} after {result.iterations} iterations"]
    for bs in fam.phi:
        for b in bs:
            out.append(f"  {cp.names[b.eq]}  B{b.id} = {block_formula(b)}")
    for key in sorted(fam.psi):
        for b in fam.psi[key]:
            out.append(f"  {cp.names[b.eq]}#{b.clause}  B{b.id} = {block_formula(b)}")
    return "\n".join(out) + "\n"


def format_event(e) -> str:
    owner = "/".join(str(x) for x in e["owner"])
    src = "/".join(str(x) for x in e["splitter"])
    left, right = e["blocks"]
    return (f"iteration {e['iteration']} {e['phase']}: B{e['parent']} of {owner} "
            f"split by {src} into B{left}, B{right}")


# -- concrete proof graphs -----------------------------------------------------------

def proof_to_json(pg: ConcreteProofGraph, cp) -> dict:
    vertices = []
    for v in pg.edges:
        k, w = pg.annotation.get(v, (None, None))
        vertices.append({
            "id": str(v),
            "predicate": v.name,
            "values": list(v.values),
            "rank": cp.rank(v.name),
            "clause": k,
            "witness": None if w is None else list(w),
        })
    edges = [[str(v), str(w)] for v in pg.edges for w in pg.edges[v]]
    return {
        "kind": "proof-graph",
        "root": str(pg.root),
        "closed": pg.closed,
        "vertices": vertices,
        "edges": edges,
        "frontier": [str(v) for v in pg.frontier],
    }


def proof_from_json(doc) -> ConcreteProofGraph:
    """Rebuild a proof graph; raises ParseError on dangling references."""
    by_id = {}
    for entry in doc["vertices"]:
        by_id[entry["id"]] = Signature(entry["predicate"], tuple(entry["values"]))
    if doc["root"] not in by_id:
        raise ParseError("unbound", f"root {doc['root']!r} is not a listed vertex")
    pg = ConcreteProofGraph(by_id[doc["root"]])
    for entry in doc["vertices"]:
        v = by_id[entry["id"]]
        pg.edges[v] = []
        if entry.get("clause") is not None:
            pg.annotation[v] = (entry["clause"], tuple(entry.get("witness") or ()))
    for a, b in doc["edges"]:
        if a not in by_id or b not in by_id:
            raise ParseError("unbound", f"edge {a!r} -> {b!r} mentions an unlisted vertex")
        pg.edges[by_id[a]].append(by_id[b])
    pg.frontier = [by_id[x] for x in doc.get("frontier", [])]
    return pg


def proof_to_dot(pg: ConcreteProofGraph, cp, name="proof") -> str:
    ids = {v: f"s{n}" for n, v in enumerate(pg.edges)}
    frontier = set(pg.frontier)
    lines = [f"digraph {name} {{"]
    for v, sid in ids.items():
        label = f"{v}\nrank {cp.rank(v.name)}"
        if v in pg.annotation:
            k, w = pg.annotation[v]
            label += f"\nclause {k}" + (f" w={list(w)}" if w else "")
        style = ", style=dashed" if v in frontier else ""
        lines.append(f"  {sid} [shape=ellipse, label={_dot_str(label)}{style}];")
    for v, ws in pg.edges.items():
        for w in ws:
            lines.append(f"  {ids[v]} -> {ids[w]};")
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- explicit games ----------------------------------------------------------------

def explicit_label(x, cp) -> str:
    if isinstance(x, AndVertex):
        vals = ", ".join(str(v).lower() for v in x.values)
        wit = ", ".join(str(v).lower() for v in x.witness)
        return f"({cp.names[x.eq]}, {x.clause}, [{vals}], [{wit}])"
    if x == DEAD:
        return "dead"
    return str(x)


def explicit_to_json(g, verdict) -> dict:
    pgame = g.to_parity_game()
    vertices = []
    for x in pgame.owner:
        vertices.append({
            "id": explicit_label(x, g.cp),
            "player": PLAYER_NAMES[pgame.owner[x]],
            "priority": pgame.priority[x],
            "frontier": x in g.frontier,
        })
    edges = [[explicit_label(x, g.cp), explicit_label(y, g.cp)]
             for x in pgame.owner for y in pgame.edges[x]]
    b = g.bounds
    return {
        "kind": "explicit-game",
        "root": str(g.root),
        "verdict": verdict.value,
        "closed": g.closed,
        "bounds": {"value_cap": b.value_cap, "witness_cap": b.witness_cap, "vertex_cap": b.vertex_cap},
        "vertices": vertices,
        "edges": edges,
    }


def explicit_to_dot(g, name="explicit") -> str:
    pgame = g.to_parity_game()
    ids = {x: f"x{n}" for n, x in enumerate(pgame.owner)}
    lines = [f"digraph {name} {{"]
    for x, xid in ids.items():
        shape = "ellipse" if pgame.owner[x] == CIRCLE else "box"
        style = ", style=dashed" if x in g.frontier else ""
        lines.append(f"  {xid} [shape={shape}, label={_dot_str(explicit_label(x, g.cp))}{style}];")
    for x in pgame.owner:
        for y in pgame.edges[x]:
            lines.append(f"  {ids[x]} -> {ids[y]};")
    lines.append("}")
    return "\n".join(lines) + "\n"
