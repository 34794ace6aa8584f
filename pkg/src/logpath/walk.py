"""Interprocedural stepping rules shared by the simulator and the matchers.

A walk carries a stack of call-site ids next to the emulated method stack so
that Exit nodes return only to the continuation of the matching call site.
"""

from __future__ import annotations

from .graph import AppModel, CalleeKind, EdgeKind, Edge, Node, StmtKind, Supergraph
from .overlay import Embed, GraphOverlay


def walk_edges(overlay: GraphOverlay, node: Node, sites: tuple[int, ...], embed: Embed | None = None) -> list[Edge]:
    """Edges a concrete execution may take out of ``node``.

    ``embed`` is the update applied at a reflective/ICC site for the record it
    matched; when given, only its edges are followed. Static call sites with a
    call edge always enter the callee; their flow edge only names where the
    callee returns to.
    """
    if node.kind is StmtKind.EXIT:
        if not sites:
            return []
        cont = overlay.continuation(sites[-1])
        return [e for e in overlay.out_edges(node.id) if e.kind is EdgeKind.RETURN and e.dst == cont]
    if embed is not None:
        return [e for e in embed.edges if e.kind is not EdgeKind.ICC]
    edges = overlay.out_edges(node.id)
    callee = node.statement.callee
    if callee is not None and callee.kind is CalleeKind.STATIC:
        calls = [e for e in edges if e.kind is EdgeKind.CALL]
        if calls:
            return calls
    return [e for e in edges if e.kind is EdgeKind.FLOW]


def silent_methods(model: AppModel) -> frozenset:
    """Signatures of methods that can run Entry to Exit without emitting a record.

    Cached on the model. A method counts as silent if it is silent in any
    supergraph that holds a copy of it.
    """
    cached = getattr(model, "_silent_methods", None)
    if cached is not None:
        return cached
    silent: set = set()
    changed = True
    while changed:
        changed = False
        for sg in model.supergraphs.values():
            for sig, ids in sg.method_partition.items():
                if sig in silent or sig not in sg.entry_of or sig not in sg.exit_of:
                    continue
                if _silent_in(model, sg, sig, silent):
                    silent.add(sig)
                    changed = True
    result = frozenset(silent)
    model._silent_methods = result
    return result


def _silent_in(model: AppModel, sg: Supergraph, sig, silent: set) -> bool:
    entry, exit_ = sg.entry_of[sig], sg.exit_of[sig]
    seen = {entry}
    stack = [entry]
    while stack:
        cur = stack.pop()
        if cur == exit_:
            return True
        node = sg.nodes[cur]
        if model.is_logged(node):
            continue
        callee = node.statement.callee
        if callee is not None and callee.kind is CalleeKind.STATIC:
            targets = [sg.nodes[e.dst].method.signature for e in sg.out_edges(cur) if e.kind is EdgeKind.CALL]
            if targets and not any(t in silent for t in targets):
                continue
        for nxt in sg.flow_successors(cur):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return False
