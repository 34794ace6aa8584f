"""Programmatic construction of app models (fixtures and the generator)."""

from __future__ import annotations

from itertools import count
from typing import Iterable

from .graph import (
    ApiSignature,
    AppModel,
    CalleeKind,
    CalleeRef,
    Edge,
    EdgeKind,
    MethodId,
    Node,
    Statement,
    StmtKind,
    Supergraph,
)

INVOKE = ApiSignature.parse("java.lang.reflect.Method.invoke(Ljava/lang/Object;[Ljava/lang/Object;)Ljava/lang/Object;")
START_ACTIVITY = ApiSignature.parse("android.content.Context.startActivity(Landroid/content/Intent;)V")


def sig(text: str | ApiSignature) -> ApiSignature:
    return text if isinstance(text, ApiSignature) else ApiSignature.parse(text)


class MethodBuilder:
    """Adds nodes of one method. Flow edges are explicit via :meth:`flow` or
    implicit via :meth:`chain`."""

    def __init__(self, owner: "SupergraphBuilder", signature: ApiSignature):
        self.owner = owner
        self.signature = signature
        self.entry = self._add(StmtKind.ENTRY, f"entry {signature.short}")
        self.exit_id: int | None = None

    def _add(self, kind, display, condition=None, callee=None, targets=()) -> int:
        node_id = next(self.owner.ids)
        stmt = Statement(kind, display=display, condition=condition, callee=callee)
        self.owner.nodes.append(Node(node_id, MethodId(self.signature), stmt, tuple(targets)))
        return node_id

    def plain(self, display: str = "stmt") -> int:
        return self._add(StmtKind.PLAIN, display)

    def branch(self, condition: str = "cond") -> int:
        return self._add(StmtKind.BRANCH, f"if ({condition})", condition=condition)

    def framework(self, api, display: str | None = None) -> int:
        api = sig(api)
        return self._add(StmtKind.CALL, display or f"{api.short}()", callee=CalleeRef(CalleeKind.FRAMEWORK, target=api))

    def static(self, target, display: str | None = None) -> int:
        target = sig(target)
        node_id = self._add(StmtKind.CALL, display or f"{target.short}()", callee=CalleeRef(CalleeKind.STATIC, target=target))
        self.owner.static_sites.append((node_id, target))
        return node_id

    def reflective(self, targets: Iterable[str] = (), api=INVOKE, display: str | None = None) -> int:
        return self._add(StmtKind.CALL, display or "m.invoke(obj, args)",
                         callee=CalleeRef(CalleeKind.REFLECTIVE, api=sig(api)), targets=targets)

    def icc(self, targets: Iterable[str] = (), api=START_ACTIVITY, display: str | None = None) -> int:
        return self._add(StmtKind.CALL, display or "startActivity(intent)",
                         callee=CalleeRef(CalleeKind.ICC, api=sig(api)), targets=targets)

    def exit(self) -> int:
        self.exit_id = self._add(StmtKind.EXIT, f"exit {self.signature.short}")
        return self.exit_id

    def flow(self, src: int, dst: int):
        self.owner.edges.append(Edge(src, dst, EdgeKind.FLOW))

    def chain(self, *ids: int):
        for a, b in zip(ids, ids[1:]):
            self.flow(a, b)


class SupergraphBuilder:
    def __init__(self, root, ids):
        self.root = sig(root)
        self.ids = ids
        self.nodes: list[Node] = []
        self.edges: list[Edge] = []
        self.methods: dict[ApiSignature, MethodBuilder] = {}
        self.static_sites: list[tuple[int, ApiSignature]] = []
        self.icc_edges: list[tuple[int, str]] = []

    def method(self, signature) -> MethodBuilder:
        signature = sig(signature)
        if signature in self.methods:
            raise ValueError(f"method {signature} already defined")
        mb = MethodBuilder(self, signature)
        self.methods[signature] = mb
        return mb

    def icc_guess(self, site: int, component: str):
        """Statically guessed ICC link from ``site`` to a component's callback."""
        self.icc_edges.append((site, component))

    def build(self, entries: dict[str, int]) -> Supergraph:
        edges = list(self.edges)
        flow_of = {e.src: e.dst for e in self.edges if e.kind is EdgeKind.FLOW}
        for site, target in self.static_sites:
            callee = self.methods.get(target)
            if callee is None:
                continue
            edges.append(Edge(site, callee.entry, EdgeKind.CALL))
            edges.append(Edge(callee.exit_id, flow_of[site], EdgeKind.RETURN))
        for site, component in self.icc_edges:
            edges.append(Edge(site, entries[component], EdgeKind.ICC))
        return Supergraph(MethodId(self.root), self.nodes, edges)


class ModelBuilder:
    def __init__(self, first_id: int = 1):
        self.ids = count(first_id)
        self.graphs: list[SupergraphBuilder] = []
        self.logged: set[ApiSignature] = set()
        self.prefixes: list[str] = []

    def supergraph(self, callback) -> SupergraphBuilder:
        sg = SupergraphBuilder(callback, self.ids)
        self.graphs.append(sg)
        return sg

    def log_apis(self, *apis):
        self.logged.update(sig(a) for a in apis)

    def build(self) -> AppModel:
        entries: dict[str, int] = {}
        for sg in self.graphs:
            entries.setdefault(sg.root.declaring_unit, sg.methods[sg.root].entry)
        supergraphs = {sg.root: sg.build(entries) for sg in self.graphs}
        callbacks = [sg.root for sg in self.graphs]
        return AppModel(supergraphs, callbacks, self.logged | set(callbacks), self.prefixes)
