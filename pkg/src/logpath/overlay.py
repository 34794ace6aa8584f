"""Copy-on-write graph overlay and the reflection/ICC successor updates.

The base supergraph is never mutated. Every update is memoized per
(call-site id, target) so re-applying it leaves the overlay unchanged.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .errors import ContractError, UnknownTargetError
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
from .logs import Des, IccLink, ReflectiveTarget


@dataclass(frozen=True)
class Embed:
    """Result of one memoized update: the walkable edges out of the call site
    for this target, and the overlay nodes created (in creation order)."""

    edges: tuple[Edge, ...]
    created: tuple[int, ...]

    @property
    def root(self) -> int:
        return self.edges[0].dst


class GraphOverlay:
    def __init__(self, base: Supergraph, first_id: int):
        self.base = base
        self.added_nodes: dict[int, Node] = {}
        self.added_edges: list[Edge] = []
        self.removed_edges: set[Edge] = set()
        self.embed_memo: dict[tuple[int, str], Embed] = {}
        self._added_out: dict[int, list[Edge]] = {}
        self._continuation: dict[int, int] = {}
        self._next_id = first_id

    def __contains__(self, node_id):
        return node_id in self.base.nodes or node_id in self.added_nodes

    def node(self, node_id: int) -> Node:
        node = self.base.nodes.get(node_id)
        if node is None:
            node = self.added_nodes.get(node_id)
        if node is None:
            raise KeyError(f"node {node_id} is not in the supergraph or its overlay")
        return node

    def allocate(self) -> int:
        node_id = self._next_id
        self._next_id += 1
        return node_id

    def add_node(self, node: Node):
        self.added_nodes[node.id] = node

    def add_edge(self, edge: Edge) -> Edge:
        if edge in self.removed_edges:
            self.removed_edges.discard(edge)
        elif edge not in self._added_out.get(edge.src, ()) and edge not in self.base.out_edges(edge.src):
            self.added_edges.append(edge)
            self._added_out.setdefault(edge.src, []).append(edge)
        return edge

    def remove_edge(self, edge: Edge):
        if edge in self.base.out_edges(edge.src):
            self.removed_edges.add(edge)
        elif edge in self._added_out.get(edge.src, ()):
            self.added_edges.remove(edge)
            self._added_out[edge.src].remove(edge)

    def out_edges(self, node_id: int) -> list[Edge]:
        """Active out-edges: surviving base edges, then overlay edges."""
        if node_id not in self:
            raise KeyError(f"node {node_id} is not in the supergraph or its overlay")
        base = self.base.out_edges(node_id)
        if self.removed_edges:
            base = [e for e in base if e not in self.removed_edges]
        return list(base) + self._added_out.get(node_id, [])

    def in_degree(self, node_id: int) -> int:
        count = self.base.in_degree(node_id)
        count -= sum(1 for e in self.removed_edges if e.dst == node_id)
        count += sum(1 for e in self.added_edges if e.dst == node_id)
        return count

    def continuation(self, node_id: int) -> int:
        """The original flow successor of a call node (where callees return to)."""
        for edge in self.base.out_edges(node_id):
            if edge.kind is EdgeKind.FLOW:
                return edge.dst
        if node_id in self._continuation:
            return self._continuation[node_id]
        raise KeyError(f"call node {node_id} has no flow successor")

    def signature(self) -> tuple:
        """Hashable summary, used for equality checks in tests."""
        return (
            tuple(sorted((n.id, str(n.method), n.statement.display) for n in self.added_nodes.values())),
            tuple(self.added_edges),
            tuple(sorted(self.removed_edges)),
        )


def neighbors(g: Supergraph, overlay: GraphOverlay | None, n: Node | int) -> list[Node]:
    """Successors of ``n`` through base edges (minus removed) then overlay edges."""
    node_id = n if isinstance(n, int) else n.id
    if overlay is None:
        if node_id not in g.nodes:
            raise KeyError(f"node {node_id} is not in the supergraph")
        return [_lookup(g, None, e.dst) for e in g.out_edges(node_id)]
    if overlay.base is not g:
        raise ContractError("overlay belongs to a different supergraph")
    return [_lookup(g, overlay, e.dst) for e in overlay.out_edges(node_id)]


def _lookup(g, overlay, node_id):
    if overlay is not None:
        try:
            return overlay.node(node_id)
        except KeyError:
            pass
    node = g.nodes.get(node_id)
    if node is None:
        # ICC links point at Entry nodes of other callback supergraphs.
        if g.model is None:
            raise KeyError(f"node {node_id} is outside this supergraph")
        node = g.model.node(node_id)
    return node


# -- updates ------------------------------------------------------------------

def _memo_key(des: Des) -> str:
    special = des.special
    if isinstance(special, ReflectiveTarget):
        return "reflect:" + str(special.signature)
    return "icc:" + special.target


def apply_des(overlay: GraphOverlay, n: Node, des: Des, model: AppModel) -> Embed:
    """Rebuild the successors of a reflective/ICC call site from a log record.

    Returns the memoized :class:`Embed` for (site, target): the edges a walk
    follows out of ``n`` for this particular target.
    """
    callee = n.statement.callee
    if n.kind is not StmtKind.CALL or callee is None or callee.kind not in (CalleeKind.REFLECTIVE, CalleeKind.ICC):
        raise ContractError(f"node {n.id} is not a reflective or ICC call site")
    special = des.special
    if callee.kind is CalleeKind.REFLECTIVE and not isinstance(special, ReflectiveTarget):
        raise ContractError(f"node {n.id} is reflective but the record carries no reflective target")
    if callee.kind is CalleeKind.ICC and not isinstance(special, IccLink):
        raise ContractError(f"node {n.id} is an ICC call but the record carries no ICC link")
    key = (n.id, _memo_key(des))
    cached = overlay.embed_memo.get(key)
    if cached is not None:
        return cached
    if isinstance(special, ReflectiveTarget):
        embed = _embed_reflective(overlay, n, special.signature, model)
    else:
        embed = _embed_icc(overlay, n, special, model)
    overlay.embed_memo[key] = embed
    return embed


def update_successors(overlay: GraphOverlay, n: Node, des: Des, model: AppModel) -> list[Node]:
    """Apply the update for ``des`` at ``n`` and return n's full successor list."""
    apply_des(overlay, n, des, model)
    return neighbors(overlay.base, overlay, n)


def _embed_reflective(overlay: GraphOverlay, n: Node, target: ApiSignature, model: AppModel) -> Embed:
    g = overlay.base
    cont = overlay.continuation(n.id)
    if target in g.entry_of:
        # Target CFG already lives (detached) in this supergraph: wire it in.
        call = overlay.add_edge(Edge(n.id, g.entry_of[target], EdgeKind.CALL))
        overlay.add_edge(Edge(g.exit_of[target], cont, EdgeKind.RETURN))
        return Embed((call,), ())
    homes = model.method_homes(target)
    if homes:
        return _clone_closure(overlay, n, target, homes[0], cont)
    if target.declaring_unit in model.app_units:
        raise UnknownTargetError(f"reflective target {target} is app-defined but absent from the model")
    new_id = overlay.allocate()
    stmt = Statement(StmtKind.CALL, display=f"{target.short}()  // explicit invocation of {target}",
                     callee=CalleeRef(CalleeKind.FRAMEWORK, target=target))
    overlay.add_node(Node(new_id, n.method, stmt))
    overlay._continuation[new_id] = cont
    for edge in overlay.out_edges(n.id):
        if edge.kind is EdgeKind.FLOW and edge.dst == cont:
            overlay.remove_edge(edge)
    first = overlay.add_edge(Edge(n.id, new_id, EdgeKind.FLOW))
    overlay.add_edge(Edge(new_id, cont, EdgeKind.FLOW))
    return Embed((first,), (new_id,))


def _clone_closure(overlay: GraphOverlay, n: Node, target: ApiSignature, home: Supergraph, cont: int) -> Embed:
    """Copy ``target`` and its static callees from another supergraph."""
    methods = [target]
    queue = deque([target])
    while queue:
        sig = queue.popleft()
        for node_id in home.method_partition[sig]:
            callee = home.nodes[node_id].statement.callee
            if callee is not None and callee.kind is CalleeKind.STATIC and callee.target not in methods:
                methods.append(callee.target)
                queue.append(callee.target)
    mapping: dict[int, int] = {}
    for sig in methods:
        for node_id in sorted(home.method_partition[sig]):
            new_id = overlay.allocate()
            mapping[node_id] = new_id
            overlay.add_node(Node(new_id, home.nodes[node_id].method, home.nodes[node_id].statement,
                                  home.nodes[node_id].runtime_targets))
    for edge in home.edges:
        if edge.src in mapping and edge.dst in mapping:
            overlay.add_edge(Edge(mapping[edge.src], mapping[edge.dst], edge.kind))
            if edge.kind is EdgeKind.FLOW and home.nodes[edge.src].kind is StmtKind.CALL:
                overlay._continuation[mapping[edge.src]] = mapping[edge.dst]
    call = overlay.add_edge(Edge(n.id, mapping[home.entry_of[target]], EdgeKind.CALL))
    overlay.add_edge(Edge(mapping[home.exit_of[target]], cont, EdgeKind.RETURN))
    return Embed((call,), tuple(mapping.values()))


def _embed_icc(overlay: GraphOverlay, n: Node, link: IccLink, model: AppModel) -> Embed:
    target_entry = model.component_entry(link.target)
    if target_entry is None:
        raise UnknownTargetError(f"ICC target component {link.target} has no callback supergraph")
    for edge in overlay.out_edges(n.id):
        if edge.kind is EdgeKind.ICC and edge.dst != target_entry:
            overlay.remove_edge(edge)
    join = overlay.add_edge(Edge(n.id, target_entry, EdgeKind.ICC))
    cont = overlay.continuation(n.id)
    flow = Edge(n.id, cont, EdgeKind.FLOW)
    return Embed((flow, join), ())
