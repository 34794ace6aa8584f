"""Application model: per-callback supergraphs, their JSON form, and validation.

Node ids are global across a model. Edge order inside a supergraph is
significant: it is the order in which a search visits successors.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, NamedTuple

from .errors import ModelParseError, ModelValidationError


@dataclass(frozen=True, order=True)
class ApiSignature:
    """A method signature in canonical ``unit.method(descriptor)`` form."""

    declaring_unit: str
    method_name: str
    descriptor: str

    def __post_init__(self):
        if not self.declaring_unit or not self.method_name:
            raise ValueError(f"incomplete signature: {self!r}")
        if any(ch.isspace() for ch in self.descriptor):
            raise ValueError(f"descriptor contains whitespace: {self.descriptor!r}")

    @classmethod
    def parse(cls, text: str) -> "ApiSignature":
        if not isinstance(text, str):
            raise ValueError(f"signature must be a string, got {type(text).__name__}")
        paren = text.find("(")
        if paren <= 0:
            raise ValueError(f"malformed signature {text!r}")
        head, descriptor = text[:paren], text[paren:]
        unit, dot, method = head.rpartition(".")
        if not dot:
            raise ValueError(f"malformed signature {text!r}")
        return cls(unit, method, descriptor)

    def __str__(self):
        return f"{self.declaring_unit}.{self.method_name}{self.descriptor}"

    @property
    def short(self) -> str:
        return f"{self.declaring_unit.rpartition('.')[2]}.{self.method_name}"


class Origin(Enum):
    APP = "app"
    FRAMEWORK = "framework"


@dataclass(frozen=True)
class MethodId:
    signature: ApiSignature
    origin: Origin = Origin.APP

    def __str__(self):
        return str(self.signature)


class StmtKind(Enum):
    PLAIN = "plain"
    BRANCH = "branch"
    CALL = "call"
    ENTRY = "entry"
    EXIT = "exit"


class CalleeKind(Enum):
    STATIC = "static"
    REFLECTIVE = "reflective"
    ICC = "icc"
    FRAMEWORK = "framework"


@dataclass(frozen=True)
class CalleeRef:
    """What a call statement invokes.

    ``target`` names the callee for static and framework calls. Reflective and
    ICC calls carry only ``api`` (the invoking API, e.g. ``Method.invoke``);
    their real targets come from log records at match time.
    """

    kind: CalleeKind
    target: ApiSignature | None = None
    api: ApiSignature | None = None

    @property
    def invoked_api(self) -> ApiSignature:
        return self.target if self.kind in (CalleeKind.STATIC, CalleeKind.FRAMEWORK) else self.api

    def to_json(self):
        if self.kind in (CalleeKind.STATIC, CalleeKind.FRAMEWORK):
            return {"kind": self.kind.value, "target": str(self.target)}
        return {"kind": self.kind.value, "api": str(self.api)}


@dataclass(frozen=True)
class Statement:
    kind: StmtKind
    display: str = ""
    condition: str | None = None
    callee: CalleeRef | None = None


@dataclass(frozen=True)
class Node:
    id: int
    method: MethodId
    statement: Statement
    # Simulation-only hints (possible runtime targets of reflective/ICC calls).
    runtime_targets: tuple[str, ...] = ()

    @property
    def kind(self) -> StmtKind:
        return self.statement.kind

    @property
    def callee(self) -> CalleeRef | None:
        return self.statement.callee

    @property
    def invoked_api(self) -> ApiSignature | None:
        callee = self.statement.callee
        return callee.invoked_api if callee is not None else None


class EdgeKind(Enum):
    FLOW = "flow"
    CALL = "call"
    RETURN = "return"
    # Inter-component link from an ICC call site to another callback's Entry.
    ICC = "icc"


class Edge(NamedTuple):
    src: int
    dst: int
    kind: EdgeKind


class Supergraph:
    """CFGs of every method reachable from one callback, joined by call/return edges."""

    def __init__(self, root: MethodId, nodes: Iterable[Node], edges: Iterable[Edge]):
        self.root = root
        self.model: AppModel | None = None
        self.node_list: tuple[Node, ...] = tuple(nodes)
        self.edges: tuple[Edge, ...] = tuple(edges)
        self.nodes: dict[int, Node] = {}
        for node in self.node_list:
            self.nodes.setdefault(node.id, node)
        self._out: dict[int, list[Edge]] = {}
        self._in_degree: dict[int, int] = {}
        for edge in self.edges:
            self._out.setdefault(edge.src, []).append(edge)
            self._in_degree[edge.dst] = self._in_degree.get(edge.dst, 0) + 1
        self.method_partition: dict[ApiSignature, list[int]] = {}
        self.entry_of: dict[ApiSignature, int] = {}
        self.exit_of: dict[ApiSignature, int] = {}
        for node in self.nodes.values():
            sig = node.method.signature
            self.method_partition.setdefault(sig, []).append(node.id)
            if node.kind is StmtKind.ENTRY:
                self.entry_of.setdefault(sig, node.id)
            elif node.kind is StmtKind.EXIT:
                self.exit_of.setdefault(sig, node.id)

    def __contains__(self, node_id):
        return node_id in self.nodes

    def __len__(self):
        return len(self.nodes)

    def __repr__(self):
        return f"<Supergraph {self.root} nodes={len(self.nodes)} edges={len(self.edges)}>"

    def out_edges(self, node_id: int) -> list[Edge]:
        return self._out.get(node_id, [])

    def in_degree(self, node_id: int) -> int:
        return self._in_degree.get(node_id, 0)

    @property
    def root_entry(self) -> int:
        return self.entry_of[self.root.signature]

    def flow_successors(self, node_id: int) -> list[int]:
        return [e.dst for e in self.out_edges(node_id) if e.kind is EdgeKind.FLOW]

    def branch_nodes(self) -> list[int]:
        return [n for n in self.nodes if len(self.flow_successors(n)) >= 2]


@dataclass
class AppModel:
    supergraphs: dict[ApiSignature, Supergraph]
    callback_registry: tuple[ApiSignature, ...] = ()
    logged_api_set: frozenset[ApiSignature] = frozenset()
    library_prefixes: tuple[str, ...] = ()
    _node_home: dict[int, Supergraph] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.callback_registry = tuple(self.callback_registry)
        self.logged_api_set = frozenset(self.logged_api_set)
        self.library_prefixes = tuple(self.library_prefixes)
        for sg in self.supergraphs.values():
            sg.model = self
            for node_id in sg.nodes:
                self._node_home.setdefault(node_id, sg)
        self.max_node_id = max(self._node_home, default=0)
        self.app_units = frozenset(
            sig.declaring_unit for sg in self.supergraphs.values() for sig in sg.method_partition
        )

    def node(self, node_id: int) -> Node:
        return self._node_home[node_id].nodes[node_id]

    def supergraph_of(self, node_id: int) -> Supergraph:
        return self._node_home[node_id]

    def node_count(self) -> int:
        return sum(len(sg) for sg in self.supergraphs.values())

    def branch_count(self) -> int:
        return sum(len(sg.branch_nodes()) for sg in self.supergraphs.values())

    def is_logged(self, node: Node) -> bool:
        """True when executing ``node`` emits an audit record."""
        callee = node.statement.callee
        if callee is None or callee.kind is CalleeKind.STATIC:
            return False
        return callee.invoked_api in self.logged_api_set

    def method_homes(self, sig: ApiSignature) -> list[Supergraph]:
        return [sg for sg in self.supergraphs.values() if sig in sg.entry_of]

    def component_entry(self, component: str) -> int | None:
        """Entry node of the first callback supergraph rooted in ``component``."""
        for sg in self.supergraphs.values():
            if sg.root.signature.declaring_unit == component:
                return sg.root_entry
        return None

    def logged_node_count(self) -> int:
        return sum(
            1 for sg in self.supergraphs.values() for n in sg.nodes.values() if self.is_logged(n)
        )


# -- JSON interchange -------------------------------------------------------

_NODE_FIELDS = {"id", "method", "kind", "display", "callee", "condition", "runtime_targets"}
_TOP_FIELDS = {"callbacks", "logged_apis", "library_prefixes", "supergraphs"}


def _sig(text, where):
    try:
        return ApiSignature.parse(text)
    except ValueError as exc:
        raise ModelValidationError([f"{where}: {exc}"]) from None


def _callee_from_json(obj, where) -> CalleeRef:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ModelValidationError([f"{where}: callee must be an object with 'kind'"])
    try:
        kind = CalleeKind(obj["kind"])
    except ValueError:
        raise ModelValidationError([f"{where}: unknown callee kind {obj['kind']!r}"]) from None
    if kind in (CalleeKind.STATIC, CalleeKind.FRAMEWORK):
        return CalleeRef(kind, target=_sig(obj.get("target"), where))
    return CalleeRef(kind, api=_sig(obj.get("api"), where))


def _node_from_json(obj, callbacks) -> Node:
    if not isinstance(obj, dict):
        raise ModelValidationError(["node entries must be objects"])
    extra = set(obj) - _NODE_FIELDS
    if extra:
        raise ModelValidationError([f"node {obj.get('id')}: unknown fields {sorted(extra)}"])
    node_id = obj.get("id")
    if not isinstance(node_id, int) or isinstance(node_id, bool):
        raise ModelValidationError([f"node id {node_id!r} is not an integer"])
    where = f"node {node_id}"
    try:
        kind = StmtKind(obj.get("kind"))
    except ValueError:
        raise ModelValidationError([f"{where}: unknown kind {obj.get('kind')!r}"]) from None
    method_sig = _sig(obj.get("method"), where)
    callee = None
    if "callee" in obj:
        callee = _callee_from_json(obj["callee"], where)
    stmt = Statement(kind, display=obj.get("display", ""), condition=obj.get("condition"), callee=callee)
    return Node(node_id, MethodId(method_sig, Origin.APP), stmt, tuple(obj.get("runtime_targets", ())))


def model_from_dict(data) -> AppModel:
    """Build an unvalidated model from decoded JSON."""
    if not isinstance(data, dict):
        raise ModelValidationError(["top level must be an object"])
    extra = set(data) - _TOP_FIELDS
    if extra:
        raise ModelValidationError([f"unknown top-level fields {sorted(extra)}"])
    callbacks = [_sig(s, "callbacks") for s in data.get("callbacks", [])]
    logged = [_sig(s, "logged_apis") for s in data.get("logged_apis", [])]
    prefixes = list(data.get("library_prefixes", []))
    supergraphs: dict[ApiSignature, Supergraph] = {}
    for i, sg_obj in enumerate(data.get("supergraphs", [])):
        root = _sig(sg_obj.get("root"), f"supergraph {i}")
        nodes = [_node_from_json(n, callbacks) for n in sg_obj.get("nodes", [])]
        edges = []
        for e in sg_obj.get("edges", []):
            if not (isinstance(e, list) and len(e) == 3):
                raise ModelValidationError([f"supergraph {root}: malformed edge {e!r}"])
            try:
                kind = EdgeKind(e[2])
            except ValueError:
                raise ModelValidationError([f"supergraph {root}: unknown edge kind {e[2]!r}"]) from None
            edges.append(Edge(int(e[0]), int(e[1]), kind))
        if root in supergraphs:
            raise ModelValidationError([f"supergraph root {root} appears twice"])
        supergraphs[root] = Supergraph(MethodId(root), nodes, edges)
    return AppModel(supergraphs, callbacks, logged, prefixes)


def load_app_model(serialized: bytes | str) -> AppModel:
    """Parse and validate the JSON interchange form of an application model."""
    if isinstance(serialized, bytes):
        try:
            serialized = serialized.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ModelParseError(f"input is not UTF-8: {exc}") from None
    try:
        data = json.loads(serialized)
    except json.JSONDecodeError as exc:
        raise ModelParseError(exc.msg, exc.lineno, exc.colno) from None
    model = model_from_dict(data)
    diagnostics = validate(model)
    if diagnostics:
        raise ModelValidationError(diagnostics)
    return model


def model_to_dict(model: AppModel) -> dict:
    sgs = []
    for sg in model.supergraphs.values():
        nodes = []
        for n in sg.node_list:
            obj = {"id": n.id, "method": str(n.method.signature), "kind": n.kind.value,
                   "display": n.statement.display}
            if n.statement.condition is not None:
                obj["condition"] = n.statement.condition
            if n.statement.callee is not None:
                obj["callee"] = n.statement.callee.to_json()
            if n.runtime_targets:
                obj["runtime_targets"] = list(n.runtime_targets)
            nodes.append(obj)
        sgs.append({"root": str(sg.root.signature), "nodes": nodes,
                    "edges": [[e.src, e.dst, e.kind.value] for e in sg.edges]})
    return {
        "callbacks": [str(s) for s in model.callback_registry],
        "logged_apis": sorted(str(s) for s in model.logged_api_set),
        "library_prefixes": list(model.library_prefixes),
        "supergraphs": sgs,
    }


def dump_app_model(model: AppModel) -> bytes:
    return (json.dumps(model_to_dict(model), indent=1, ensure_ascii=False) + "\n").encode("utf-8")


# -- validation -------------------------------------------------------------

def _method_reachability(sg: Supergraph, sig: ApiSignature) -> set[int]:
    entry = sg.entry_of.get(sig)
    if entry is None:
        return set()
    seen = {entry}
    queue = deque([entry])
    while queue:
        cur = queue.popleft()
        for nxt in sg.flow_successors(cur):
            if nxt not in seen and nxt in sg.nodes and sg.nodes[nxt].method.signature == sig:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def _iter_supergraph_diagnostics(model: AppModel, sg: Supergraph) -> Iterator[str]:
    label = str(sg.root.signature)
    seen_ids: set[int] = set()
    for node in sg.node_list:
        if node.id in seen_ids:
            yield f"node id {node.id} duplicated within supergraph {label}"
        seen_ids.add(node.id)
        if node.method.origin is not Origin.APP:
            yield f"node {node.id} belongs to non-app method {node.method}"
    if sg.root.signature not in sg.entry_of:
        yield f"supergraph {label} has no Entry node for its root callback"
    if sg.root.signature not in model.callback_registry:
        yield f"callback {label} is not in the callback registry"

    for sig, ids in sg.method_partition.items():
        entries = [i for i in ids if sg.nodes[i].kind is StmtKind.ENTRY]
        exits = [i for i in ids if sg.nodes[i].kind is StmtKind.EXIT]
        if len(entries) != 1:
            yield f"method {sig} has {len(entries)} Entry nodes"
        if len(exits) > 1:
            yield f"method {sig} has {len(exits)} Exit nodes"
        if len(entries) == 1:
            reachable = _method_reachability(sg, sig)
            for i in ids:
                if i not in reachable:
                    yield f"node {i} unreachable from entry of {sig}"

    callers_of: dict[int, list[int]] = {}
    for edge in sg.edges:
        if edge.kind is EdgeKind.CALL:
            callers_of.setdefault(edge.dst, []).append(edge.src)
    for edge in sg.edges:
        for endpoint in (edge.src, edge.dst):
            if endpoint not in sg.nodes and not (edge.kind is EdgeKind.ICC and endpoint == edge.dst
                                                 and endpoint in model._node_home):
                yield f"edge endpoint {endpoint} undefined"
        if edge.src not in sg.nodes or (edge.dst not in sg.nodes and edge.kind is not EdgeKind.ICC):
            continue
        src = sg.nodes[edge.src]
        if edge.kind is EdgeKind.FLOW:
            dst = sg.nodes[edge.dst]
            if src.method != dst.method:
                yield f"flow edge {edge.src}->{edge.dst} crosses methods"
        elif edge.kind is EdgeKind.CALL:
            dst = sg.nodes[edge.dst]
            callee = src.callee
            if src.kind is not StmtKind.CALL or callee is None:
                yield f"call edge {edge.src}->{edge.dst} does not start at a call node"
            elif dst.kind is not StmtKind.ENTRY:
                yield f"call edge {edge.src}->{edge.dst} does not end at an Entry node"
            elif callee.kind is CalleeKind.STATIC and callee.target != dst.method.signature:
                yield f"call edge {edge.src}->{edge.dst} enters {dst.method}, not {callee.target}"
        elif edge.kind is EdgeKind.RETURN:
            dst = sg.nodes[edge.dst]
            if src.kind is not StmtKind.EXIT:
                yield f"return edge {edge.src}->{edge.dst} does not start at an Exit node"
                continue
            callers = callers_of.get(sg.entry_of.get(src.method.signature), [])
            if not any(sg.flow_successors(c) == [edge.dst] for c in callers):
                yield f"return edge {edge.src}->{edge.dst} does not reach the flow successor of a call site"
        elif edge.kind is EdgeKind.ICC:
            callee = src.callee
            if callee is None or callee.kind is not CalleeKind.ICC:
                yield f"icc edge {edge.src}->{edge.dst} does not start at an ICC call node"
            elif model._node_home.get(edge.dst) is None or model.node(edge.dst).kind is not StmtKind.ENTRY:
                yield f"icc edge {edge.src}->{edge.dst} does not end at a callback Entry"

    for node in sg.nodes.values():
        succ = sg.flow_successors(node.id)
        if node.kind is StmtKind.BRANCH and len(succ) < 2:
            yield f"branch node {node.id} has {len(succ)} successors"
        if node.kind is StmtKind.CALL:
            if node.callee is None:
                yield f"call node {node.id} has no callee"
            elif len(succ) != 1:
                yield f"call node {node.id} has {len(succ)} flow successors (expected 1)"
            elif node.callee.kind is CalleeKind.STATIC:
                if node.callee.target not in sg.entry_of:
                    yield f"call node {node.id}: app method {node.callee.target} has no CFG in {label}"
                elif not any(e.kind is EdgeKind.CALL for e in sg.out_edges(node.id)):
                    yield f"call node {node.id} has no call edge to {node.callee.target}"


def validate(model: AppModel) -> list[str]:
    """Return one diagnostic per violated model invariant (empty when valid)."""
    diagnostics: list[str] = []
    owner: dict[int, ApiSignature] = {}
    reported: set[int] = set()
    for root, sg in model.supergraphs.items():
        for node_id in sg.nodes:
            if node_id in owner and owner[node_id] != root and node_id not in reported:
                diagnostics.append(f"node id {node_id} duplicated across supergraphs")
                reported.add(node_id)
            owner.setdefault(node_id, root)
    for sg in model.supergraphs.values():
        diagnostics.extend(_iter_supergraph_diagnostics(model, sg))
    return diagnostics
