"""JSON and DOT renderings of match results."""

from __future__ import annotations

import json

from .graph import AppModel, EdgeKind
from .matcher import MatchReport, PathSegment, SegmentFailure
from .simulator import GroundTruth

TIMING_KEYS = frozenset({"elapsed"})


def _overlay_json(seg: PathSegment) -> dict:
    ov = seg.overlay
    return {
        "nodes": [{"id": n.id, "method": str(n.method.signature), "display": n.statement.display}
                  for n in ov.added_nodes.values()],
        "edges": [[e.src, e.dst, e.kind.value] for e in ov.added_edges],
        "removed": [[e.src, e.dst, e.kind.value] for e in sorted(ov.removed_edges)],
    }


def segment_json(seg: PathSegment | SegmentFailure) -> dict:
    if isinstance(seg, SegmentFailure):
        return {"callback": str(seg.callback), "status": "failed", "reason": seg.reason,
                "deepest_index": seg.deepest_index, "visited": seg.visited_count, "elapsed": round(seg.elapsed, 6)}
    out = {
        "callback": str(seg.callback),
        "status": "matched",
        "nodes": list(seg.nodes),
        "match_points": {str(i): n for i, n in sorted(seg.match_points.items())},
        "visited": seg.visited_count,
        "visited_nodes": len(seg.visited_nodes),
        "ambiguous": seg.ambiguous,
        "elapsed": round(seg.elapsed, 6),
    }
    if seg.overlay.added_edges or seg.overlay.removed_edges:
        out["overlay"] = _overlay_json(seg)
    if seg.alternatives:
        out["alternatives"] = [list(a) for a in seg.alternatives]
    return out


def report_to_dict(report: MatchReport, truth: GroundTruth | None = None) -> dict:
    threads = []
    for thread in report.threads:
        entry = {
            "tid": thread.tid,
            "segments": [segment_json(s) for s in thread.segments],
            "joins": [list(j) for j in thread.path.joins] if thread.path else [],
            "prelude": [r.seq for r in thread.prelude],
        }
        if thread.failure:
            entry["failure"] = thread.failure
        threads.append(entry)
    out = {
        "strategy": report.strategy.value,
        "pid": report.pid,
        "matched": report.ok,
        "ambiguous": report.ambiguous,
        "visited": report.visited_count,
        "threads": threads,
        "diagnostics": list(report.diagnostics),
    }
    if truth is not None:
        out["truth"] = compare_with_truth(report, truth)
    return out


def compare_with_truth(report: MatchReport, truth: GroundTruth) -> dict:
    """Per-thread agreement with simulator ground truth."""
    expected = truth.thread_segments()
    correct = bool(report.threads)
    order_mismatch = False
    for thread in report.threads:
        want = [n for s in expected.get(thread.tid, []) for n in s.nodes]
        got = thread.path.nodes if thread.path else None
        if got != want:
            correct = False
            order_mismatch = order_mismatch or got is not None
    return {"correct": correct, "order_mismatch": order_mismatch}


def strip_timing(obj):
    """Copy of a report dict without wall-clock fields."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k not in TIMING_KEYS}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def dumps_report(data: dict) -> bytes:
    return (json.dumps(data, indent=1, sort_keys=False) + "\n").encode("utf-8")


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(model: AppModel, report: MatchReport) -> str:
    """One cluster per matched segment. Matched (logged) nodes are filled gray,
    the rest of the path is bold, overlay edges are dashed."""
    lines = ["digraph logpath {", "  node [shape=box, fontname=\"monospace\"];"]
    index = 0
    for thread in report.threads:
        for seg in thread.segments:
            if not isinstance(seg, PathSegment):
                continue
            prefix = f"s{index}_"
            index += 1
            ov = seg.overlay
            g = ov.base
            matched = set(seg.match_points.values())
            on_path = set(seg.nodes)
            path_edges = set(zip(seg.nodes, seg.nodes[1:]))
            lines.append(f"  subgraph cluster_{index - 1} {{")
            lines.append(f"    label={_quote(f'tid {thread.tid}: {seg.callback}')};")
            node_ids = [n.id for n in g.node_list] + list(ov.added_nodes)
            for node_id in node_ids:
                node = ov.node(node_id)
                attrs = [f"label={_quote(f'{node_id}: {node.statement.display}')}"]
                if node_id in matched:
                    attrs.append('style=filled, fillcolor="gray"')
                elif node_id in on_path:
                    attrs.append("style=bold")
                if node_id in ov.added_nodes:
                    attrs.append("peripheries=2")
                lines.append(f"    {prefix}{node_id} [{', '.join(attrs)}];")
            base_edges = [(e, False) for e in g.edges if e not in ov.removed_edges]
            for edge, added in base_edges + [(e, True) for e in ov.added_edges]:
                if edge.dst not in ov:
                    continue  # ICC links leave the supergraph
                attrs = []
                if added:
                    attrs.append("style=dashed")
                if edge.kind is not EdgeKind.FLOW:
                    attrs.append(f"label={_quote(edge.kind.value)}")
                if (edge.src, edge.dst) in path_edges:
                    attrs.append("penwidth=2")
                suffix = f" [{', '.join(attrs)}]" if attrs else ""
                lines.append(f"    {prefix}{edge.src} -> {prefix}{edge.dst}{suffix};")
            lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"
