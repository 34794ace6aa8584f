"""Window-size selection (depth CDF vs. logging overhead) and strategy comparison."""

from __future__ import annotations

import csv
import io
import json
import time
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import ContractError
from .graph import ApiSignature, AppModel, CalleeKind, EdgeKind, StmtKind, Supergraph
from .logs import LogSequence
from .matcher import MatchConfig, Strategy, match_all
from .simulator import GroundTruth

# Logging overhead measured on-device at the two ends of the K range.
PAPER_OVERHEAD_ANCHORS = {1: 0.0099, 16: 0.0259}


def method_depths(sg: Supergraph) -> dict[ApiSignature, int]:
    """Shortest static call-chain length from the callback (which has depth 1)."""
    depths = {sg.root.signature: 1}
    queue = deque([sg.root.signature])
    while queue:
        sig = queue.popleft()
        for node_id in sg.method_partition.get(sig, ()):
            for edge in sg.out_edges(node_id):
                if edge.kind is not EdgeKind.CALL:
                    continue
                callee = sg.nodes[edge.dst].method.signature
                if callee not in depths:
                    depths[callee] = depths[sig] + 1
                    queue.append(callee)
    return depths


def call_site_depths(model: AppModel, logged: Iterable[ApiSignature] | None = None) -> list[int]:
    """Depth of the caller method of every statically reachable logged call site."""
    logged = model.logged_api_set if logged is None else frozenset(logged)
    out = []
    for sg in model.supergraphs.values():
        depths = method_depths(sg)
        for node in sg.node_list:
            callee = node.statement.callee
            if node.kind is not StmtKind.CALL or callee is None or callee.kind is CalleeKind.STATIC:
                continue
            if callee.invoked_api in logged and node.method.signature in depths:
                out.append(depths[node.method.signature])
    return out


def depth_cdf(model: AppModel, logged: Iterable[ApiSignature] | None = None,
              k_max: int | None = None) -> list[tuple[int, float]]:
    """(k, fraction of logged call sites at depth <= k) for k = 1..k_max."""
    depths = call_site_depths(model, logged)
    if k_max is None:
        k_max = max(depths, default=1)
    if not depths:
        return [(k, 1.0) for k in range(1, k_max + 1)]
    counts = [0] * (k_max + 1)
    for d in depths:
        if d <= k_max:
            counts[d] += 1
    table, covered = [], 0
    for k in range(1, k_max + 1):
        covered += counts[k]
        table.append((k, covered / len(depths)))
    return table


def _as_table(table) -> dict[int, float]:
    if isinstance(table, Mapping):
        return {int(k): float(v) for k, v in table.items()}
    return {int(k): float(v) for k, v in table}


def select_k(cdf, overhead) -> int:
    """argmax over k of coverage(k) / overhead(k); ties go to the smaller k."""
    cov, ovh = _as_table(cdf), _as_table(overhead)
    if not cov or not ovh:
        raise ContractError("coverage and overhead tables must be non-empty")
    if set(cov) != set(ovh):
        raise ContractError(f"coverage covers k={sorted(cov)} but overhead covers k={sorted(ovh)}")
    best_k, best = None, None
    for k in sorted(cov):
        if ovh[k] <= 0:
            raise ContractError(f"overhead at k={k} must be positive")
        ratio = cov[k] / ovh[k]
        if best is None or ratio > best:
            best_k, best = k, ratio
    return best_k


def interpolate_overhead(anchors: Mapping[int, float], ks: Iterable[int] | None = None) -> list[tuple[int, float]]:
    """Piecewise-linear overhead table through the anchor points."""
    points = sorted((int(k), float(v)) for k, v in anchors.items())
    if len(points) < 1:
        raise ContractError("overhead anchors are empty")
    if ks is None:
        ks = range(points[0][0], points[-1][0] + 1)
    table = []
    for k in ks:
        if k < points[0][0] or k > points[-1][0]:
            raise ContractError(f"k={k} lies outside the overhead anchors {points[0][0]}..{points[-1][0]}")
        for (k0, v0), (k1, v1) in zip(points, points[1:]):
            if k0 <= k <= k1:
                table.append((k, v0 + (v1 - v0) * (k - k0) / (k1 - k0)))
                break
        else:
            table.append((k, points[0][1]))
    return table


def load_overhead(text: str) -> list[tuple[int, float]]:
    """Overhead config: JSON ``{"anchors": {k: fraction}}`` or CSV ``k,overhead``."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            anchors = json.loads(text)["anchors"]
            if isinstance(anchors, list):
                anchors = dict(anchors)
            anchors = {int(k): float(v) for k, v in anchors.items()}
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise ContractError(f"malformed overhead config: {exc}") from None
        return interpolate_overhead(anchors)
    rows = list(csv.reader(io.StringIO(text)))
    if rows and rows[0] and not rows[0][0].strip().lstrip("-").isdigit():
        rows = rows[1:]
    try:
        return [(int(r[0]), float(r[1])) for r in rows if r]
    except (ValueError, IndexError) as exc:
        raise ContractError(f"malformed overhead table: {exc}") from None


def cdf_csv(cdf: Sequence[tuple[int, float]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["k", "coverage"])
    for k, coverage in cdf:
        writer.writerow([k, f"{coverage:.6g}"])
    return out.getvalue()


# -- exhaustive enumeration bound -----------------------------------------------

def static_walk_count(sg: Supergraph) -> int | None:
    """Number of complete Entry-to-Exit walks of the callback, following static
    calls only. None if a method's CFG has a cycle (unbounded)."""
    memo: dict[ApiSignature, int | None] = {}

    def method_paths(sig, active):
        if sig in memo:
            return memo[sig]
        if sig in active or sig not in sg.entry_of or sig not in sg.exit_of:
            return None
        active = active | {sig}
        entry, exit_ = sg.entry_of[sig], sg.exit_of[sig]
        order = _topo(sg, sig, entry)
        if order is None:
            memo[sig] = None
            return None
        ways = {entry: 1}
        for node_id in order:
            count = ways.get(node_id, 0)
            if not count:
                continue
            node = sg.nodes[node_id]
            callee = node.statement.callee
            if callee is not None and callee.kind is CalleeKind.STATIC and callee.target in sg.entry_of:
                inner = method_paths(callee.target, active)
                if inner is None:
                    memo[sig] = None
                    return None
                count *= inner
            if node_id == exit_:
                continue
            for nxt in sg.flow_successors(node_id):
                ways[nxt] = ways.get(nxt, 0) + count
        memo[sig] = ways.get(exit_, 0)
        return memo[sig]

    return method_paths(sg.root.signature, frozenset())


def _topo(sg: Supergraph, sig, entry):
    members = set(sg.method_partition[sig])
    indeg = {n: 0 for n in members}
    for n in members:
        for m in sg.flow_successors(n):
            if m in members:
                indeg[m] += 1
    queue = deque(n for n in sorted(members) if indeg[n] == 0)
    order = []
    while queue:
        n = queue.popleft()
        order.append(n)
        for m in sg.flow_successors(n):
            if m in members:
                indeg[m] -= 1
                if indeg[m] == 0:
                    queue.append(m)
    return order if len(order) == len(members) else None


def enumeration_bound(model: AppModel, truth: GroundTruth) -> int | None:
    """Candidate walks a brute-force matcher would enumerate for this log."""
    total = 0
    for seg in truth.segments:
        count = static_walk_count(model.supergraphs[ApiSignature.parse(seg.callback)])
        if count is None:
            return None
        total += count
    return total


# -- Table 2 analog -------------------------------------------------------------

TABLE2_COLUMNS = [
    "Sum of Logs", "Sum of Nodes", "Sum of Branch Nodes",
    "Guided Time (sec)", "Guided Num of Visited Nodes", "Guided Correct?",
    "Backtracking Time (sec)", "Backtracking Num of Visited Nodes", "Backtracking Correct?",
]


@dataclass
class StrategyOutcome:
    strategy: Strategy
    elapsed: float
    visited_count: int
    distinct_visited: int
    correct: bool
    matched: bool
    ambiguous: bool


def check_truth(log: LogSequence, truth: GroundTruth):
    seqs = {r.seq for r in log}
    for rec in truth.records:
        if rec.seq not in seqs:
            raise ContractError(f"ground truth names record seq {rec.seq}, which the log lacks")
    if len(truth.records) != len(log):
        raise ContractError(f"ground truth covers {len(truth.records)} records, the log has {len(log)}")


def run_strategy(model: AppModel, log: LogSequence, truth: GroundTruth, strategy: Strategy,
                 cfg: MatchConfig | None = None) -> StrategyOutcome:
    base = cfg or MatchConfig()
    cfg = MatchConfig(**{**base.__dict__, "strategy": strategy, "pid": truth.pid})
    start = time.perf_counter()
    report = match_all(model, log, cfg)
    elapsed = time.perf_counter() - start
    expected = truth.thread_segments()
    correct = report.ok and bool(report.threads)
    for thread in report.threads:
        want = [n for s in expected.get(thread.tid, []) for n in s.nodes]
        if thread.path is None or thread.path.nodes != want:
            correct = False
    return StrategyOutcome(strategy, elapsed, report.visited_count, report.distinct_visited, correct,
                           report.ok, report.ambiguous)


def compare_strategies(model: AppModel, log: LogSequence, truth: GroundTruth,
                       cfg: MatchConfig | None = None) -> dict:
    """One Table 2 style row: both matchers against the simulator's truth."""
    check_truth(log, truth)
    guided = run_strategy(model, log, truth, Strategy.GUIDED, cfg)
    baseline = run_strategy(model, log, truth, Strategy.BACKTRACKING, cfg)
    return {
        "Sum of Logs": len(log),
        "Sum of Nodes": model.node_count(),
        "Sum of Branch Nodes": model.branch_count(),
        "Guided Time (sec)": round(guided.elapsed, 3),
        "Guided Num of Visited Nodes": guided.distinct_visited,
        "Guided Correct?": "yes" if guided.correct else "no",
        "Backtracking Time (sec)": round(baseline.elapsed, 3),
        "Backtracking Num of Visited Nodes": baseline.distinct_visited,
        "Backtracking Correct?": "yes" if baseline.correct else "no",
    }


def table2_csv(rows: Sequence[dict], timing: bool = True) -> str:
    out = io.StringIO()
    columns = TABLE2_COLUMNS if timing else [c for c in TABLE2_COLUMNS if "Time" not in c]
    writer = csv.DictWriter(out, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return out.getvalue()
