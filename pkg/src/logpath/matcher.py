"""Stack-guided log matching over per-callback supergraphs.

The guided search is a backtracking DFS that uses each record's call-stack
window and depth to prune; the baseline is the same DFS matching signatures
only. Both treat a logged call site on the walk as obligatory: the walk may
only pass through it by matching the next record.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .errors import CombineError, ContractError, LogPathError, NoMatchError
from .graph import ApiSignature, AppModel, CalleeKind, EdgeKind, Node, Supergraph
from .logs import (
    LogRecord,
    LogSegment,
    LogSequence,
    partition_by_thread,
    scope,
    segment,
    split_library_records,
)
from .overlay import Embed, GraphOverlay, apply_des
from .walk import silent_methods, walk_edges

log = logging.getLogger(__name__)

EmuStack = tuple  # tuple[ApiSignature, ...], callback first


class Strategy(Enum):
    GUIDED = "guided"
    BACKTRACKING = "backtracking"


class Decision(Enum):
    PROCEED = "proceed"
    BACKTRACK = "backtrack"
    FORWARD_UNGUIDED = "forward-unguided"


@dataclass
class MatchConfig:
    strategy: Strategy = Strategy.GUIDED
    # Look for a second satisfying path to set the ambiguity flag.
    probe_ambiguity: bool = True
    # When > 0, enumerate up to this many satisfying paths.
    max_paths: int = 0
    # Visits allowed per record while the stack window gives no guidance.
    unguided_budget: int = 100_000
    max_visits: int | None = 5_000_000
    k: int | None = None
    pid: int | None = None
    prefixes: Sequence[str] | None = None
    jobs: int | None = 1


def is_matched(emu_cur: Sequence[ApiSignature], p: Sequence[ApiSignature], target_len: int) -> bool:
    """Check the emulated frames against the record's stack window.

    ``target_len`` is the chain length at the record; the window covers
    positions ``target_len - len(p)`` onward. Frames below it are unconstrained.
    """
    start = max(0, target_len - len(p))
    for depth in range(start, len(emu_cur)):
        j = depth - start
        if j >= len(p) or emu_cur[depth] != p[j]:
            return False
    return True


def node_checking(n: Node, lr_last: LogRecord, lr_next: LogRecord, emu_last: EmuStack, emu_cur: EmuStack) -> Decision:
    if not emu_cur or emu_cur[-1] != n.method.signature:
        emu_cur = (*emu_cur, n.method.signature)
    delta_d = lr_next.csi.d - lr_last.csi.d
    dis = delta_d - (len(emu_cur) - len(emu_last))
    p = lr_next.csi.p
    if dis < 0:
        return Decision.BACKTRACK
    if dis < len(p):
        return Decision.PROCEED if is_matched(emu_cur, p, len(emu_last) + delta_d) else Decision.BACKTRACK
    return Decision.FORWARD_UNGUIDED


@dataclass
class PathSegment:
    callback: ApiSignature
    nodes: list[int]
    match_points: dict[int, int]
    overlay: GraphOverlay
    visited_count: int
    ambiguous: bool = False
    probe_visited: int = 0
    # Distinct node ids visited before the first solution.
    visited_nodes: frozenset = frozenset()
    alternatives: list[list[int]] = field(default_factory=list)
    elapsed: float = 0.0
    segment_index: int = 0


@dataclass
class SegmentFailure:
    callback: ApiSignature
    reason: str
    deepest_index: int = 0
    visited_count: int = 0
    elapsed: float = 0.0
    segment_index: int = 0


@dataclass
class Path:
    segments: list[PathSegment]
    joins: list[tuple[int, int]]

    @property
    def nodes(self) -> list[int]:
        return [n for seg in self.segments for n in seg.nodes]


def _accepts(guided, node_sig, rec_next, rec_last, frames, emu_last, k):
    if node_sig != rec_next.des.signature:
        return False
    if not guided:
        return True
    p = rec_next.csi.p
    delta_d = rec_next.csi.d - rec_last.csi.d
    if len(frames) - len(emu_last) != delta_d:
        return False
    if len(p) > len(frames) or (k is not None and len(p) != min(k, len(frames))):
        return False
    return tuple(frames[len(frames) - len(p):]) == tuple(p)


_IN_PROGRESS = -1


class _Search:
    def __init__(self, model: AppModel, g: Supergraph, seg: LogSegment, cfg: MatchConfig, first_id: int):
        self.model = model
        self.g = g
        self.records = seg.records
        self.m = len(seg.body)
        self.cfg = cfg
        self.guided = cfg.strategy is Strategy.GUIDED
        self.overlay = GraphOverlay(g, first_id)
        self.first_id = first_id
        self.silent = silent_methods(model) if self.guided else frozenset()
        self.visits = 0
        self.distinct: set[int] = set()
        self.deepest = 0
        self.unguided = [0] * (self.m + 2)
        self.solutions: list[tuple[list[int], list[tuple[int, int]]]] = []
        self.solution_count = 0
        self.first_visits = 0
        self.first_distinct: frozenset = frozenset()
        self.truncated = False

    def _want(self) -> int:
        if self.cfg.max_paths > 0:
            return self.cfg.max_paths
        return 2 if self.cfg.probe_ambiguity else 1

    def _child(self, edge, node, idx, frames, sites, last):
        dst = self.overlay.node(edge.dst)
        if edge.kind is EdgeKind.FLOW:
            return (dst.id, idx, frames, sites, last)
        if edge.kind is EdgeKind.RETURN:
            return (dst.id, idx, frames[:-1], sites[:-1], last)
        callee = dst.method.signature
        new_frames = frames + (callee,)
        if self.guided and idx <= self.m:
            decision = node_checking(dst, self.records[idx - 1], self.records[idx], last, new_frames)
            if decision is Decision.BACKTRACK and callee not in self.silent:
                return None
        return (dst.id, idx, new_frames, sites + (node.id,), last)

    def run(self):
        entry = self.g.root_entry
        cb = self.g.root.signature
        if self.m == 0:
            self.visits = 1
            self.distinct.add(entry)
            self.solutions.append(([entry], [(0, 0)]))
            self.solution_count = 1
            self.first_visits = 1
            self.first_distinct = frozenset(self.distinct)
            return
        status: dict[tuple, int] = {}
        path: list[int] = []
        matches: list[tuple[int, int]] = [(0, 0)]
        want = self._want()
        enumerate_all = self.cfg.max_paths > 0
        # frame: [key, children, next_child, count, matched]
        stack: list[list] = []
        pending = [(entry, 1, (cb,), (), (cb,))]
        result = None
        while True:
            if pending:
                state = pending.pop()
                node_id, idx, frames, sites, last = state
                key = (node_id, idx, frames, sites, len(last))
                seen = status.get(key)
                if seen is not None and (seen <= 0 or not enumerate_all):
                    result = max(seen, 0)
                    if result:
                        self.solution_count += result
                else:
                    result = self._open(state, key, status, stack, path, matches)
            if result is not None:
                if not stack:
                    break
                top = stack[-1]
                top[3] += result
                result = None
            if self.solution_count >= want:
                break
            if self.cfg.max_visits is not None and self.visits > self.cfg.max_visits:
                self.truncated = True
                break
            top = stack[-1]
            children = top[1]
            while top[2] < len(children) and children[top[2]] is None:
                top[2] += 1
            if top[2] < len(children):
                pending.append(children[top[2]])
                top[2] += 1
                continue
            stack.pop()
            status[top[0]] = min(top[3], 2)
            path.pop()
            if top[4]:
                matches.pop()
            result = top[3]

    def _open(self, state, key, status, stack, path, matches):
        node_id, idx, frames, sites, last = state
        self.visits += 1
        self.distinct.add(node_id)
        node = self.overlay.node(node_id)
        rec_next, rec_last = self.records[idx], self.records[idx - 1]
        if self.guided:
            dis = (rec_next.csi.d - rec_last.csi.d) - (len(frames) - len(last))
            if dis >= len(rec_next.csi.p) and dis > 0:
                self.unguided[idx] += 1
                if self.unguided[idx] > self.cfg.unguided_budget:
                    raise NoMatchError(
                        f"unguided search budget ({self.cfg.unguided_budget}) exhausted at record {idx}",
                        self.deepest, budget_exceeded=True)
        embed = None
        matched = False
        if self.model.is_logged(node):
            if not _accepts(self.guided, node.invoked_api, rec_next, rec_last, frames, last, self.cfg.k):
                status[key] = 0
                return 0
            matched = True
            self.deepest = max(self.deepest, idx)
            if idx == self.m:
                path.append(node_id)
                matches.append((idx, len(path) - 1))
                self.solution_count += 1
                if len(self.solutions) < max(1, self.cfg.max_paths):
                    if not self.solutions:
                        self.first_visits = self.visits
                        self.first_distinct = frozenset(self.distinct)
                    self.solutions.append((list(path), list(matches)))
                path.pop()
                matches.pop()
                status[key] = 1
                return 1
            if node.statement.callee.kind in (CalleeKind.REFLECTIVE, CalleeKind.ICC):
                embed = apply_des(self.overlay, node, rec_next.des, self.model)
        status[key] = _IN_PROGRESS
        path.append(node_id)
        if matched:
            matches.append((idx, len(path) - 1))
            idx, last = idx + 1, frames
        edges = walk_edges(self.overlay, node, sites, embed)
        children = [self._child(e, node, idx, frames, sites, last) for e in edges]
        # pending is a LIFO; keep edge order by consuming children front to back.
        stack.append([key, children, 0, 0, matched])
        return None

    def finalize(self, path: list[int], matches: list[tuple[int, int]]) -> tuple[list[int], dict[int, int], GraphOverlay]:
        """Rebuild a clean overlay holding only this path's updates, renumbering
        overlay nodes in path order."""
        fresh = GraphOverlay(self.g, self.first_id)
        mapping: dict[int, int] = {}
        match_pos = {pos: idx for idx, pos in matches}
        for pos, node_id in enumerate(path):
            idx = match_pos.get(pos)
            if idx is None or idx == 0:
                continue
            node = self.overlay.node(node_id)
            callee = node.statement.callee
            if callee is None or callee.kind not in (CalleeKind.REFLECTIVE, CalleeKind.ICC) or idx == self.m:
                continue
            des = self.records[idx].des
            final_node = fresh.node(mapping.get(node_id, node_id))
            temp = apply_des(self.overlay, node, des, self.model)
            final = apply_des(fresh, final_node, des, self.model)
            for a, b in zip(temp.created, final.created):
                mapping[a] = b
        nodes = [mapping.get(n, n) for n in path]
        points = {idx: nodes[pos] for idx, pos in matches}
        return nodes, points, fresh


def _check_segment(model: AppModel, g: Supergraph, seg: LogSegment):
    if g.root.signature != seg.callback.des.signature:
        raise ContractError(
            f"segment callback {seg.callback.des.signature} does not root supergraph {g.root.signature}")
    for rec in seg.body:
        if rec.des.signature not in model.logged_api_set:
            raise ContractError(f"record seq {rec.seq} ({rec.des.signature}) is not a logged API")


def _match(model, g, seg, cfg, first_id, strategy) -> PathSegment:
    _check_segment(model, g, seg)
    cfg = _with_strategy(cfg, strategy)
    start = time.perf_counter()
    search = _Search(model, g, seg, cfg, first_id)
    search.run()
    elapsed = time.perf_counter() - start
    if not search.solutions:
        reason = "search budget exhausted" if search.truncated else "no path satisfies the segment"
        raise NoMatchError(f"{reason}; deepest matched record {search.deepest} of {search.m}",
                           search.deepest, budget_exceeded=search.truncated, visited_count=search.visits)
    first_path, first_matches = search.solutions[0]
    nodes, points, overlay = search.finalize(first_path, first_matches)
    alternatives = []
    if cfg.max_paths > 0:
        alternatives = [search.finalize(p, mt)[0] for p, mt in search.solutions]
    return PathSegment(
        callback=g.root.signature,
        nodes=nodes,
        match_points=points,
        overlay=overlay,
        visited_count=search.first_visits,
        ambiguous=search.solution_count >= 2,
        probe_visited=search.visits,
        visited_nodes=search.first_distinct,
        alternatives=alternatives,
        elapsed=elapsed,
    )


def _with_strategy(cfg: MatchConfig, strategy: Strategy) -> MatchConfig:
    if cfg.strategy is strategy:
        return cfg
    return MatchConfig(**{**cfg.__dict__, "strategy": strategy})


def match_segment(g: Supergraph, seg: LogSegment, cfg: MatchConfig | None = None, *,
                  model: AppModel | None = None, first_id: int | None = None) -> PathSegment:
    """Find the walk of ``g`` that produced ``seg`` using stack-guided pruning."""
    model = model or g.model
    cfg = cfg or MatchConfig()
    first_id = model.max_node_id + 1 if first_id is None else first_id
    return _match(model, g, seg, cfg, first_id, Strategy.GUIDED)


def match_segment_backtracking(g: Supergraph, seg: LogSegment, cfg: MatchConfig | None = None, *,
                               model: AppModel | None = None, first_id: int | None = None) -> PathSegment:
    """Baseline: same DFS, records matched by signature only."""
    model = model or g.model
    cfg = cfg or MatchConfig()
    first_id = model.max_node_id + 1 if first_id is None else first_id
    return _match(model, g, seg, cfg, first_id, Strategy.BACKTRACKING)


def combine(segments: Sequence[PathSegment | SegmentFailure]) -> Path:
    """Join per-segment paths in callback order."""
    if not segments:
        raise ContractError("combine needs at least one segment")
    for i, seg in enumerate(segments):
        if isinstance(seg, SegmentFailure):
            raise CombineError(f"segment {i} ({seg.callback}) failed: {seg.reason}", i)
    joins = []
    for prev, nxt in zip(segments, segments[1:]):
        last_matched = prev.match_points[max(prev.match_points)]
        head = next((n for n in nxt.nodes if nxt.overlay.in_degree(n) == 0), nxt.nodes[0])
        joins.append((last_matched, head))
    return Path(list(segments), joins)


# -- whole-log pipeline ---------------------------------------------------------

@dataclass
class ThreadResult:
    tid: int
    segments: list[PathSegment | SegmentFailure]
    prelude: list[LogRecord]
    path: Path | None = None
    failure: str | None = None


@dataclass
class MatchReport:
    strategy: Strategy
    threads: list[ThreadResult] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    pid: int | None = None

    @property
    def distinct_visited(self) -> int:
        return len({n for s in self.segment_results() if isinstance(s, PathSegment) for n in s.visited_nodes})

    @property
    def ok(self) -> bool:
        return all(t.path is not None for t in self.threads)

    @property
    def ambiguous(self) -> bool:
        return any(isinstance(s, PathSegment) and s.ambiguous for t in self.threads for s in t.segments)

    @property
    def visited_count(self) -> int:
        return sum(s.visited_count for t in self.threads for s in t.segments)

    @property
    def path_nodes(self) -> list[int]:
        return [n for t in self.threads for s in t.segments if isinstance(s, PathSegment) for n in s.nodes]

    def segment_results(self) -> list[PathSegment | SegmentFailure]:
        return [s for t in self.threads for s in t.segments]


def choose_pid(model: AppModel, seq: LogSequence) -> int | None:
    """Pid that produced the most callback records of this model."""
    callbacks = set(model.callback_registry)
    counts: dict[int, int] = {}
    for rec in seq:
        if rec.des.signature in callbacks:
            counts[rec.pid] = counts.get(rec.pid, 0) + 1
    if not counts:
        pids = {r.pid for r in seq}
        return next(iter(pids)) if len(pids) == 1 else None
    return max(sorted(counts), key=lambda p: counts[p])


def _run_segment(model, seg, cfg, ordinal):
    g = model.supergraphs.get(seg.callback.des.signature)
    if g is None:
        return SegmentFailure(seg.callback.des.signature, "no supergraph for this callback", segment_index=ordinal)
    start = time.perf_counter()
    try:
        result = _match(model, g, seg, cfg, model.max_node_id + 1, cfg.strategy)
    except NoMatchError as exc:
        return SegmentFailure(g.root.signature, str(exc), exc.deepest_index,
                              exc.visited_count, time.perf_counter() - start, ordinal)
    except LogPathError as exc:
        return SegmentFailure(g.root.signature, str(exc), 0, 0, time.perf_counter() - start, ordinal)
    result.segment_index = ordinal
    return result


def match_all(model: AppModel, seq: LogSequence, cfg: MatchConfig | None = None) -> MatchReport:
    """scope -> filter -> partition -> segment -> match each segment -> combine."""
    cfg = cfg or MatchConfig()
    if cfg.k is None:
        cfg = MatchConfig(**{**cfg.__dict__, "k": seq.k})
    report = MatchReport(cfg.strategy)
    if not len(seq):
        return report
    pid = cfg.pid if cfg.pid is not None else choose_pid(model, seq)
    report.pid = pid
    if pid is None:
        report.diagnostics.append("could not determine the app pid; pass one explicitly")
        return report
    scoped = scope(seq, pid)
    prefixes = model.library_prefixes if cfg.prefixes is None else tuple(cfg.prefixes)
    filtered = split_library_records(scoped, prefixes)
    if filtered.removed:
        report.diagnostics.append(f"removed {len(filtered.removed)} library records")
    for rec in filtered.no_caller:
        report.diagnostics.append(f"record seq {rec.seq} has no caller frames; kept")
    jobs: list[tuple[int, LogSegment]] = []
    per_thread = []
    for part in partition_by_thread(filtered.kept):
        segs, prelude = segment(part, model.callback_registry)
        tid = part.records[0].tid
        if prelude:
            report.diagnostics.append(f"thread {tid}: {len(prelude)} records precede the first callback")
        per_thread.append((tid, len(segs), prelude))
        jobs.extend((len(jobs), s) for s in segs)
    workers = cfg.jobs if cfg.jobs else min(len(jobs), os.cpu_count() or 1)
    if workers and workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda j: _run_segment(model, j[1], cfg, j[0]), jobs))
    else:
        results = [_run_segment(model, s, cfg, i) for i, s in jobs]
    offset = 0
    for tid, count, prelude in per_thread:
        segs = results[offset:offset + count]
        offset += count
        thread = ThreadResult(tid, segs, prelude)
        if segs:
            try:
                thread.path = combine(segs)
            except CombineError as exc:
                thread.failure = str(exc)
                report.diagnostics.append(f"thread {tid}: {exc}")
        report.threads.append(thread)
    return report
