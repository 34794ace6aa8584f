"""Seeded synthetic corpus shared by the acceptance and property tests."""

from __future__ import annotations

import random

from logpath.graph import EdgeKind
from logpath.logs import filter_library_records, partition_by_thread, scope, segment
from logpath.errors import GenerationError
from logpath.simulator import GenParams, generate_app, max_chain_length, simulate

CORPUS_SIZE = 200
CORPUS_SEED = 20240611


def corpus_params(index: int, attempt: int = 0) -> GenParams:
    rng = random.Random(CORPUS_SEED * 1000 + index + 7919 * attempt)
    return GenParams(
        node_budget=rng.randint(500, 3000),
        branch_fraction=round(rng.uniform(0.1, 0.5), 3),
        logged_density=0.1,
        reflective_fraction=round(rng.uniform(0.0, 0.9), 3),
        icc_links=rng.randint(0, 2),
        max_call_depth=rng.randint(3, 8),
        callbacks=rng.randint(2, 5),
        seed=index,
    )


def corpus_instance(index: int, k: int = 11):
    """(params, model, log, truth). K is raised to the deepest simulated
    chain when the walk goes deeper than ``k``."""
    for attempt in range(5):
        params = corpus_params(index, attempt)
        try:
            model = generate_app(params)
            break
        except GenerationError:
            # infeasible draw (high branch fraction in a small budget): redraw
            continue
    else:
        raise GenerationError(f"corpus instance {index}: no feasible draw")
    scenario = dict(scenario_seed=10_000 + index, threads=1 + index % 2, events_per_thread=3)
    log, truth = simulate(model, k=k, **scenario)
    deepest = max_chain_length(truth)
    if deepest > k:
        log, truth = simulate(model, k=deepest, **scenario)
    return params, model, log, truth


def pipeline_segments(model, log, pid):
    """Log segments in the order the matcher numbers them."""
    kept = filter_library_records(scope(log, pid), model.library_prefixes)
    out = []
    for part in partition_by_thread(kept):
        segs, _ = segment(part, model.callback_registry)
        out.extend(segs)
    return out


def _reach(sg, start, stop):
    seen, stack = {start}, [start]
    while stack:
        cur = stack.pop()
        for edge in sg.out_edges(cur):
            if edge.kind in (EdgeKind.FLOW, EdgeKind.CALL) and edge.dst in sg.nodes and edge.dst not in seen \
                    and edge.dst != stop:
                seen.add(edge.dst)
                stack.append(edge.dst)
    return seen


def shared_signature_branches(model) -> int:
    """Branches whose arms, before they rejoin, each reach a logged call site
    with the same invoked API."""
    count = 0
    for sg in model.supergraphs.values():
        for b in sg.branch_nodes():
            arms = sg.flow_successors(b)
            if len(arms) < 2:
                continue
            reach = [_reach(sg, a, b) for a in arms]
            apis = []
            for i, r in enumerate(reach):
                others = set().union(*(reach[j] for j in range(len(reach)) if j != i))
                apis.append({sg.nodes[n].invoked_api for n in r - others if model.is_logged(sg.nodes[n])})
            if any(apis[i] & apis[j] for i in range(len(apis)) for j in range(i + 1, len(apis))):
                count += 1
    return count
