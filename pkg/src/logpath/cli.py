"""Command-line entry point: match, simulate, generate, analyze, compare."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analysis
from .errors import ContractError, GenerationError, LogParseError, LogPathError, ModelParseError, ModelValidationError
from .graph import dump_app_model, load_app_model
from .logs import dump_log, infer_k, parse_log
from .matcher import MatchConfig, PathSegment, Strategy, match_all
from .report import dumps_report, report_to_dict, strip_timing, to_dot
from .simulator import GenParams, GroundTruth, generate_app, simulate

EXIT_OK, EXIT_NOMATCH, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _read(path: str, binary: bool = True):
    if path == "-":
        data = sys.stdin.buffer.read()
    else:
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    return data if binary else data.decode("utf-8")


def _write(path: str, data: bytes | str):
    if isinstance(data, str):
        data = data.encode("utf-8")
    if path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(path).write_bytes(data)


def _load_model(path: str):
    try:
        return load_app_model(_read(path))
    except ModelParseError as exc:
        raise InputError(f"{path}: {exc}") from None
    except ModelValidationError as exc:
        lines = "\n  ".join(exc.diagnostics)
        raise InputError(f"{path}: invalid app model:\n  {lines}") from None


def _load_log(path: str, k: int | None):
    data = _read(path)
    try:
        return parse_log(data, k if k is not None else infer_k(data))
    except LogParseError as exc:
        raise InputError(f"{path}: {exc}") from None


def _load_truth(path: str) -> GroundTruth:
    try:
        return GroundTruth.from_dict(json.loads(_read(path)))
    except (ValueError, ContractError) as exc:
        raise InputError(f"{path}: {exc}") from None


def _load_json(path: str) -> dict:
    try:
        data = json.loads(_read(path))
    except ValueError as exc:
        raise InputError(f"{path}: malformed JSON: {exc}") from None
    if not isinstance(data, dict):
        raise InputError(f"{path}: expected a JSON object")
    return data


def _info(args, text: str):
    # Keep stdout clean when it carries an artifact.
    stream = sys.stderr if getattr(args, "output", None) in ("-", None) else sys.stdout
    print(text, file=stream)


# -- match ------------------------------------------------------------------------

def cmd_match(args) -> int:
    model = _load_model(args.graph)
    log = _load_log(args.log, args.k)
    truth = _load_truth(args.truth) if args.truth else None
    prefixes = None
    if args.prefixes:
        prefixes = [line.strip() for line in _read(args.prefixes, binary=False).splitlines()
                    if line.strip() and not line.startswith("#")]
    strategy = Strategy(args.strategy)
    cfg = MatchConfig(strategy=strategy, max_paths=args.all_paths or 0, k=log.k, pid=args.pid,
                      prefixes=prefixes, jobs=args.jobs, unguided_budget=args.unguided_budget)
    report = match_all(model, log, cfg)
    data = report_to_dict(report, truth)
    if args.no_timing:
        data = strip_timing(data)
    _write(args.output, dumps_report(data))
    if args.emit_dot:
        dot_path = args.emit_dot
        if dot_path == "auto":
            dot_path = "report.dot" if args.output == "-" else str(Path(args.output).with_suffix(".dot"))
        _write(dot_path, to_dot(model, report))
    for thread in report.threads:
        matched = sum(isinstance(s, PathSegment) for s in thread.segments)
        visited = sum(s.visited_count for s in thread.segments)
        elapsed = sum(s.elapsed for s in thread.segments)
        _info(args, f"tid {thread.tid}: {matched}/{len(thread.segments)} segments matched, "
                    f"{visited} nodes visited, {elapsed:.3f}s")
    for line in report.diagnostics:
        print(f"note: {line}", file=sys.stderr)
    if not report.threads and len(log):
        print("error: no records of the app remain after scoping", file=sys.stderr)
        return EXIT_NOMATCH
    if not report.ok:
        for seg in report.segment_results():
            if not isinstance(seg, PathSegment):
                print(f"no match: {seg.callback}: {seg.reason}", file=sys.stderr)
        return EXIT_NOMATCH
    if args.strict and report.ambiguous:
        print("ambiguous: more than one path matches the log", file=sys.stderr)
        return EXIT_NOMATCH
    return EXIT_OK


# -- simulate / generate ------------------------------------------------------------

SCENARIO_KEYS = {"seed", "k", "threads", "events_per_thread", "noise_fraction", "base_offset", "pid",
                 "foreign_records"}


def _split_params(data: dict) -> tuple[GenParams, dict]:
    if "gen" in data or "scenario" in data:
        extra = set(data) - {"gen", "scenario"}
        if extra:
            raise InputError(f"unknown parameter sections {sorted(extra)}")
        gen, scenario = data.get("gen", {}), data.get("scenario", {})
    else:
        gen = {k: v for k, v in data.items() if k not in SCENARIO_KEYS}
        scenario = {k: v for k, v in data.items() if k in SCENARIO_KEYS}
    unknown = set(scenario) - SCENARIO_KEYS
    if unknown:
        raise InputError(f"unknown scenario parameters {sorted(unknown)}")
    try:
        return GenParams.from_dict(gen), scenario
    except (GenerationError, TypeError) as exc:
        raise InputError(str(exc)) from None


def cmd_generate(args) -> int:
    params, _ = _split_params(_load_json(args.params))
    if args.seed is not None:
        params = GenParams.from_dict({**params.__dict__, "seed": args.seed})
    try:
        model = generate_app(params)
    except GenerationError as exc:
        raise InputError(str(exc)) from None
    _write(args.output, dump_app_model(model))
    _info(args, f"generated {model.node_count()} nodes, {model.branch_count()} branch nodes, "
                f"{len(model.supergraphs)} callbacks")
    return EXIT_OK


def cmd_simulate(args) -> int:
    params, scenario = _split_params(_load_json(args.params))
    if args.graph:
        model = _load_model(args.graph)
    else:
        try:
            model = generate_app(params)
        except GenerationError as exc:
            raise InputError(str(exc)) from None
    for key in ("seed", "k", "threads"):
        value = getattr(args, key)
        if value is not None:
            scenario[key] = value
    seed = scenario.pop("seed", 0)
    scenario.setdefault("k", 11)
    try:
        log, truth = simulate(model, seed, **scenario)
    except (ContractError, TypeError) as exc:
        raise InputError(str(exc)) from None
    _write(args.output, dump_log(log))
    if args.truth:
        _write(args.truth, truth.dumps())
    if args.model:
        _write(args.model, dump_app_model(model))
    _info(args, f"simulated {len(truth.segments)} callbacks, {len(log)} records "
                f"({len(truth.library_seqs)} library)")
    return EXIT_OK


# -- analyze / compare -------------------------------------------------------------

def cmd_analyze(args) -> int:
    model = _load_model(args.graph)
    try:
        if args.overhead:
            overhead = analysis.load_overhead(_read(args.overhead, binary=False))
        else:
            overhead = analysis.interpolate_overhead(analysis.PAPER_OVERHEAD_ANCHORS)
        ks = [k for k, _ in overhead]
        if ks != list(range(1, len(ks) + 1)):
            raise ContractError(f"overhead table must cover k = 1..n without gaps, got {ks}")
        cdf = analysis.depth_cdf(model, k_max=ks[-1])
        chosen = analysis.select_k(cdf, overhead)
    except ContractError as exc:
        raise InputError(str(exc)) from None
    _write(args.output, analysis.cdf_csv(cdf))
    _info(args, f"selected K = {chosen}")
    return EXIT_OK


def cmd_compare(args) -> int:
    model = _load_model(args.graph)
    log = _load_log(args.log, args.k)
    truth = _load_truth(args.truth)
    try:
        row = analysis.compare_strategies(model, log, truth, MatchConfig(jobs=args.jobs))
    except ContractError as exc:
        raise InputError(f"{args.truth}: {exc}") from None
    _write(args.output, analysis.table2_csv([row], timing=not args.no_timing))
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="logpath", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", help="reconstruct execution paths from an audit log")
    p.add_argument("-g", "--graph", required=True, help="app model JSON")
    p.add_argument("-l", "--log", required=True, help="JSON-lines log ('-' for stdin)")
    p.add_argument("-o", "--output", default="-", help="report JSON (default stdout)")
    strategy = p.add_mutually_exclusive_group()
    strategy.add_argument("--strategy", choices=[s.value for s in Strategy], default=None)
    strategy.add_argument("--guided", dest="strategy", action="store_const", const="guided")
    strategy.add_argument("--backtracking", dest="strategy", action="store_const", const="backtracking")
    p.add_argument("--all-paths", type=int, metavar="N", help="enumerate up to N matching paths per segment")
    p.add_argument("--strict", action="store_true", help="exit 1 when a segment is ambiguous")
    p.add_argument("--prefixes", metavar="FILE", help="library prefixes, one per line (overrides the model's)")
    p.add_argument("--pid", type=int, help="app process id (default: inferred from callback records)")
    p.add_argument("--emit-dot", nargs="?", const="auto", metavar="PATH", help="also write a DOT rendering")
    p.add_argument("--k", type=int, help="stack window size of the log (default: inferred)")
    p.add_argument("--truth", help="ground truth JSON; adds a correctness section to the report")
    p.add_argument("--jobs", type=int, default=None, help="parallel segment matches")
    p.add_argument("--unguided-budget", type=int, default=100_000)
    p.add_argument("--no-timing", action="store_true", help="omit elapsed-time fields")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("simulate", help="generate (or load) a model and simulate a labeled log")
    p.add_argument("-p", "--params", required=True, help="generator and scenario parameters (JSON)")
    p.add_argument("-g", "--graph", help="simulate this model instead of generating one")
    p.add_argument("-o", "--output", default="-", help="log output (default stdout)")
    p.add_argument("--truth", help="ground truth output")
    p.add_argument("--model", help="write the simulated model here")
    p.add_argument("--seed", type=int, help="scenario seed")
    p.add_argument("--k", type=int)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("generate", help="generate a synthetic app model")
    p.add_argument("-p", "--params", required=True)
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--seed", type=int, help="generator seed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("analyze", help="call-site depth CDF and the K it selects")
    p.add_argument("-g", "--graph", required=True)
    p.add_argument("--overhead", help="overhead anchors (JSON) or table (CSV k,overhead)")
    p.add_argument("-o", "--output", default="-", help="CDF CSV (default stdout)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", help="guided vs. backtracking against ground truth")
    p.add_argument("-g", "--graph", required=True)
    p.add_argument("-l", "--log", required=True)
    p.add_argument("-t", "--truth", required=True)
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--k", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-timing", action="store_true")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "match" and args.strategy is None:
        args.strategy = "guided"
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except LogPathError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
