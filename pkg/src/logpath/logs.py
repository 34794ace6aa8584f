"""Audit log records and the scope / filter / partition / segment pipeline."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import LogParseError, LogValidationError
from .graph import ApiSignature


@dataclass(frozen=True)
class ReflectiveTarget:
    unit: str
    method: str
    descriptor: str

    def __post_init__(self):
        if not (self.unit and self.method and self.descriptor):
            raise ValueError("reflective target needs unit, method and descriptor")

    @property
    def signature(self) -> ApiSignature:
        return ApiSignature(self.unit, self.method, self.descriptor)


@dataclass(frozen=True)
class IccLink:
    origin: str
    target: str

    def __post_init__(self):
        if not (self.origin and self.target):
            raise ValueError("ICC link needs origin and target components")


@dataclass(frozen=True)
class Des:
    signature: ApiSignature
    args: tuple[str, ...] = ()
    special: ReflectiveTarget | IccLink | None = None


@dataclass(frozen=True)
class CallStackInfo:
    """Deepest-K window of app frames (caller first) plus total stack depth."""

    p: tuple[ApiSignature, ...]
    d: int

    def __post_init__(self):
        if self.d < 0:
            raise ValueError("stack depth must be non-negative")


@dataclass(frozen=True)
class LogRecord:
    seq: int
    pid: int
    tid: int
    des: Des
    csi: CallStackInfo

    @property
    def signature(self) -> ApiSignature:
        return self.des.signature


@dataclass(frozen=True)
class LogSequence:
    records: tuple[LogRecord, ...]
    k: int

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def replace(self, records: Iterable[LogRecord]) -> "LogSequence":
        return LogSequence(tuple(records), self.k)


@dataclass(frozen=True)
class LogSegment:
    callback: LogRecord
    body: tuple[LogRecord, ...] = ()

    @property
    def records(self) -> tuple[LogRecord, ...]:
        return (self.callback,) + self.body

    def __len__(self):
        return len(self.body) + 1


# -- JSON-lines format --------------------------------------------------------

_RECORD_FIELDS = {"seq", "pid", "tid", "des", "csi"}
_DES_FIELDS = {"sig", "args", "special"}
_CSI_FIELDS = {"p", "d"}


def _check_fields(obj, allowed, what):
    if not isinstance(obj, dict):
        raise ValueError(f"{what} must be an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ValueError(f"unknown {what} fields {sorted(unknown)}")
    missing = allowed - set(obj) - {"special", "args"}
    if missing:
        raise ValueError(f"missing {what} fields {sorted(missing)}")


def _int(value, what):
    if not isinstance(value, int) or isinstance(value, bool):
        raise ValueError(f"{what} must be an integer")
    return value


def _special_from_json(obj):
    if obj is None:
        return None
    if not isinstance(obj, dict):
        raise ValueError("special must be null or an object")
    kind = obj.get("kind")
    if kind == "reflective":
        _check_fields(obj, {"kind", "unit", "method", "desc"}, "reflective special")
        return ReflectiveTarget(obj["unit"], obj["method"], obj["desc"])
    if kind == "icc":
        _check_fields(obj, {"kind", "origin", "target"}, "icc special")
        return IccLink(obj["origin"], obj["target"])
    raise ValueError(f"unknown special kind {kind!r}")


def record_from_json(obj) -> LogRecord:
    _check_fields(obj, _RECORD_FIELDS, "record")
    des_obj, csi_obj = obj["des"], obj["csi"]
    _check_fields(des_obj, _DES_FIELDS, "des")
    _check_fields(csi_obj, _CSI_FIELDS, "csi")
    args = des_obj.get("args", [])
    if not isinstance(args, list) or not all(isinstance(a, str) for a in args):
        raise ValueError("des.args must be a list of strings")
    if not isinstance(csi_obj["p"], list):
        raise ValueError("csi.p must be a list")
    des = Des(ApiSignature.parse(des_obj["sig"]), tuple(args), _special_from_json(des_obj.get("special")))
    csi = CallStackInfo(tuple(ApiSignature.parse(s) for s in csi_obj["p"]), _int(csi_obj["d"], "csi.d"))
    return LogRecord(_int(obj["seq"], "seq"), _int(obj["pid"], "pid"), _int(obj["tid"], "tid"), des, csi)


def record_to_json(rec: LogRecord) -> dict:
    special = rec.des.special
    if isinstance(special, ReflectiveTarget):
        special_obj = {"kind": "reflective", "unit": special.unit, "method": special.method,
                       "desc": special.descriptor}
    elif isinstance(special, IccLink):
        special_obj = {"kind": "icc", "origin": special.origin, "target": special.target}
    else:
        special_obj = None
    return {
        "seq": rec.seq, "pid": rec.pid, "tid": rec.tid,
        "des": {"sig": str(rec.des.signature), "args": list(rec.des.args), "special": special_obj},
        "csi": {"p": [str(s) for s in rec.csi.p], "d": rec.csi.d},
    }


def parse_log(serialized: bytes | str, k: int) -> LogSequence:
    """Parse a JSON-lines audit log recorded with stack window ``k``."""
    if isinstance(serialized, bytes):
        serialized = serialized.decode("utf-8")
    records = []
    last_seq = None
    for lineno, line in enumerate(serialized.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = record_from_json(json.loads(line))
        except json.JSONDecodeError as exc:
            raise LogParseError(f"malformed JSON: {exc.msg} (column {exc.colno})", lineno) from None
        except (ValueError, KeyError, TypeError) as exc:
            raise LogParseError(str(exc), lineno) from None
        if len(rec.csi.p) > k:
            raise LogValidationError(f"call-stack window has {len(rec.csi.p)} frames, K is {k}", lineno)
        if last_seq is not None and rec.seq <= last_seq:
            raise LogValidationError(f"seq {rec.seq} does not increase (previous {last_seq})", lineno)
        last_seq = rec.seq
        records.append(rec)
    return LogSequence(tuple(records), k)


def infer_k(serialized: bytes | str) -> int:
    """Largest window length present in a log (at least 1)."""
    if isinstance(serialized, bytes):
        serialized = serialized.decode("utf-8")
    k = 1
    for line in serialized.splitlines():
        if line.strip():
            try:
                k = max(k, len(json.loads(line)["csi"]["p"]))
            except (ValueError, KeyError, TypeError):
                continue
    return k


def dump_log(seq: LogSequence | Iterable[LogRecord]) -> bytes:
    lines = [json.dumps(record_to_json(r), ensure_ascii=False) for r in seq]
    return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")


# -- pipeline -----------------------------------------------------------------

def scope(seq: LogSequence, pid: int) -> LogSequence:
    return seq.replace(r for r in seq if r.pid == pid)


def has_prefix(unit: str, prefix: str) -> bool:
    """Package-aware prefix test: ``android.app`` covers ``android.app.Activity``."""
    if prefix.endswith("."):
        return unit.startswith(prefix)
    return unit == prefix or unit.startswith(prefix + ".")


def is_library_record(rec: LogRecord, prefixes: Sequence[str]) -> bool:
    if not rec.csi.p:
        return False
    unit = rec.csi.p[-1].declaring_unit
    return any(has_prefix(unit, prefix) for prefix in prefixes)


@dataclass
class FilterResult:
    kept: LogSequence
    removed: list[LogRecord] = field(default_factory=list)
    # Kept only because there was no caller frame to test.
    no_caller: list[LogRecord] = field(default_factory=list)


def split_library_records(seq: LogSequence, prefixes: Sequence[str]) -> FilterResult:
    kept, removed, no_caller = [], [], []
    for rec in seq:
        if not rec.csi.p:
            no_caller.append(rec)
            kept.append(rec)
        elif is_library_record(rec, prefixes):
            removed.append(rec)
        else:
            kept.append(rec)
    return FilterResult(seq.replace(kept), removed, no_caller)


def filter_library_records(seq: LogSequence, prefixes: Sequence[str]) -> LogSequence:
    """Drop records whose deepest caller frame lives in a library package."""
    return split_library_records(seq, prefixes).kept


def partition_by_thread(seq: LogSequence) -> list[LogSequence]:
    groups: dict[int, list[LogRecord]] = {}
    for rec in seq:
        groups.setdefault(rec.tid, []).append(rec)
    return [seq.replace(recs) for recs in groups.values()]


def segment(seq: LogSequence, callbacks: Iterable[ApiSignature]) -> tuple[list[LogSegment], list[LogRecord]]:
    """Split a single-thread log at callback records.

    Returns the segments and the prelude (records seen before any callback).
    """
    callbacks = frozenset(callbacks)
    segments: list[LogSegment] = []
    prelude: list[LogRecord] = []
    current: LogRecord | None = None
    body: list[LogRecord] = []
    for rec in seq:
        if rec.des.signature in callbacks:
            if current is not None:
                segments.append(LogSegment(current, tuple(body)))
            current, body = rec, []
        elif current is None:
            prelude.append(rec)
        else:
            body.append(rec)
    if current is not None:
        segments.append(LogSegment(current, tuple(body)))
    return segments, prelude
