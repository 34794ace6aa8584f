import json
import random

import pytest
from hypothesis import given, strategies as st

from logpath.errors import LogParseError, LogValidationError
from logpath.graph import ApiSignature
from logpath.logs import (
    CallStackInfo, Des, IccLink, LogRecord, LogSegment, LogSequence, ReflectiveTarget, dump_log,
    filter_library_records, infer_k, parse_log, partition_by_thread, scope, segment,
)
from logpath.simulator import GenParams, generate_app, simulate

S = ApiSignature.parse
MAIN = S("com.example.Main.onCreate(Landroid/os/Bundle;)V")
HELPER = S("com.example.Helper.run()V")
ACTIVITY = S("android.app.Activity.performCreate(Landroid/os/Bundle;)V")
API = S("android.telephony.TelephonyManager.getDeviceId()Ljava/lang/String;")


def rec(seq, pid=10, tid=1, sig=API, p=(MAIN,), d=9, special=None):
    return LogRecord(seq, pid, tid, Des(sig, (), special), CallStackInfo(tuple(p), d))


def line(seq, p_len):
    return json.dumps({"seq": seq, "pid": 1, "tid": 1, "des": {"sig": str(API)},
                       "csi": {"p": [str(MAIN)] * p_len, "d": 7 + p_len}})


def test_parse_empty():
    assert len(parse_log(b"", 11)) == 0


def test_parse_one_record():
    seq = parse_log(line(0, 3), 11)
    assert len(seq) == 1 and len(seq.records[0].csi.p) == 3


def test_parse_window_longer_than_k():
    with pytest.raises(LogValidationError) as info:
        parse_log(line(0, 12), 11)
    assert info.value.line == 1


def test_parse_rejects_unknown_fields_and_bad_order():
    bad = json.loads(line(0, 1))
    bad["extra"] = 1
    with pytest.raises(LogParseError):
        parse_log(json.dumps(bad), 11)
    with pytest.raises(LogValidationError):
        parse_log(line(3, 1) + "\n" + line(2, 1), 11)
    with pytest.raises(LogParseError) as info:
        parse_log(line(0, 1) + "\n{oops", 11)
    assert info.value.line == 2


def test_infer_k():
    assert infer_k(line(0, 3) + "\n" + line(1, 5)) == 5
    assert infer_k("") == 1


sig_st = st.sampled_from([MAIN, HELPER, API, ACTIVITY])
special_st = st.one_of(st.none(), st.builds(ReflectiveTarget, st.just("a.B"), st.just("m"), st.just("()V")),
                       st.builds(IccLink, st.just("a.B"), st.just("a.C")))


@given(st.lists(st.tuples(st.integers(1, 3), st.integers(1, 4), sig_st, st.lists(sig_st, max_size=4),
                          st.integers(0, 40), special_st), max_size=15))
def test_dump_parse_roundtrip(items):
    records = tuple(LogRecord(i, pid, tid, Des(sig, ("x",) if special else (), special), CallStackInfo(tuple(p), d))
                    for i, (pid, tid, sig, p, d, special) in enumerate(items))
    seq = LogSequence(records, 4)
    assert parse_log(dump_log(seq), 4) == seq


def test_scope():
    seq = LogSequence((rec(0, pid=10), rec(1, pid=10), rec(2, pid=12)), 11)
    assert len(scope(seq, 10)) == 2
    assert len(scope(seq, 99)) == 0


def test_scope_two_app_log():
    model = generate_app(GenParams(node_budget=500, seed=1))
    log, truth = simulate(model, 4, k=11, foreign_records=25)
    app = [r for r in truth.records if not r.foreign]
    assert len(scope(log, truth.pid)) == len(app)


def test_filter_by_deepest_caller():
    seq = LogSequence((rec(0, p=(MAIN, ACTIVITY)), rec(1, p=(ACTIVITY, MAIN))), 11)
    kept = filter_library_records(seq, ["android.app"])
    assert [r.seq for r in kept] == [1]


def test_filter_prefix_is_package_aware():
    other = S("android.application.Foo.bar()V")
    seq = LogSequence((rec(0, p=(other,)),), 11)
    assert len(filter_library_records(seq, ["android.app"])) == 1


def test_filter_hundred_records():
    rng = random.Random(37)
    library = set(rng.sample(range(100), 37))
    seq = LogSequence(tuple(rec(i, p=(MAIN, ACTIVITY) if i in library else (ACTIVITY, MAIN)) for i in range(100)), 11)
    kept = filter_library_records(seq, ["android.app", "java.security"])
    assert len(kept) == 63
    assert {r.seq for r in kept} == set(range(100)) - library


def test_partition():
    single = LogSequence((rec(0), rec(1)), 11)
    assert partition_by_thread(single) == [single]
    mixed = LogSequence((rec(0, tid=1), rec(1, tid=2), rec(2, tid=1)), 11)
    assert [len(p) for p in partition_by_thread(mixed)] == [2, 1]


def test_partition_matches_simulated_threads():
    model = generate_app(GenParams(node_budget=600, callbacks=3, seed=2))
    log, truth = simulate(model, 9, k=11, threads=3, noise_fraction=0.0)
    by_tid = {}
    for r in truth.records:
        by_tid.setdefault(r.tid, []).append(r.seq)
    parts = partition_by_thread(log)
    assert {p.records[0].tid: [r.seq for r in p] for p in parts} == by_tid


def test_segment_divide():
    m2, m3 = S("a.M2.cb()V"), S("a.M3.cb()V")
    b, c, d = rec(1, sig=S("x.B.b()V")), rec(2, sig=S("x.C.c()V")), rec(4, sig=S("x.D.d()V"))
    r_m2, r_m3 = rec(0, sig=m2), rec(3, sig=m3)
    segs, prelude = segment(LogSequence((r_m2, b, c, r_m3, d), 11), [m2, m3])
    assert segs == [LogSegment(r_m2, (b, c)), LogSegment(r_m3, (d,))]
    assert prelude == []
    segs, prelude = segment(LogSequence((b, r_m2.__class__(5, 10, 1, r_m2.des, r_m2.csi)), 11), [m2])
    assert len(segs) == 1 and segs[0].body == () and prelude == [b]
    segs, _ = segment(LogSequence((r_m2, b, rec(6, sig=m2)), 11), [m2])
    assert len(segs) == 2
