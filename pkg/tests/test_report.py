import json

from logpath.fixtures import ON_CREATE, motivating_example, motivating_log
from logpath.logs import LogSequence
from logpath.matcher import MatchConfig, match_all
from logpath.report import report_to_dict, strip_timing, to_dot


def _report():
    model, v = motivating_example()
    seg = motivating_log()
    log = LogSequence(seg.records, 11)
    return model, v, match_all(model, log, MatchConfig(pid=100))


def test_report_dict():
    model, v, report = _report()
    data = report_to_dict(report)
    (thread,) = data["threads"]
    (seg,) = thread["segments"]
    assert seg["status"] == "matched" and seg["callback"] == str(ON_CREATE)
    assert seg["match_points"]["1"] == v["v2"]
    assert [n["id"] for n in seg["overlay"]["nodes"]] == [16, 17, 18]
    json.dumps(data)


def test_strip_timing():
    _, _, report = _report()
    stripped = strip_timing(report_to_dict(report))
    assert "elapsed" not in json.dumps(stripped)


def test_dot_marks_matched_and_overlay_nodes():
    model, v, report = _report()
    dot = to_dot(model, report)
    assert dot.startswith("digraph logpath {") and dot.rstrip().endswith("}")
    assert f's0_{v["v2"]} [label=' in dot and 'fillcolor="gray"' in dot
    assert "peripheries=2" in dot and "style=dashed" in dot
