import json
import time

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from logpath.builder import ModelBuilder, sig
from logpath.errors import ContractError, GenerationError
from logpath.fixtures import ADVERSARIAL_PARAMS, LARGE_LOG_SCENARIO
from logpath.graph import CalleeKind, StmtKind, dump_app_model, validate
from logpath.simulator import GenParams, GroundTruth, generate_app, make_csi, simulate

CB = sig("com.example.sim.Main.onCreate(Landroid/os/Bundle;)V")
HELPER = sig("com.example.sim.Net.send()V")
API_A = sig("android.location.LocationManager.getLastKnownLocation(Ljava/lang/String;)Landroid/location/Location;")
API_C = sig("android.telephony.SmsManager.getDefault()Landroid/telephony/SmsManager;")


def test_straight_line_generation():
    model = generate_app(GenParams(node_budget=10, branch_fraction=0.0, reflective_fraction=0.0, callbacks=1, seed=1))
    assert model.branch_count() == 0
    assert validate(model) == []
    (sg,) = model.supergraphs.values()
    assert all(len(sg.flow_successors(n)) <= 1 for n in sg.nodes)


def test_generation_is_deterministic():
    params = GenParams(node_budget=1500, branch_fraction=0.3, reflective_fraction=0.6, icc_links=2, seed=99)
    assert dump_app_model(generate_app(params)) == dump_app_model(generate_app(params))


def test_adversarial_scale():
    model = generate_app(ADVERSARIAL_PARAMS)
    assert abs(model.node_count() - 2600) <= 260
    assert abs(model.branch_count() - 600) <= 60
    # almost every app method beyond the callbacks is reached reflectively
    static_targets, reflective_only = set(), set()
    for sg in model.supergraphs.values():
        for node in sg.nodes.values():
            if node.callee is not None and node.callee.kind is CalleeKind.STATIC:
                static_targets.add(node.callee.target)
        reflective_only |= {s for s in sg.entry_of if s != sg.root.signature}
    helpers = reflective_only - static_targets
    assert len(helpers) >= 0.5 * len(reflective_only)


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(budget=st.integers(500, 3000), bf=st.floats(0.1, 0.5), rf=st.floats(0.0, 0.9), seed=st.integers(0, 1000))
def test_generator_hits_its_targets(budget, bf, rf, seed):
    try:
        model = generate_app(GenParams(node_budget=budget, branch_fraction=bf, reflective_fraction=rf, seed=seed))
    except GenerationError:
        return
    assert abs(model.node_count() - budget) <= 0.1 * budget
    assert abs(model.branch_count() / model.node_count() - bf) <= 0.05
    assert validate(model) == []


def test_params_are_checked():
    with pytest.raises(GenerationError):
        generate_app(GenParams(branch_fraction=1.5))
    with pytest.raises(GenerationError):
        generate_app(GenParams(icc_links=1, callbacks=1))
    with pytest.raises(GenerationError):
        GenParams.from_dict({"nodes": 5})


def nested_model():
    mb = ModelBuilder()
    g = mb.supergraph(CB)
    m = g.method(CB)
    a, call, x = m.framework(API_A), m.static(HELPER), m.exit()
    m.chain(m.entry, a, call, x)
    h = g.method(HELPER)
    c, hx = h.framework(API_C), h.exit()
    h.chain(h.entry, c, hx)
    mb.log_apis(API_A, API_C)
    return mb.build()


def test_two_logged_calls():
    log, truth = simulate(nested_model(), 1, k=11, noise_fraction=0.0, events_per_thread=1)
    assert [str(r.signature) for r in log] == [str(CB), str(API_A), str(API_C)]
    assert [r.csi.d for r in log] == [8, 8, 9]
    assert truth.segments[0].nodes[-1] == truth.segments[0].match_points[2]


def test_window_truncation():
    model = generate_app(GenParams(node_budget=900, reflective_fraction=0.2, max_call_depth=5, callbacks=2, seed=3))
    log, truth = simulate(model, 2, k=1, events_per_thread=3)
    assert max(r.chain_length for r in truth.records) >= 2
    assert all(len(r.csi.p) == 1 for r in log)


def test_deep_record():
    frames = [sig(f"com.example.deep.C{i}.m()V") for i in range(11)]
    csi = make_csi(frames, 11, base_offset=7)
    assert csi.d == 18 and csi.d - 7 == len(frames) and len(csi.p) == 11
    assert len(make_csi(frames, 4).p) == 4 and make_csi(frames, 4).p == tuple(frames[-4:])


def test_noise_share_and_tags():
    model = generate_app(GenParams(node_budget=600, seed=5))
    log, truth = simulate(model, 7, k=11, noise_fraction=0.5)
    library = truth.library_seqs
    assert abs(2 * len(library) - len(log)) <= 1
    prefixes = model.library_prefixes
    for rec in log:
        caller = rec.csi.p[-1].declaring_unit
        is_lib = any(caller == p or caller.startswith(p + ".") for p in prefixes)
        assert is_lib == (rec.seq in library)


def test_truth_roundtrip_and_errors():
    model = generate_app(GenParams(node_budget=600, icc_links=1, seed=6))
    _, truth = simulate(model, 1, k=11, threads=2)
    again = GroundTruth.from_dict(json.loads(truth.dumps()))
    assert again == truth
    with pytest.raises(ContractError):
        GroundTruth.from_dict({"k": 11})


def test_icc_queues_receiver_callback():
    model = generate_app(GenParams(node_budget=900, icc_links=2, callbacks=3, reflective_fraction=0.1, seed=12))
    for scenario in range(20):
        log, truth = simulate(model, scenario, k=11, events_per_thread=4)
        links = [r for r in log if r.des.special is not None and type(r.des.special).__name__ == "IccLink"]
        if links:
            target = links[0].des.special.target
            later = [s.callback for s in truth.segments[1:]]
            assert any(cb.startswith(target + ".") for cb in later)
            return
    pytest.skip("no ICC link fired in 20 scenarios")


def test_large_log_is_fast():
    model = generate_app(ADVERSARIAL_PARAMS)
    start = time.perf_counter()
    log, _ = simulate(model, **LARGE_LOG_SCENARIO)
    elapsed = time.perf_counter() - start
    assert len(log) >= 10_000
    assert elapsed < 10.0


def test_simulate_checks_arguments():
    model = nested_model()
    with pytest.raises(ContractError):
        simulate(model, 1, k=0)
    with pytest.raises(ContractError):
        simulate(model, 1, k=11, noise_fraction=1.0)
