"""Hand-built models used by the tests, the examples in the README, and the CLI demo."""

from __future__ import annotations

from .builder import INVOKE, START_ACTIVITY, ModelBuilder, sig
from .graph import ApiSignature, AppModel
from .logs import CallStackInfo, Des, IccLink, LogRecord, LogSegment, ReflectiveTarget
from .simulator import GenParams

MAIN = "com.example.sample.MainActivity"
ON_CREATE = sig(f"{MAIN}.onCreate(Landroid/os/Bundle;)V")
UPLOAD = sig("com.example.sample.Uploader.upload(Ljava/lang/String;)V")

CIPHER = "javax.crypto.Cipher.doFinal([B)[B"
GET_DEVICE_ID = "android.telephony.TelephonyManager.getDeviceId()Ljava/lang/String;"
EXECUTE = "org.apache.http.impl.client.DefaultHttpClient.execute(Lorg/apache/http/client/methods/HttpUriRequest;)Lorg/apache/http/HttpResponse;"
CLOSE = "java.io.InputStream.close()V"
SEND_TEXT = "android.telephony.SmsManager.sendTextMessage(Ljava/lang/String;Ljava/lang/String;Ljava/lang/String;Landroid/app/PendingIntent;Landroid/app/PendingIntent;)V"


def motivating_example() -> tuple[AppModel, dict[str, int]]:
    """Fifteen-node graph v1..v15 of a data-stealing callback.

    Gray (logged) nodes are the reflective ``invoke()`` sites v2, v5, v13 and
    v14. v10 compares a string length and controls v14; v5 fetches the device
    id that v14 sends out.
    """
    mb = ModelBuilder()
    g = mb.supergraph(ON_CREATE)
    a = g.method(ON_CREATE)
    v = {"v1": a.entry}
    v["v2"] = a.reflective([CIPHER], display="r = m1.invoke(null, decode(\"x9Fq...\"))")
    v["v3"] = a.plain("String s = (String) r")
    v["v4"] = a.branch("s != null")
    v["v5"] = a.reflective([GET_DEVICE_ID], display="r2 = m2.invoke(tm)")
    v["v6"] = a.plain("String id = (String) r2")
    v["v7"] = a.static(UPLOAD, display="Uploader.upload(id)")
    v["v8"] = a.exit()
    b = g.method(UPLOAD)
    v["v9"] = b.entry
    v["v10"] = b.branch("id.length() > 10")
    v["v11"] = b.plain("req = new HttpGet(url + id)")
    v["v12"] = b.plain("req = null")
    v["v13"] = b.reflective([CLOSE], display="m4.invoke(stream)")
    v["v14"] = b.reflective([EXECUTE], display="m3.invoke(client, req)")
    v["v15"] = b.exit()
    a.chain(v["v1"], v["v2"], v["v3"], v["v4"], v["v5"], v["v6"], v["v7"], v["v8"])
    a.flow(v["v4"], v["v6"])
    b.chain(v["v9"], v["v10"], v["v11"], v["v14"], v["v13"], v["v15"])
    b.flow(v["v10"], v["v12"])
    b.flow(v["v12"], v["v13"])
    mb.log_apis(INVOKE)
    mb.prefixes = ["android.app", "java.security"]
    return mb.build(), v


GRAY_NODES = ("v2", "v5", "v13", "v14")


def reflective_record(seq: int, target: str, frames, base_offset: int = 7, k: int = 11, tid: int = 1) -> LogRecord:
    target = sig(target)
    frames = tuple(sig(f) for f in frames)
    special = ReflectiveTarget(target.declaring_unit, target.method_name, target.descriptor)
    return LogRecord(seq, 100, tid, Des(INVOKE, (target.declaring_unit, target.method_name), special),
                     CallStackInfo(frames[-k:], base_offset + len(frames)))


def callback_record(seq: int, callback, base_offset: int = 7, tid: int = 1) -> LogRecord:
    callback = sig(callback)
    return LogRecord(seq, 100, tid, Des(callback), CallStackInfo((callback,), base_offset + 1))


def motivating_log() -> LogSegment:
    """Records of the walk v2 -> v5 -> v14 -> v13 (both branches taken)."""
    return LogSegment(callback_record(0, ON_CREATE), (
        reflective_record(1, CIPHER, [ON_CREATE]),
        reflective_record(2, GET_DEVICE_ID, [ON_CREATE]),
        reflective_record(3, EXECUTE, [ON_CREATE, UPLOAD]),
        reflective_record(4, CLOSE, [ON_CREATE, UPLOAD]),
    ))


# -- two arms with the same logged API at different stack depths -------------

TWO_ARM_CB = sig("com.example.arms.Main.onClick(Landroid/view/View;)V")
TWO_ARM_HELPER = sig("com.example.arms.Loader.load()V")


def two_arm_invoke() -> tuple[AppModel, dict[str, int]]:
    """Branch whose first arm calls ``invoke()`` directly and whose second arm
    calls a helper that calls ``invoke()``. Signature-only matching cannot tell
    the arms apart; the stack depth can."""
    mb = ModelBuilder()
    g = mb.supergraph(TWO_ARM_CB)
    m = g.method(TWO_ARM_CB)
    ids = {"entry": m.entry}
    ids["branch"] = m.branch("view.getId() == R.id.ok")
    ids["direct"] = m.reflective([EXECUTE], display="m.invoke(client, req)")
    ids["call"] = m.static(TWO_ARM_HELPER, display="Loader.load()")
    ids["join"] = m.plain("done = true")
    ids["exit"] = m.exit()
    m.chain(ids["entry"], ids["branch"], ids["direct"], ids["join"], ids["exit"])
    m.flow(ids["branch"], ids["call"])
    m.flow(ids["call"], ids["join"])
    h = g.method(TWO_ARM_HELPER)
    ids["h_entry"] = h.entry
    ids["h_invoke"] = h.reflective([GET_DEVICE_ID], display="m.invoke(tm)")
    ids["h_exit"] = h.exit()
    h.chain(h.entry, ids["h_invoke"], ids["h_exit"])
    mb.log_apis(INVOKE)
    return mb.build(), ids


def two_arm_log() -> LogSegment:
    """The helper arm was taken."""
    return LogSegment(callback_record(0, TWO_ARM_CB),
                      (reflective_record(1, GET_DEVICE_ID, [TWO_ARM_CB, TWO_ARM_HELPER]),))


# -- reflective update targets --------------------------------------------------

REFLECT_CB = sig("com.example.refl.Main.onCreate(Landroid/os/Bundle;)V")
REFLECT_OTHER_CB = sig("com.example.refl.Service.onStartCommand(Landroid/content/Intent;II)I")
HIDDEN = sig("com.example.refl.Payload.run()V")
HIDDEN_INNER = sig("com.example.refl.Payload.step()V")
REMOTE = sig("com.example.refl.Remote.exfil()V")


def reflection_fixture() -> tuple[AppModel, dict[str, int]]:
    """A reflective site whose runtime target may be a framework API, a
    detached app method in the same supergraph, or an app method that only
    exists in another callback's supergraph."""
    mb = ModelBuilder()
    g = mb.supergraph(REFLECT_CB)
    m = g.method(REFLECT_CB)
    ids = {"entry": m.entry}
    ids["site"] = m.reflective([SEND_TEXT, str(HIDDEN), str(REMOTE)], display="m.invoke(obj, args)")
    ids["after"] = m.plain("finish()")
    ids["exit"] = m.exit()
    m.chain(ids["entry"], ids["site"], ids["after"], ids["exit"])
    p = g.method(HIDDEN)
    ids["hidden_entry"] = p.entry
    ids["hidden_call"] = p.framework(GET_DEVICE_ID)
    ids["hidden_exit"] = p.exit()
    p.chain(p.entry, ids["hidden_call"], ids["hidden_exit"])
    s = mb.supergraph(REFLECT_OTHER_CB)
    o = s.method(REFLECT_OTHER_CB)
    ids["other_entry"] = o.entry
    ids["other_site"] = o.reflective([str(REMOTE)])
    ids["other_exit"] = o.exit()
    o.chain(o.entry, ids["other_site"], ids["other_exit"])
    r = s.method(REMOTE)
    ids["remote_entry"] = r.entry
    ids["remote_call"] = r.static(HIDDEN_INNER)
    ids["remote_exit"] = r.exit()
    r.chain(r.entry, ids["remote_call"], ids["remote_exit"])
    q = s.method(HIDDEN_INNER)
    ids["inner_entry"] = q.entry
    ids["inner_call"] = q.framework(EXECUTE)
    ids["inner_exit"] = q.exit()
    q.chain(q.entry, ids["inner_call"], ids["inner_exit"])
    mb.log_apis(INVOKE, GET_DEVICE_ID, EXECUTE)
    return mb.build(), ids


def reflective_des(target) -> Des:
    target = sig(target)
    return Des(INVOKE, (target.declaring_unit, target.method_name),
               ReflectiveTarget(target.declaring_unit, target.method_name, target.descriptor))


# -- ICC with two statically guessed receivers -------------------------------

ICC_SENDER = sig("com.example.icc.Sender.onClick(Landroid/view/View;)V")
ICC_A = sig("com.example.icc.ReceiverA.onCreate(Landroid/os/Bundle;)V")
ICC_B = sig("com.example.icc.ReceiverB.onCreate(Landroid/os/Bundle;)V")


def icc_fixture() -> tuple[AppModel, dict[str, int]]:
    mb = ModelBuilder()
    ids = {}
    g = mb.supergraph(ICC_SENDER)
    m = g.method(ICC_SENDER)
    ids["entry"] = m.entry
    ids["site"] = m.icc([ICC_B.declaring_unit], display="startActivity(intent)")
    ids["exit"] = m.exit()
    m.chain(m.entry, ids["site"], ids["exit"])
    g.icc_guess(ids["site"], ICC_A.declaring_unit)
    g.icc_guess(ids["site"], ICC_B.declaring_unit)
    for name, cb in (("a", ICC_A), ("b", ICC_B)):
        r = mb.supergraph(cb).method(cb)
        ids[f"{name}_entry"] = r.entry
        ids[f"{name}_call"] = r.framework(GET_DEVICE_ID)
        ids[f"{name}_exit"] = r.exit()
        r.chain(r.entry, ids[f"{name}_call"], ids[f"{name}_exit"])
    mb.log_apis(START_ACTIVITY, GET_DEVICE_ID)
    return mb.build(), ids


def icc_des(target: str, origin: str = ICC_SENDER.declaring_unit) -> Des:
    return Des(START_ACTIVITY, (target,), IccLink(origin, target))


# -- call-site depth fixtures ---------------------------------------------------

def depth_chain(counts: dict[int, int], unit: str = "com.example.depth.Chain") -> AppModel:
    """One callback calling a chain of methods; ``counts[d]`` logged call
    sites sit in the method at depth d."""
    mb = ModelBuilder()
    max_depth = max(counts)
    sigs = [ApiSignature(unit, "onCreate" if d == 1 else f"level{d}", "()V") for d in range(1, max_depth + 1)]
    g = mb.supergraph(sigs[0])
    api = sig(GET_DEVICE_ID)
    for d, s in enumerate(sigs, start=1):
        m = g.method(s)
        seq = [m.entry]
        seq.extend(m.framework(api) for _ in range(counts.get(d, 0)))
        if d < max_depth:
            seq.append(m.static(sigs[d]))
        seq.append(m.exit())
        m.chain(*seq)
    mb.log_apis(api)
    return mb.build()


# Logged call sites per depth: 97.88% (2447 of 2500) sit at depth <= 11.
PAPER_DEPTH_COUNTS = {1: 50, 2: 50, 3: 50, 4: 50, 5: 100, 6: 150, 7: 200, 8: 300, 9: 400,
                      10: 450, 11: 647, 12: 20, 13: 12, 14: 10, 15: 6, 16: 5}


def paper_depth_model() -> AppModel:
    return depth_chain(PAPER_DEPTH_COUNTS)


# -- generator parameters ---------------------------------------------------------

# Table-2-scale adversarial app: ~2600 nodes, ~600 branch nodes, nearly every
# app method reached through reflection.
ADVERSARIAL_PARAMS = GenParams(node_budget=2600, branch_fraction=0.23, logged_density=0.1,
                               reflective_fraction=0.9, icc_links=2, max_call_depth=8,
                               callbacks=3, seed=2634)
ADVERSARIAL_SCENARIO = {"scenario_seed": 604, "k": 11, "threads": 1, "events_per_thread": 6}

# Produces more than 10,000 log records in a few seconds.
LARGE_LOG_SCENARIO = {"scenario_seed": 15713, "k": 11, "threads": 2, "events_per_thread": 16}
