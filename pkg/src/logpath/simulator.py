"""Synthetic app models and seeded executions that emit labeled audit logs.

The generator shapes models so that, with a full stack window, a log almost
always pins down one walk: every method starts with an event, and the arms of
each branch begin with pairwise distinguishable events (different API,
different frame, or different depth). Arms may still share an API signature,
which is exactly where signature-only matching goes wrong.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field, fields

from .builder import INVOKE, START_ACTIVITY, MethodBuilder, ModelBuilder, SupergraphBuilder
from .errors import ContractError, GenerationError
from .graph import ApiSignature, AppModel, CalleeKind, EdgeKind, validate
from .logs import CallStackInfo, Des, IccLink, LogRecord, LogSequence, ReflectiveTarget
from .overlay import GraphOverlay, apply_des
from .walk import walk_edges

CALLBACK_NAMES = ("onCreate", "onStart", "onResume", "onClick", "onReceive",
                  "onPause", "onStop", "onDestroy", "onBind", "onHandleIntent")

LOGGED_POOL = tuple(ApiSignature.parse(s) for s in (
    "android.telephony.TelephonyManager.getDeviceId()Ljava/lang/String;",
    "android.telephony.TelephonyManager.getLine1Number()Ljava/lang/String;",
    "android.telephony.TelephonyManager.getSubscriberId()Ljava/lang/String;",
    "android.location.LocationManager.getLastKnownLocation(Ljava/lang/String;)Landroid/location/Location;",
    "android.content.ContentResolver.query(Landroid/net/Uri;)Landroid/database/Cursor;",
    "android.accounts.AccountManager.getAccounts()[Landroid/accounts/Account;",
    "java.net.URL.openConnection()Ljava/net/URLConnection;",
    "org.apache.http.impl.client.DefaultHttpClient.execute(Lorg/apache/http/client/methods/HttpUriRequest;)Lorg/apache/http/HttpResponse;",
    "java.io.FileOutputStream.write([B)V",
    "android.hardware.Camera.open()Landroid/hardware/Camera;",
    "android.media.AudioRecord.startRecording()V",
    "android.net.wifi.WifiManager.getConnectionInfo()Landroid/net/wifi/WifiInfo;",
))

UNLOGGED_POOL = tuple(ApiSignature.parse(s) for s in (
    "java.lang.StringBuilder.append(Ljava/lang/String;)Ljava/lang/StringBuilder;",
    "java.lang.String.length()I",
    "java.util.ArrayList.add(Ljava/lang/Object;)Z",
    "java.util.HashMap.get(Ljava/lang/Object;)Ljava/lang/Object;",
    "android.util.Log.d(Ljava/lang/String;Ljava/lang/String;)I",
    "java.lang.Integer.parseInt(Ljava/lang/String;)I",
    "android.os.Bundle.getString(Ljava/lang/String;)Ljava/lang/String;",
    "java.lang.Object.toString()Ljava/lang/String;",
))

# Framework methods reached only through reflection (invisible statically).
REFLECT_FRAMEWORK_POOL = tuple(ApiSignature.parse(s) for s in (
    "android.telephony.SmsManager.sendTextMessage(Ljava/lang/String;Ljava/lang/String;Ljava/lang/String;Landroid/app/PendingIntent;Landroid/app/PendingIntent;)V",
    "dalvik.system.DexClassLoader.loadClass(Ljava/lang/String;)Ljava/lang/Class;",
    "java.lang.Runtime.exec(Ljava/lang/String;)Ljava/lang/Process;",
))

LIBRARY_PREFIXES = ("android.os", "android.app", "java.security", "com.android.internal")

# Records produced by framework code on the app's threads (filtered by caller prefix).
LIBRARY_NOISE = (
    (ApiSignature.parse("android.os.Handler.dispatchMessage(Landroid/os/Message;)V"),
     (ApiSignature.parse("android.os.Looper.loop()V"),)),
    (ApiSignature.parse("java.security.MessageDigest.getInstance(Ljava/lang/String;)Ljava/security/MessageDigest;"),
     (ApiSignature.parse("android.app.ActivityThread.main([Ljava/lang/String;)V"),
      ApiSignature.parse("android.app.ActivityThread.handleBindApplication(Ljava/lang/Object;)V"))),
    (ApiSignature.parse("android.content.ContextWrapper.getSystemService(Ljava/lang/String;)Ljava/lang/Object;"),
     (ApiSignature.parse("com.android.internal.os.ZygoteInit.main([Ljava/lang/String;)V"),
      ApiSignature.parse("android.app.Instrumentation.callActivityOnCreate(Landroid/app/Activity;)V"))),
)

FOREIGN_FRAME = ApiSignature.parse("com.other.app.Worker.run()V")

APP_PACKAGE = "com.gen.app"


@dataclass(frozen=True)
class GenParams:
    node_budget: int = 600
    branch_fraction: float = 0.2
    logged_density: float = 0.1
    reflective_fraction: float = 0.3
    icc_links: int = 0
    max_call_depth: int = 6
    callbacks: int = 3
    seed: int = 0

    def check(self):
        for name in ("branch_fraction", "logged_density", "reflective_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise GenerationError(f"{name}={value} is outside [0, 1]")
        if self.callbacks < 1:
            raise GenerationError("at least one callback is required")
        if self.node_budget < 3 * self.callbacks:
            raise GenerationError(f"node_budget {self.node_budget} cannot hold {self.callbacks} callbacks (3 nodes each)")
        if self.max_call_depth < 1:
            raise GenerationError("max_call_depth must be at least 1 (the callback itself)")
        if self.max_call_depth == 1 and self.reflective_fraction > 0 and self.node_budget > 3 * self.callbacks:
            # Reflective app calls need a deeper method to target.
            raise GenerationError("reflective calls requested but max_call_depth=1 leaves no callee level")
        if self.icc_links < 0:
            raise GenerationError("icc_links must be non-negative")
        if self.icc_links and self.callbacks < 2:
            raise GenerationError("ICC links need at least two components")

    @classmethod
    def from_dict(cls, data: dict) -> "GenParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise GenerationError(f"unknown generator parameters {sorted(unknown)}")
        return cls(**data)


def callback_signature(index: int) -> ApiSignature:
    name = CALLBACK_NAMES[index % len(CALLBACK_NAMES)]
    return ApiSignature(f"{APP_PACKAGE}.Comp{index}", name, "()V")


class _MethodInfo:
    def __init__(self, mb: MethodBuilder, level: int):
        self.mb = mb
        self.level = level
        self.first_key = None


class _Generator:
    def __init__(self, params: GenParams):
        self.p = params
        self.rng = random.Random(params.seed)
        self.builder = ModelBuilder()
        self.builder.prefixes = list(LIBRARY_PREFIXES)
        self.nodes = 0
        self.branches = 0
        self.calls = 0
        self.logged = 0
        self.app_calls = 0
        self.reflective_calls = 0
        self.detached: list[tuple[ApiSignature, int]] = []  # reflective targets from earlier supergraphs
        self.method_counter = 0

    # bookkeeping -------------------------------------------------------

    def _count(self, kind: str, n: int = 1):
        self.nodes += n
        if kind == "branch":
            self.branches += n
        elif kind == "logged":
            self.calls += n
            self.logged += n
        elif kind == "call":
            self.calls += n

    def _want_branch(self) -> bool:
        return self.branches < self.p.branch_fraction * (self.nodes + 2)

    def _want_logged(self) -> bool:
        return self.logged < self.p.logged_density * (self.calls + 1)

    def _run_limit(self) -> int:
        # Long guard runs are needed to approach one branch per two nodes.
        return self.rng.randint(8, 11) if self.p.branch_fraction > 0.35 else self.rng.randint(3, 10)

    def _new_sig(self, cb: ApiSignature, prefix: str) -> ApiSignature:
        self.method_counter += 1
        return ApiSignature(cb.declaring_unit, f"{prefix}{self.method_counter}", "()V")

    # supergraph --------------------------------------------------------

    def generate(self) -> AppModel:
        p = self.p
        p.check()
        share, extra = divmod(p.node_budget, p.callbacks)
        icc_share, icc_extra = divmod(p.icc_links, p.callbacks)
        self.components = [callback_signature(i).declaring_unit for i in range(p.callbacks)]
        for c in range(p.callbacks):
            cb = callback_signature(c)
            self.sg = self.builder.supergraph(cb)
            self.cb = cb
            self.markers: list[_MethodInfo] = []
            self.local_detached: dict[int, list[_MethodInfo]] = {}
            self.icc_quota = icc_share + (1 if c < icc_extra else 0)
            budget = share + (1 if c < extra else 0)
            root = _MethodInfo(self.sg.method(cb), 1)
            self._body(root, budget, is_root=True)
            for level, infos in self.local_detached.items():
                self.detached.extend((info.mb.signature, level) for info in infos)
        self.builder.log_apis(*LOGGED_POOL, INVOKE, START_ACTIVITY)
        model = self.builder.build()
        diagnostics = validate(model)
        if diagnostics:
            raise GenerationError("generated model is invalid: " + "; ".join(diagnostics[:5]))
        nodes = model.node_count()
        branch_fraction = model.branch_count() / nodes
        if abs(nodes - p.node_budget) > 0.1 * p.node_budget or abs(branch_fraction - p.branch_fraction) > 0.05:
            raise GenerationError(
                f"infeasible parameters: realized {nodes} nodes at branch fraction {branch_fraction:.3f} "
                f"for a budget of {p.node_budget} at {p.branch_fraction}")
        return model

    def _body(self, info: _MethodInfo, budget: int, is_root: bool = False, first_exclude: set = frozenset()):
        mb = info.mb
        start = self.nodes
        self._count("plain")  # entry
        tails = [mb.entry]
        run_keys: set | None = None
        run_length = 0
        run_limit = self._run_limit()
        first = True
        while True:
            remaining = budget - (self.nodes - start) - 1  # keep one node for exit
            if first:
                head, new_tails, keys = self._event(info, max(1, remaining), exclude=set(first_exclude))
                info.first_key = next(iter(keys))
                closes = True
                first = False
            elif remaining <= 0:
                break
            elif self._want_branch() and remaining >= 2 and run_length < run_limit:
                head, new_tails, keys, closes = self._branch_construct(info, remaining, run_keys or set())
            elif run_keys or self._want_logged() or self.rng.random() < 0.1:
                # An open guard run must be closed by an event none of its arms start with.
                head, new_tails, keys = self._event(info, remaining, exclude=run_keys or set())
                closes = True
            else:
                head, new_tails, keys = self._filler(mb)
                closes = False
            for t in tails:
                mb.flow(t, head)
            tails = new_tails
            if closes == "guard":
                run_keys = (run_keys or set()) | keys
                run_length += 1
            elif closes:
                run_keys = None
                run_length = 0
                run_limit = self._run_limit()
        if is_root and self.icc_quota > 0:
            if run_keys:
                head, new_tails, _ = self._event(info, 1, exclude=run_keys)
                for t in tails:
                    mb.flow(t, head)
                tails = new_tails
            while self.icc_quota > 0:
                head, new_tails, _ = self._icc(info)
                for t in tails:
                    mb.flow(t, head)
                tails = new_tails
        exit_id = mb.exit()
        self._count("plain")
        for t in tails:
            mb.flow(t, exit_id)

    # constructs: each returns (head, tails, first-event keys[, closes]) ------

    def _filler(self, mb: MethodBuilder):
        if self.p.logged_density < 1.0 and not self._want_logged():
            node = mb.framework(self.rng.choice(UNLOGGED_POOL))
            self._count("call")
        else:
            node = mb.plain(f"v{self.nodes} = {self.rng.choice(('a', 'b', 'c'))} + {self.rng.randint(0, 9)}")
            self._count("plain")
        return node, [node], set()

    def _logged_call(self, info: _MethodInfo, exclude: set):
        options = [api for api in LOGGED_POOL if (api, info.mb.signature) not in exclude]
        if not options:
            return None
        api = self.rng.choice(options)
        node = info.mb.framework(api)
        self._count("logged")
        return node, [node], {(api, info.mb.signature)}

    def _can_descend(self, info: _MethodInfo, remaining: int, need: int = 5) -> bool:
        return info.level < self.p.max_call_depth and remaining >= need

    def _event(self, info: _MethodInfo, remaining: int, exclude: set, in_branch: bool = False):
        """A construct whose first emitted record is distinguishable from ``exclude``."""
        rng = self.rng
        choices = []
        helper_p = 0.45 * (1.0 - min(self.p.branch_fraction, 0.5) * 1.6)
        if in_branch and self._want_branch():
            helper_p = min(helper_p, 0.1)
        if self._can_descend(info, remaining, 6) and rng.random() < helper_p:
            choices.append("helper")
        if self.icc_quota > 0 and rng.random() < 0.3:
            choices.append("icc")
        if info.level < self.p.max_call_depth and not self._want_logged() and rng.random() < 0.9:
            choices.append("marker")
        if in_branch and self.p.branch_fraction > 0.3:
            # Dense branching: one-node arms first, density is secondary.
            choices.insert(0, "logged")
        else:
            choices.append("logged")
        if self.p.reflective_fraction > 0 and rng.random() < 0.05 * self.p.reflective_fraction:
            choices.insert(0, "reflect-framework")
        for choice in choices:
            result = None
            if choice == "helper":
                result = self._helper_call(info, remaining, exclude)
            elif choice == "icc" and (START_ACTIVITY, info.mb.signature) not in exclude:
                result = self._icc(info)
            elif choice == "marker":
                result = self._marker_call(info, exclude, remaining)
            elif choice == "logged":
                result = self._logged_call(info, exclude)
            elif choice == "reflect-framework" and (INVOKE, info.mb.signature) not in exclude:
                target = rng.choice(REFLECT_FRAMEWORK_POOL)
                node = info.mb.reflective([str(target)])
                self._count("logged")
                result = node, [node], {(INVOKE, info.mb.signature)}
            if result is not None:
                return result
        # Every API of the pool is taken by this run: a marker method still works.
        result = self._marker_call(info, exclude, 4) if info.level < self.p.max_call_depth else None
        if result is None:
            raise GenerationError("ran out of distinguishable events; raise max_call_depth")
        return result

    def _helper_call(self, info: _MethodInfo, remaining: int, exclude: set):
        rng = self.rng
        sub = int(remaining * rng.uniform(0.15, 0.6))
        sub = max(4, min(sub, remaining - 1))
        reflective = rng.random() < self.p.reflective_fraction
        if reflective and (INVOKE, info.mb.signature) in exclude:
            return None
        level = info.level + 1
        if reflective:
            targets = []
            pool = self.local_detached.get(level, [])
            if pool and rng.random() < 0.3:
                reuse = rng.choice(pool)
                targets.append(str(reuse.mb.signature))
            if not targets or rng.random() < 0.5:
                helper = _MethodInfo(self.sg.method(self._new_sig(self.cb, "r")), level)
                self._body(helper, sub - 1, first_exclude=exclude)
                self.local_detached.setdefault(level, []).append(helper)
                targets.append(str(helper.mb.signature))
            foreign = [s for s, lvl in self.detached if lvl >= level]
            if foreign and rng.random() < 0.1:
                targets.append(str(rng.choice(foreign)))
            node = info.mb.reflective(targets)
            self._count("logged")
            self.app_calls += 1
            self.reflective_calls += 1
            return node, [node], {(INVOKE, info.mb.signature)}
        helper = _MethodInfo(self.sg.method(self._new_sig(self.cb, "m")), level)
        self._body(helper, sub - 1, first_exclude=exclude)
        node = info.mb.static(helper.mb.signature)
        self._count("call")
        self.app_calls += 1
        return node, [node], {helper.first_key}

    def _marker_call(self, info: _MethodInfo, exclude: set, remaining: int):
        rng = self.rng
        usable = [m for m in self.markers if m.first_key not in exclude]
        if (not usable or rng.random() < 0.05) and remaining >= 4:
            marker = _MethodInfo(self.sg.method(self._new_sig(self.cb, "k")), info.level + 1)
            self._count("plain")
            api = rng.choice(LOGGED_POOL)
            call = marker.mb.framework(api)
            self._count("logged")
            exit_id = marker.mb.exit()
            self._count("plain")
            marker.mb.chain(marker.mb.entry, call, exit_id)
            marker.first_key = (api, marker.mb.signature)
            self.markers.append(marker)
            if marker.first_key in exclude:
                return None
            usable = [marker]
        if not usable:
            return None
        marker = rng.choice(usable)
        node = info.mb.static(marker.mb.signature)
        self._count("call")
        self.app_calls += 1
        return node, [node], {marker.first_key}

    def _icc(self, info: _MethodInfo):
        rng = self.rng
        own = info.mb.signature.declaring_unit
        others = [c for c in self.components if c != own]
        targets = rng.sample(others, min(len(others), rng.choice((1, 1, 2))))
        node = info.mb.icc(targets)
        guesses = list(targets)
        spare = [c for c in others if c not in guesses]
        if spare and rng.random() < 0.5:
            guesses.append(rng.choice(spare))
        for component in guesses:
            self.sg.icc_guess(node, component)
        self._count("logged")
        self.icc_quota -= 1
        return node, [node], {(START_ACTIVITY, info.mb.signature)}

    def _branch_construct(self, info: _MethodInfo, remaining: int, run_keys: set):
        """A guard (one arm, the other skips ahead) or a two-arm if/else."""
        mb = info.mb
        if self.p.branch_fraction > 0.35 or self.rng.random() < 0.75:
            head, tails, keys = self._event(info, max(1, remaining - 1), exclude=run_keys, in_branch=True)
            branch = mb.branch(f"c{self.nodes} != 0")
            self._count("branch")
            mb.flow(branch, head)
            return branch, tails + [branch], keys, "guard"
        half = max(1, (remaining - 1) // 2)
        first = self._event(info, half, exclude=run_keys, in_branch=True)
        second = self._event(info, half, exclude=run_keys | first[2], in_branch=True)
        branch = mb.branch(f"c{self.nodes} > 0")
        self._count("branch")
        mb.flow(branch, first[0])
        mb.flow(branch, second[0])
        return branch, first[1] + second[1], first[2] | second[2], True


def generate_app(params: GenParams) -> AppModel:
    """Seeded synthetic app model; identical params give an identical model."""
    return _Generator(params).generate()


# -- simulation ---------------------------------------------------------------

@dataclass
class SegmentTruth:
    tid: int
    callback: str
    walk: list[int]
    nodes: list[int]
    match_points: dict[int, int]
    seqs: list[int] = field(default_factory=list)


@dataclass
class RecordTruth:
    seq: int
    tid: int
    library: bool = False
    foreign: bool = False
    segment: int = -1
    position: int = -1
    chain_length: int = 0


@dataclass
class GroundTruth:
    k: int
    base_offset: int
    pid: int
    segments: list[SegmentTruth]
    records: list[RecordTruth]

    def node_sequence(self, tid: int | None = None) -> list[int]:
        return [n for s in self.segments if tid is None or s.tid == tid for n in s.nodes]

    def thread_segments(self) -> dict[int, list[SegmentTruth]]:
        groups: dict[int, list[SegmentTruth]] = {}
        for seg in self.segments:
            groups.setdefault(seg.tid, []).append(seg)
        return groups

    @property
    def library_seqs(self) -> list[int]:
        return [r.seq for r in self.records if r.library]

    def to_dict(self) -> dict:
        data = asdict(self)
        for seg in data["segments"]:
            seg["match_points"] = {str(k): v for k, v in seg["match_points"].items()}
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "GroundTruth":
        try:
            segments = [SegmentTruth(**{**s, "match_points": {int(k): v for k, v in s["match_points"].items()}})
                        for s in data["segments"]]
            records = [RecordTruth(**r) for r in data["records"]]
            return cls(data["k"], data["base_offset"], data["pid"], segments, records)
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ContractError(f"malformed ground truth: {exc}") from None

    def dumps(self) -> bytes:
        return (json.dumps(self.to_dict(), indent=1) + "\n").encode("utf-8")


def make_csi(frames, k: int, base_offset: int = 7) -> CallStackInfo:
    """Window of the deepest ``k`` app frames plus the full stack depth."""
    frames = tuple(frames)
    return CallStackInfo(frames[-k:] if k else (), base_offset + len(frames))


def _choose_des(rng: random.Random, node, model: AppModel, frames) -> Des:
    callee = node.statement.callee
    api = callee.invoked_api
    if callee.kind is CalleeKind.REFLECTIVE:
        if not node.runtime_targets:
            raise ContractError(f"reflective site {node.id} has no runtime targets to simulate")
        target = ApiSignature.parse(rng.choice(node.runtime_targets))
        special = ReflectiveTarget(target.declaring_unit, target.method_name, target.descriptor)
        return Des(api, (target.declaring_unit, target.method_name), special)
    if callee.kind is CalleeKind.ICC:
        if not node.runtime_targets:
            raise ContractError(f"ICC site {node.id} has no runtime targets to simulate")
        target = rng.choice(node.runtime_targets)
        return Des(api, (target,), IccLink(frames[0].declaring_unit, target))
    return Des(api, ())


def _run_callback(model: AppModel, sg, rng, k, base_offset, pid, tid, on_icc):
    cb = sg.root.signature
    overlay = GraphOverlay(sg, model.max_node_id + 1)
    node_id = sg.root_entry
    frames, sites = (cb,), ()
    walk = [node_id]
    records = [(Des(cb, ()), make_csi(frames, k, base_offset), len(frames))]
    match_points = {0: 0}
    while True:
        node = overlay.node(node_id)
        embed = None
        if model.is_logged(node):
            des = _choose_des(rng, node, model, frames)
            match_points[len(records)] = len(walk) - 1
            records.append((des, make_csi(frames, k, base_offset), len(frames)))
            if des.special is not None:
                embed = apply_des(overlay, node, des, model)
                if isinstance(des.special, IccLink):
                    on_icc(des.special.target)
        edges = walk_edges(overlay, node, sites, embed)
        if not edges:
            if node.kind.value != "exit" or sites:
                raise ContractError(f"simulation stuck at node {node_id}")
            break
        edge = edges[0] if len(edges) == 1 else rng.choice(edges)
        if edge.kind is EdgeKind.CALL:
            frames = frames + (overlay.node(edge.dst).method.signature,)
            sites = sites + (node_id,)
        elif edge.kind is EdgeKind.RETURN:
            frames, sites = frames[:-1], sites[:-1]
        node_id = edge.dst
        walk.append(node_id)
    last = max(match_points)
    prefix = walk[: match_points[last] + 1]
    points = {i: walk[pos] for i, pos in match_points.items()}
    return walk, prefix, points, records


def simulate(model: AppModel, scenario_seed: int, k: int, threads: int = 1, events_per_thread: int = 4,
             noise_fraction: float = 0.5, base_offset: int = 7, pid: int = 1000,
             foreign_records: int = 0) -> tuple[LogSequence, GroundTruth]:
    """Run seeded callback sequences on ``threads`` threads and log them.

    ``noise_fraction`` is the share of library records in the final log (before
    foreign-app records are added).
    """
    if k < 1:
        raise ContractError("k must be at least 1")
    if not 0.0 <= noise_fraction < 1.0:
        raise ContractError("noise_fraction must be in [0, 1)")
    if threads < 1:
        raise ContractError("at least one thread is required")
    rng = random.Random(scenario_seed)
    callbacks = [cb for cb in model.callback_registry if cb in model.supergraphs]
    if not callbacks:
        raise ContractError("model has no callback supergraphs")
    by_component = {}
    for cb in callbacks:
        by_component.setdefault(cb.declaring_unit, cb)

    # (tid, des, csi, chain length, segment index, position)
    streams: list[list[tuple]] = []
    segments: list[SegmentTruth] = []
    for t in range(threads):
        tid = pid + 1 + t
        stream = []
        queue: list[ApiSignature] = []
        for _ in range(events_per_thread):
            cb = queue.pop(0) if queue else rng.choice(callbacks)
            pending = []
            walk, prefix, points, records = _run_callback(
                model, model.supergraphs[cb], rng, k, base_offset, pid, tid,
                lambda comp: pending.append(by_component[comp]) if comp in by_component else None)
            queue.extend(pending)
            seg_index = len(segments)
            segments.append(SegmentTruth(tid, str(cb), walk, prefix, points))
            for pos, (des, csi, depth) in enumerate(records):
                stream.append((tid, des, csi, depth, seg_index, pos))
        streams.append(stream)

    merged = []
    cursors = [0] * len(streams)
    remaining = sum(len(s) for s in streams)
    while remaining:
        pick = rng.randrange(remaining)
        for i, stream in enumerate(streams):
            left = len(stream) - cursors[i]
            if pick < left:
                merged.append(("app", stream[cursors[i]]))
                cursors[i] += 1
                break
            pick -= left
        remaining -= 1

    app_count = len(merged)
    noise = round(app_count * noise_fraction / (1.0 - noise_fraction)) if noise_fraction else 0
    tids = [pid + 1 + t for t in range(threads)]
    for _ in range(noise):
        merged.insert(rng.randrange(len(merged) + 1), ("library", rng.choice(tids)))
    for _ in range(foreign_records):
        merged.insert(rng.randrange(len(merged) + 1), ("foreign", pid + 500))

    records, truths = [], []
    for seq, (kind, item) in enumerate(merged):
        if kind == "app":
            tid, des, csi, depth, seg_index, pos = item
            records.append(LogRecord(seq, pid, tid, des, csi))
            truths.append(RecordTruth(seq, tid, segment=seg_index, position=pos, chain_length=depth))
            segments[seg_index].seqs.append(seq)
        elif kind == "library":
            api, chain = rng.choice(LIBRARY_NOISE)
            records.append(LogRecord(seq, pid, item, Des(api, ()), make_csi(chain, k, base_offset)))
            truths.append(RecordTruth(seq, item, library=True, chain_length=len(chain)))
        else:
            api = rng.choice(LOGGED_POOL)
            records.append(LogRecord(seq, pid + 1, item, Des(api, ()), make_csi((FOREIGN_FRAME,), k, base_offset)))
            truths.append(RecordTruth(seq, item, foreign=True, chain_length=1))
    truth = GroundTruth(k, base_offset, pid, segments, truths)
    return LogSequence(tuple(records), k), truth


def max_chain_length(truth: GroundTruth) -> int:
    return max((r.chain_length for r in truth.records if not (r.library or r.foreign)), default=1)
