"""Declarative scenarios: schema, deterministic event loop, attack evaluation, reports.

A scenario file is one JSON object::

    {"version": 1, "name": "...", "seed": 7, "duration": 86400,
     "toggles": {"randomized_mac": false, "fresh_key_on_transfer": false, "tag_ctr_check": true},
     "actors": [...], "script": [...], "attacks": [...], "assertions": [...]}

Actors are phones, tags, passive receivers and broadcasters. Script entries are
``{"t": seconds, "actor": name, "do": action, ...}``. Periodic behaviour
(reporting, background finding, wandering, capturing) is declared on the actor.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import operator
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

from . import attacks, crypto, wire
from .attacks import AttackVerdict, CaptureLog, DeriveBroadcaster, ReplayBroadcaster, Trajectory
from .client import Client, ClientError, ScanResult
from .medium import Position, World, random_bytes, sample_path
from .server import ApiApp, TileServer
from .tag import Tag, TagError
from .transport import LocalTransport

SCHEMA_VERSION = 1
EXIT_OK, EXIT_ASSERTION, EXIT_SCHEMA = 0, 1, 2

TOGGLES = {"randomized_mac": False, "fresh_key_on_transfer": False, "tag_ctr_check": True}

ACTIONS = {
    "phone": {
        "register", "move", "activate", "carry", "drop", "share", "revoke_share", "transfer", "sync", "rekey",
        "enable_anti_theft", "scan_and_secure", "delete_account", "ring", "report", "find",
    },
    "tag": {"move"},
    "receiver": {"move", "capture"},
    "broadcaster": {"move", "derive", "replay", "stop"},
}
ATTACK_IDS = ("a1", "a2", "a3", "a4", "a5", "a6", "a7", "a8")
OPS: dict[str, Callable[[Any, Any], bool]] = {
    "==": operator.eq, "!=": operator.ne, ">=": operator.ge, "<=": operator.le, ">": operator.gt, "<": operator.lt,
}


class ScenarioError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


# --- schema ---------------------------------------------------------------------

def _req(obj: dict, key: str, kind, path: str):
    if key not in obj:
        raise ScenarioError(f"{path}.{key}", "missing")
    return _typed(obj[key], kind, f"{path}.{key}")


def _opt(obj: dict, key: str, kind, path: str, default=None):
    if key not in obj or obj[key] is None:
        return default
    return _typed(obj[key], kind, f"{path}.{key}")


def _typed(value, kind, path: str):
    if kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise ScenarioError(path, f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
    return value


def _point(value, path: str) -> Position:
    if not (isinstance(value, list) and len(value) == 2):
        raise ScenarioError(path, "expected [x, y]")
    return Position(float(_typed(value[0], float, path)), float(_typed(value[1], float, path)))


@dataclass
class Scenario:
    name: str
    seed: int
    duration: float
    toggles: dict
    actors: dict[str, dict]
    script: list[dict]
    attacks: list[dict]
    assertions: list[dict]
    range_m: float = 30.0
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def parse(cls, obj: Any) -> "Scenario":
        p = "$"
        _typed(obj, dict, p)
        version = _req(obj, "version", int, p)
        if version != SCHEMA_VERSION:
            raise ScenarioError(f"{p}.version", f"unsupported schema version {version}")
        name = _req(obj, "name", str, p)
        seed = _req(obj, "seed", int, p)
        duration = float(_req(obj, "duration", float, p))
        range_m = float(_opt(obj, "range_m", float, p, 30.0))
        toggles = dict(TOGGLES)
        for key, value in _opt(obj, "toggles", dict, p, {}).items():
            if key not in TOGGLES:
                raise ScenarioError(f"{p}.toggles.{key}", "unknown toggle")
            toggles[key] = _typed(value, bool, f"{p}.toggles.{key}")

        actors: dict[str, dict] = {}
        for i, actor in enumerate(_req(obj, "actors", list, p)):
            ap = f"{p}.actors[{i}]"
            _typed(actor, dict, ap)
            aname = _req(actor, "name", str, ap)
            kind = _req(actor, "kind", str, ap)
            if kind not in ACTIONS:
                raise ScenarioError(f"{ap}.kind", f"unknown actor kind {kind!r}")
            if aname in actors:
                raise ScenarioError(f"{ap}.name", f"duplicate actor {aname!r}")
            if "position" in actor:
                _point(actor["position"], f"{ap}.position")
            for key in ("report_interval", "finder_interval", "interval", "start"):
                if _opt(actor, key, float, ap, 1.0) <= 0 and key != "start":
                    raise ScenarioError(f"{ap}.{key}", "must be positive")
            if "wander" in actor:
                w = _typed(actor["wander"], dict, f"{ap}.wander")
                places = _req(w, "places", list, f"{ap}.wander")
                if not places:
                    raise ScenarioError(f"{ap}.wander.places", "empty")
                for j, pt in enumerate(places):
                    _point(pt, f"{ap}.wander.places[{j}]")
                if _req(w, "every", float, f"{ap}.wander") <= 0:
                    raise ScenarioError(f"{ap}.wander.every", "must be positive")
            actors[aname] = actor
        for aname, actor in actors.items():
            carrier = actor.get("carrier")
            if carrier is not None and actors.get(carrier, {}).get("kind") != "phone":
                raise ScenarioError(f"$.actors[{aname}].carrier", f"undefined phone {carrier!r}")

        def ref(value, path, kind=None):
            _typed(value, str, path)
            if value not in actors:
                raise ScenarioError(path, f"undefined actor {value!r}")
            if kind is not None and actors[value]["kind"] != kind:
                raise ScenarioError(path, f"{value!r} is not a {kind}")
            return value

        script = []
        labels = set()
        for i, step in enumerate(_opt(obj, "script", list, p, [])):
            sp = f"{p}.script[{i}]"
            _typed(step, dict, sp)
            t = float(_req(step, "t", float, sp))
            if not 0 <= t <= duration:
                raise ScenarioError(f"{sp}.t", "outside [0, duration]")
            actor = ref(_req(step, "actor", str, sp), f"{sp}.actor")
            action = _req(step, "do", str, sp)
            kind = actors[actor]["kind"]
            if action not in ACTIONS[kind]:
                raise ScenarioError(f"{sp}.do", f"{kind} cannot {action!r}")
            for key in ("tag",):
                if key in step:
                    ref(step[key], f"{sp}.{key}", "tag")
            for key in ("with", "to_phone", "key_from"):
                if key in step:
                    ref(step[key], f"{sp}.{key}", "phone")
            if "from" in step:
                ref(step["from"], f"{sp}.from", "receiver")
            if "to" in step:
                _point(step["to"], f"{sp}.to")
            if action in ("activate", "carry", "drop", "share", "revoke_share", "transfer", "rekey", "ring", "derive"):
                if "tag" not in step:
                    raise ScenarioError(f"{sp}.tag", "missing")
            if action in ("share", "revoke_share") and "with" not in step:
                raise ScenarioError(f"{sp}.with", "missing")
            if action == "transfer" and "to_phone" not in step:
                raise ScenarioError(f"{sp}.to_phone", "missing")
            if action == "move" and "to" not in step:
                raise ScenarioError(f"{sp}.to", "missing")
            if action == "derive" and "key_from" not in step:
                raise ScenarioError(f"{sp}.key_from", "missing")
            if action == "replay" and "from" not in step:
                raise ScenarioError(f"{sp}.from", "missing")
            if action == "scan_and_secure":
                path = _req(step, "path", list, sp)
                for j, pt in enumerate(path):
                    _point(pt, f"{sp}.path[{j}]")
                label = _req(step, "label", str, sp)
                if label in labels:
                    raise ScenarioError(f"{sp}.label", f"duplicate scan label {label!r}")
                labels.add(label)
            script.append(step)

        attack_list = []
        for i, entry in enumerate(_opt(obj, "attacks", list, p, [])):
            ap = f"{p}.attacks[{i}]"
            _typed(entry, dict, ap)
            aid = _req(entry, "id", str, ap)
            if aid not in ATTACK_IDS:
                raise ScenarioError(f"{ap}.id", f"unknown attack {aid!r}")
            for key in ("attacker", "target", "scanner"):
                if key in entry:
                    ref(entry[key], f"{ap}.{key}", "phone")
            if "tag" in entry:
                ref(entry["tag"], f"{ap}.tag", "tag")
            if "broadcaster" in entry:
                ref(entry["broadcaster"], f"{ap}.broadcaster", "broadcaster")
            for j, r in enumerate(entry.get("receivers", [])):
                ref(r, f"{ap}.receivers[{j}]", "receiver")
            for key in ("scan", "stock", "modified"):
                if key in entry and entry[key] not in labels:
                    raise ScenarioError(f"{ap}.{key}", f"undefined scan label {entry[key]!r}")
            need = {"a5": ("attacker", "tag"), "a6": ("attacker", "tag", "scan"), "a7": ("broadcaster", "scan"),
                    "a8": ("scanner", "tag", "stock", "modified"), "a2": ("target", "area")}.get(aid, ())
            for key in need:
                if key not in entry:
                    raise ScenarioError(f"{ap}.{key}", "missing")
            attack_list.append(entry)

        ids = {a["id"] for a in attack_list}
        assertions = []
        for i, check in enumerate(_opt(obj, "assertions", list, p, [])):
            cp = f"{p}.assertions[{i}]"
            _typed(check, dict, cp)
            aid = _req(check, "attack", str, cp)
            if aid not in ids:
                raise ScenarioError(f"{cp}.attack", f"attack {aid!r} is not run by this scenario")
            if "status" in check and check["status"] not in ("success", "failure", "inconclusive"):
                raise ScenarioError(f"{cp}.status", "expected success, failure or inconclusive")
            if "evidence" in check:
                _typed(check["evidence"], str, f"{cp}.evidence")
                if check.get("op", "==") not in OPS:
                    raise ScenarioError(f"{cp}.op", f"unknown operator {check['op']!r}")
                if "value" not in check:
                    raise ScenarioError(f"{cp}.value", "missing")
            assertions.append(check)

        return cls(name, seed, duration, toggles, actors, script, attack_list, assertions, range_m, obj)

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        try:
            obj = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError("$", f"invalid JSON: {exc}") from exc
        return cls.parse(obj)


def bundled_names() -> list[str]:
    root = resources.files("tilesim") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_path(name: str) -> Path:
    path = resources.files("tilesim") / "scenarios" / f"{name}.json"
    if not path.is_file():
        raise ScenarioError("$", f"no bundled scenario {name!r}")
    return Path(str(path))


def resolve(ref: str) -> Path:
    """A scenario file path, or the name of a bundled scenario."""
    path = Path(ref)
    return path if path.exists() or ref.endswith(".json") else bundled_path(ref)


# --- runtime ---------------------------------------------------------------------

@dataclass
class Receiver:
    name: str
    position: Position
    capture: CaptureLog = field(default_factory=CaptureLog)
    labels: list[str] = field(default_factory=list)
    last_pass: list[attacks.Observation] = field(default_factory=list)


@dataclass
class Broadcaster:
    name: str
    position: Position
    emitters: list = field(default_factory=list)
    replayed: list[wire.Advertisement] = field(default_factory=list)


@dataclass
class ScanRecord:
    scanner: str
    start: float
    points: list[Position]
    result: ScanResult
    tags_present: set[str]
    live_ids: set[bytes]


@dataclass
class RunResult:
    report: dict
    exit_code: int
    world: World
    server: TileServer
    transport: LocalTransport
    runner: "Runner"

    @property
    def report_hash(self) -> str:
        return self.report["report_hash"]


class Runner:
    def __init__(self, scenario: Scenario, seed: int | None = None):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        toggles = scenario.toggles
        self.world = World(self.seed, range_m=scenario.range_m)
        self.server = TileServer(
            clock=lambda: self.world.now,
            rng=self.world.rng_for("server"),
            fresh_key_on_transfer=toggles["fresh_key_on_transfer"],
        )
        self.app = ApiApp(self.server)
        self.transport = LocalTransport(self.app)
        self.phones: dict[str, Client] = {}
        self.tags: dict[str, Tag] = {}
        self.receivers: dict[str, Receiver] = {}
        self.broadcasters: dict[str, Broadcaster] = {}
        self.trajectories: dict[str, list[tuple[float, Position]]] = {}
        self.scans: dict[str, ScanRecord] = {}
        self.finder_observed_macs: set[bytes] = set()
        self.revoked_at: dict[str, float] = {}
        self.errors: list[dict] = []
        self._heap: list = []
        self._seq = 0
        self._build()

    # -- setup

    def _build(self) -> None:
        sc, toggles = self.scenario, self.scenario.toggles
        for name, a in sc.actors.items():
            pos = _point(a["position"], name) if "position" in a else Position(0.0, 0.0)
            if a["kind"] == "phone":
                self.phones[name] = Client(self.world, name, self.transport, pos, bool(a.get("modified_app", False)))
                self.trajectories[name] = [(0.0, pos)]
            elif a["kind"] == "tag":
                mac = bytes.fromhex(a["mac"]) if "mac" in a else None
                tag = Tag(
                    self.world, name, self.server.vendors["TILE"], mac=mac, position=pos,
                    randomized_mac=toggles["randomized_mac"], ctr_check=toggles["tag_ctr_check"],
                    accept_rekey=toggles["fresh_key_on_transfer"],
                    **{k: a[k] for k in ("model", "firmware", "hardware_version") if k in a},
                )
                self.tags[name] = tag
                self.world.medium.register(tag)
            elif a["kind"] == "receiver":
                self.receivers[name] = Receiver(name, pos)
            else:
                self.broadcasters[name] = Broadcaster(name, pos)
        for name, a in sc.actors.items():
            if a["kind"] == "tag" and a.get("carrier"):
                self.tags[name].attach(self.phones[a["carrier"]])
        for name, a in sc.actors.items():
            kind = a["kind"]
            if kind == "phone":
                if a.get("register", True):
                    self._schedule(0.0, 0, lambda n=name: self._register(n))
                if a.get("report_interval"):
                    self._periodic(name, a["report_interval"], a.get("start", 0.0), 1, self._report)
                if a.get("finder_interval"):
                    self._periodic(name, a["finder_interval"], a.get("start", 0.0), 1, self._find)
                if a.get("wander"):
                    w = a["wander"]
                    rng = self.world.rng_for(f"wander/{name}")
                    places = [_point(pt, name) for pt in w["places"]]
                    self._periodic(name, w["every"], w.get("start", w["every"]), 0,
                                   lambda n, r=rng, ps=places: self._move_phone(n, r.choice(ps)))
            elif kind == "receiver" and a.get("interval"):
                self._periodic(name, a["interval"], a.get("start", 0.0), 2, self._capture)
        for step in sc.script:
            self._schedule(float(step["t"]), 0, lambda s=step: self._do(s))

    def _schedule(self, t: float, prio: int, fn: Callable[[], None]) -> None:
        heapq.heappush(self._heap, (t, prio, self._seq, fn))
        self._seq += 1

    def _periodic(self, name: str, every: float, start: float, prio: int, fn: Callable[[str], None]) -> None:
        def tick(t=start):
            fn(name)
            if t + every <= self.scenario.duration:
                self._schedule(t + every, prio, lambda: tick(t + every))

        if start <= self.scenario.duration:
            self._schedule(start, prio, tick)

    def run_loop(self) -> None:
        while self._heap:
            t, _, _, fn = heapq.heappop(self._heap)
            if t > self.scenario.duration:
                break
            self.world.advance_to(t)
            fn()
        self.world.advance_to(self.scenario.duration)

    # -- behaviours

    def _register(self, name: str) -> None:
        a = self.scenario.actors[name]
        phone = self.phones[name]
        if phone.user_uuid is None:
            phone.register(a.get("email", f"{name}@example.com"), a.get("password", f"pw-{name}"))

    def _move_phone(self, name: str, to: Position) -> None:
        self.phones[name].position = to
        self.trajectories[name].append((self.world.now, to))
        self.world.emit(name, "move", {"to": to.to_json()})

    def _report(self, name: str) -> None:
        phone = self.phones[name]
        if phone.user_uuid is not None:
            phone.report_connected(list(self.tags.values()))

    def _find(self, name: str) -> None:
        phone = self.phones[name]
        if phone.user_uuid is None:
            return
        for emitter, adv in self.world.medium.scan_sources(phone.position, service=wire.FEED):
            if isinstance(emitter, Tag) and not phone.is_own(adv.payload):
                self.finder_observed_macs.add(adv.mac)
        phone.finder_cycle()

    def _capture(self, name: str) -> None:
        rx = self.receivers[name]
        rx.last_pass = []
        for emitter, adv in self.world.medium.scan_sources(rx.position, service=None):
            obs = attacks.Observation(self.world.now, rx.position, adv)
            rx.capture.observations.append(obs)
            rx.labels.append(getattr(emitter, "name", "?"))
            rx.last_pass.append(obs)
        self.world.emit(name, "capture", {"heard": len(rx.last_pass)})

    def _do(self, step: dict) -> None:
        actor, action = step["actor"], step["do"]
        kind = self.scenario.actors[actor]["kind"]
        try:
            getattr(self, f"_{kind}_{action}")(actor, step)
        except (ClientError, TagError) as exc:
            failure = {"t": self.world.now, "actor": actor, "do": action, "error": type(exc).__name__,
                       "message": str(exc)}
            self.world.emit(actor, "action_failed", failure)
            if not step.get("expect_error"):
                self.errors.append(failure)

    # phone actions

    def _phone_register(self, name, step):
        self._register(name)

    def _phone_move(self, name, step):
        self._move_phone(name, _point(step["to"], "to"))

    def _phone_activate(self, name, step):
        self.phones[name].activate_tag(self.tags[step["tag"]], step.get("name", step["tag"]))

    def _phone_carry(self, name, step):
        self.tags[step["tag"]].attach(self.phones[name])

    def _phone_drop(self, name, step):
        self.tags[step["tag"]].position = self.phones[name].position

    def _email(self, phone: str) -> str:
        return self.phones[phone].email or self.scenario.actors[phone].get("email", f"{phone}@example.com")

    def _phone_share(self, name, step):
        self.phones[name].share(self.tags[step["tag"]].tile_id, self._email(step["with"]))

    def _phone_revoke_share(self, name, step):
        tag = self.tags[step["tag"]]
        self.phones[name].revoke_share(tag.tile_id, self._email(step["with"]))
        self.revoked_at[step["tag"]] = self.world.now
        if self.scenario.toggles["fresh_key_on_transfer"] and self.phones[name].in_range(tag):
            self.phones[name].rekey_tag(tag)

    def _phone_transfer(self, name, step):
        tag = self.tags[step["tag"]]
        self.phones[name].transfer(tag.tile_id, self._email(step["to_phone"]))
        self.revoked_at[step["tag"]] = self.world.now

    def _phone_sync(self, name, step):
        self.phones[name].sync()

    def _phone_rekey(self, name, step):
        self.phones[name].rekey_tag(self.tags[step["tag"]])

    def _phone_enable_anti_theft(self, name, step):
        self.phones[name].enable_anti_theft()

    def _phone_ring(self, name, step):
        self.phones[name].ring(self.tags[step["tag"]])

    def _phone_report(self, name, step):
        self._report(name)

    def _phone_find(self, name, step):
        self._find(name)

    def _phone_delete_account(self, name, step):
        a = self.scenario.actors[name]
        self.phones[name].delete_account(a.get("password", f"pw-{name}"), step.get("confirmation", "DELETE"))

    def _phone_scan_and_secure(self, name, step):
        phone = self.phones[name]
        saved = phone.modified_app
        if "modified_app" in step:
            phone.modified_app = bool(step["modified_app"])
        path = [_point(pt, "path") for pt in step["path"]]
        start = self.world.now
        points = sample_path(path, wire.SCAN_PASSES)
        present, live = set(), set()
        for i, pt in enumerate(points):
            t = start + i * 100.0
            for tname, tag in self.tags.items():
                if self.world.medium.in_range(pt, tag.position):
                    present.add(tname)
                if tag.activated:
                    live.add(tag.current_private_id(t))
        try:
            result = phone.scan_and_secure(path)
        finally:
            phone.modified_app = saved
        for i, pt in enumerate(points):
            self.trajectories[name].append((start + i * 100.0, pt))
        self.scans[step["label"]] = ScanRecord(name, start, points, result, present, live)

    # tag, receiver and broadcaster actions

    def _tag_move(self, name, step):
        self.tags[name].position = _point(step["to"], "to")

    def _receiver_move(self, name, step):
        self.receivers[name].position = _point(step["to"], "to")

    def _receiver_capture(self, name, step):
        self._capture(name)

    def _broadcaster_move(self, name, step):
        b = self.broadcasters[name]
        b.position = _point(step["to"], "to")
        for e in b.emitters:
            e.position = b.position

    def _broadcaster_derive(self, name, step):
        b = self.broadcasters[name]
        phone = self.phones[step["key_from"]]
        tile_id = self.tags[step["tag"]].tile_id
        key = phone.key_cache.get(tile_id)
        if key is None:
            raise ScenarioError(f"script/{name}", f"{step['key_from']} never held a key for {step['tag']}")
        mac = bytes([0xC2]) + random_bytes(self.world.rng_for(f"broadcaster/{name}"), 5)
        emitter = DeriveBroadcaster(name, mac, b.position, key.auth_key, tile_id, key.activation_time)
        b.emitters.append(emitter)
        self.world.medium.register(emitter)
        self.world.emit(name, "broadcast_derived", {"mac": mac.hex()})

    def _broadcaster_replay(self, name, step):
        b = self.broadcasters[name]
        rx = self.receivers[step["from"]]
        for i, obs in enumerate(rx.last_pass):
            emitter = ReplayBroadcaster(f"{name}/{i}", b.position, obs.adv)
            b.emitters.append(emitter)
            b.replayed.append(obs.adv)
            self.world.medium.register(emitter)
        self.world.emit(name, "replay", {"advertisements": len(rx.last_pass)})

    def _broadcaster_stop(self, name, step):
        b = self.broadcasters[name]
        for e in b.emitters:
            self.world.medium.unregister(e)
        b.emitters = []

    # -- attacks

    def _capture_for(self, entry: dict) -> tuple[CaptureLog, list[str]]:
        names = entry.get("receivers") or sorted(self.receivers)
        rows = []
        for n in names:
            rx = self.receivers[n]
            rows.extend(zip(rx.capture.observations, rx.labels))
        rows.sort(key=lambda r: r[0].t)
        return CaptureLog([o for o, _ in rows]), [label for _, label in rows]

    def _tag_schedule(self, tag: Tag) -> set[bytes]:
        record = self.server.tags.get(tag.tile_id)
        return set(crypto.private_id_schedule(record.auth_key, tag.tile_id)) if record else set()

    def evaluate(self, entry: dict) -> AttackVerdict:
        aid = entry["id"]
        if aid == "a1":
            actors = entry.get("actors") or sorted(
                n for n, a in self.scenario.actors.items()
                if a["kind"] == "phone" and (a.get("report_interval") or a.get("finder_interval"))
            )
            truth = {
                n: Trajectory(self.phones[n].user_uuid or b"", self.trajectories[n]) for n in actors
            }
            cadence = float(entry.get("cadence", 60.0))
            return attacks.a1_server_surveillance(self.server.snapshot(), truth, cadence, self.finder_observed_macs)
        if aid == "a2":
            lo, hi = (_point(pt, "area") for pt in entry["area"])
            querier = Client(self.world, "a2-querier", self.transport)
            return attacks.a2_community_deanonymize(
                lambda q: querier.community_stats_at(q).tilers_around, (lo, hi),
                budget=int(entry.get("budget", 200)), truth=self.phones[entry["target"]].position,
            )
        if aid in ("a3", "a4"):
            capture, labels = self._capture_for(entry)
            fn = attacks.a3_link_by_static_mac if aid == "a3" else attacks.a4_fingerprint_by_cycle
            return fn(capture, labels)
        if aid == "a5":
            capture, labels = self._capture_for(entry)
            tag = self.tags[entry["tag"]]
            key = self.phones[entry["attacker"]].key_cache.get(tag.tile_id)
            if key is None:
                return AttackVerdict("a5", False, {"reason": "attacker never held the key"})
            after = float(entry.get("after", self.revoked_at.get(entry["tag"], 0.0)))
            return attacks.a5_track_with_compromised_key(key.auth_key, tag.tile_id, capture, after, labels, tag.name)
        if aid == "a6":
            tag = self.tags[entry["tag"]]
            key = self.phones[entry["attacker"]].key_cache.get(tag.tile_id)
            scan = self.scans[entry["scan"]]
            if key is None:
                return AttackVerdict("a6", False, {"reason": "attacker never held the key"})
            return attacks.a6_derive_then_replay_frame(key.auth_key, tag.tile_id, scan.result,
                                                       tag.name in scan.tags_present)
        if aid == "a7":
            scan = self.scans[entry["scan"]]
            b = self.broadcasters[entry["broadcaster"]]
            source = entry.get("tag")
            present = source in scan.tags_present if source else None
            live = None
            if source:
                tag = self.tags[source]
                live = {tag.current_private_id(scan.start + i * 100.0) for i in range(len(scan.points))} \
                    if tag.activated else set()
            return attacks.a7_replay_frame(b.replayed, scan.result, live, present)
        if aid == "a8":
            scanner = self.phones[entry["scanner"]].name
            reqs = [
                wire.decode(ex.request.body, wire.ScanSecureRequest)
                for ex in self.transport.exchanges(scanner, "/api/v1/scan_and_secure", "POST")
            ]
            tag = self.tags[entry["tag"]]
            record = self.server.tags.get(tag.tile_id)
            anti_theft = self._tag_schedule(tag) if record is not None and record.anti_theft else set()
            return attacks.a8_antitheft_circumvention(
                reqs, self.scans[entry["stock"]].result, self.scans[entry["modified"]].result, anti_theft
            )
        raise ScenarioError("attacks", f"unknown attack {aid!r}")


def _lookup(evidence: dict, dotted: str):
    value: Any = evidence
    for part in dotted.split("."):
        if not isinstance(value, dict) or part not in value:
            return None
        value = value[part]
    return value


def check_assertion(check: dict, verdicts: dict[str, AttackVerdict]) -> dict:
    verdict = verdicts[check["attack"]]
    passed = True
    if "status" in check:
        passed = verdict.status == check["status"]
    if "evidence" in check:
        actual = _lookup(verdict.evidence, check["evidence"])
        try:
            passed = passed and actual is not None and OPS[check.get("op", "==")](actual, check["value"])
        except TypeError:
            passed = False
    return {**check, "passed": passed}


def report_hash(report: dict) -> str:
    body = {k: v for k, v in report.items() if k != "report_hash"}
    return hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def run(scenario: Scenario, seed: int | None = None) -> RunResult:
    runner = Runner(scenario, seed)
    runner.run_loop()
    verdicts = {}
    for entry in scenario.attacks:
        verdict = runner.evaluate(entry)
        verdicts[entry["id"]] = verdict
        runner.world.emit("attacks", "verdict", verdict.to_json())
    checks = [check_assertion(c, verdicts) for c in scenario.assertions]
    report = {
        "scenario": scenario.name,
        "seed": runner.seed,
        "toggles": dict(scenario.toggles),
        "verdicts": [v.to_json() for v in verdicts.values()],
        "assertions": checks,
        "script_errors": runner.errors,
        "event_log_sha256": runner.world.log.digest(),
    }
    report["report_hash"] = report_hash(report)
    ok = all(c["passed"] for c in checks) and not runner.errors
    code = EXIT_OK if ok else EXIT_ASSERTION
    return RunResult(report, code, runner.world, runner.server, runner.transport, runner)


def run_file(path: str | Path, seed: int | None = None) -> RunResult:
    return run(Scenario.load(path), seed)
