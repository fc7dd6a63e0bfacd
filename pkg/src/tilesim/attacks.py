"""Adversaries for each vulnerability class, and the verdicts they produce.

Each attack function takes only what its adversary could observe: a server
snapshot for the provider, a ``CaptureLog`` for RF eavesdroppers, key material
for a malicious (ex-)sharer, scan results and wire captures for app users.
Ground truth, where a verdict needs it, arrives in a separate argument that is
used for scoring only, never for computing the evidence.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import crypto, wire
from .medium import METERS_PER_MILE, Position, from_timestamp_ms
from .wire import FEED, Advertisement


@dataclass(frozen=True)
class Observation:
    t: float
    receiver: Position
    adv: Advertisement

    def to_event(self, actor: str = "receiver") -> dict:
        return {"t": self.t, "actor": actor, "event": "capture",
                "payload": {"receiver": self.receiver.to_json(), "adv": self.adv.to_json()}}

    @classmethod
    def from_event(cls, event: dict) -> "Observation":
        p = event["payload"]
        return cls(event["t"], Position(*p["receiver"]), Advertisement.from_json(p["adv"]))


@dataclass
class CaptureLog:
    """What passive receivers heard. Nothing else goes in here."""

    observations: list[Observation] = field(default_factory=list)

    def add(self, t: float, receiver: Position, adv: Advertisement) -> None:
        self.observations.append(Observation(t, receiver, adv))

    def extend(self, other: "CaptureLog") -> "CaptureLog":
        merged = CaptureLog(sorted([*self.observations, *other.observations], key=lambda o: o.t))
        return merged

    def __len__(self) -> int:
        return len(self.observations)

    def to_jsonl(self, actor: str = "receiver") -> str:
        return "".join(json.dumps(o.to_event(actor), sort_keys=True, separators=(",", ":")) + "\n"
                       for o in self.observations)

    @classmethod
    def from_jsonl(cls, text: str) -> "CaptureLog":
        return cls([Observation.from_event(json.loads(line)) for line in text.splitlines() if line.strip()])

    @property
    def span(self) -> float:
        if not self.observations:
            return 0.0
        ts = [o.t for o in self.observations]
        return max(ts) - min(ts)


@dataclass
class AttackVerdict:
    attack: str
    success: bool
    evidence: dict = field(default_factory=dict)
    inconclusive: bool = False

    @property
    def status(self) -> str:
        if self.inconclusive:
            return "inconclusive"
        return "success" if self.success else "failure"

    def to_json(self) -> dict:
        return {"attack": self.attack, "status": self.status, "success": self.success, "evidence": self.evidence}


# --- A1: provider-side surveillance ------------------------------------------------

@dataclass
class Trajectory:
    """Scripted ground truth for one phone: (time, position) waypoints, piecewise constant."""

    user_uuid: bytes
    waypoints: list[tuple[float, Position]]

    def at(self, t: float) -> Position:
        pos = self.waypoints[0][1]
        for wt, p in self.waypoints:
            if wt <= t:
                pos = p
            else:
                break
        return pos


def reports_by_uploader(snapshot: dict) -> dict[str, list[dict]]:
    """Flatten the provider's report store into per-user point lists."""
    out: dict[str, list[dict]] = defaultdict(list)
    for row in snapshot["reports"]:
        body = wire.decode(row["body"], wire.LocationUpdate)
        for u in body.updates:
            macs = [e.data.mac_address.hex() for e in u.tiles if isinstance(e.data, wire.AdvertisedServiceData)]
            out[row["user_uuid"]].append({
                "timestamp": u.location.timestamp,
                "latitude": u.location.latitude,
                "longitude": u.location.longitude,
                "macs": macs,
            })
    return out


def a1_server_surveillance(
    snapshot: dict, truth: dict[str, Trajectory], cadence: float, observed_macs: Iterable[bytes] = ()
) -> AttackVerdict:
    """Rebuild every phone's movements from the plaintext reports the provider stores."""
    by_user = reports_by_uploader(snapshot)
    stored_macs = {m for pts in by_user.values() for p in pts for m in p["macs"]}
    per_actor = {}
    all_ok = bool(by_user)
    for name, traj in truth.items():
        points = sorted(by_user.get(traj.user_uuid.hex(), []), key=lambda p: p["timestamp"])
        max_err = 0.0
        for p in points:
            t = from_timestamp_ms(p["timestamp"])
            lat, lon = traj.at(t).to_latlon()
            if (lat, lon) != (p["latitude"], p["longitude"]):
                max_err = max(max_err, Position.from_latlon(p["latitude"], p["longitude"]).distance_to(traj.at(t)))
        required = covered = 0
        times = [from_timestamp_ms(p["timestamp"]) for p in points]
        bounds = [*(w[0] for w in traj.waypoints[1:]), math.inf]
        for (start, pos), end in zip(traj.waypoints, bounds):
            if end - start < cadence:
                continue
            required += 1
            lat, lon = pos.to_latlon()
            if any(start <= t <= start + cadence and (p["latitude"], p["longitude"]) == (lat, lon)
                   for t, p in zip(times, points)):
                covered += 1
        ok = bool(points) and covered == required and max_err == 0.0
        all_ok = all_ok and ok
        per_actor[name] = {"reports": len(points), "waypoints_required": required, "waypoints_recovered": covered,
                           "max_error_m": max_err, "reconstructed": ok}
    missing = sorted(m.hex() for m in observed_macs if m.hex() not in stored_macs)
    return AttackVerdict("a1", all_ok and not missing, {
        "actors": per_actor,
        "stored_macs": sorted(stored_macs),
        "observed_macs_missing": missing,
    })


# --- A2: community-stats localization --------------------------------------------

def a2_community_deanonymize(
    query: Callable[[Position], int],
    area: tuple[Position, Position],
    budget: int = 200,
    truth: Position | None = None,
    radius_m: float = wire.COMMUNITY_RADIUS_MILES * METERS_PER_MILE,
    resolution_m: float = 50.0,
    sweep_step_m: float = 2.5 * METERS_PER_MILE,
    margin_m: float = 25.0,
    stop_extent_m: float = 0.05 * METERS_PER_MILE,
) -> AttackVerdict:
    """Localize a lone user from "users within 5 miles" counts.

    A coarse grid sweep finds query points that see the target; each answer
    keeps or removes a disk from the candidate region. Remaining budget goes
    to queries whose circle boundary crosses the current estimate along the
    region's long axis, which roughly halves it each time.
    """
    lo, hi = area
    xs = np.arange(lo.x, hi.x + resolution_m, resolution_m)
    ys = np.arange(lo.y, hi.y + resolution_m, resolution_m)
    gx, gy = np.meshgrid(xs, ys)
    cx, cy = gx.ravel(), gy.ravel()
    feasible = np.ones(cx.shape, dtype=bool)
    queries: list[tuple[float, float, int]] = []

    def ask(q: Position) -> int:
        n = query(q)
        queries.append((q.x, q.y, n))
        d = np.hypot(cx - q.x, cy - q.y)
        if n > 0:
            feasible[d > radius_m + margin_m] = False
        else:
            feasible[d < radius_m - margin_m] = False
        return n

    sweep = [Position(x, y) for y in np.arange(lo.y, hi.y + 1e-9, sweep_step_m)
             for x in np.arange(lo.x, hi.x + 1e-9, sweep_step_m)]
    for q in sweep:
        if len(queries) >= budget:
            break
        ask(q)
    positives = sum(1 for *_, n in queries if n > 0)
    while positives and feasible.any() and len(queries) < budget:
        fx, fy = cx[feasible], cy[feasible]
        mx, my = fx.mean(), fy.mean()
        extent = float(np.max(np.hypot(fx - mx, fy - my)))
        if extent < stop_extent_m:
            break
        if fx.size > 2:
            cov = np.cov(np.vstack([fx - mx, fy - my]))
            vals, vecs = np.linalg.eigh(cov)
            ux, uy = vecs[:, int(np.argmax(vals))]
        else:
            ux, uy = 1.0, 0.0
        ask(Position(float(mx + radius_m * ux), float(my + radius_m * uy)))

    evidence: dict = {"queries": len(queries), "positive_queries": sum(1 for *_, n in queries if n > 0),
                      "max_count": max((n for *_, n in queries), default=0)}
    if not positives or not feasible.any():
        evidence["reason"] = "no consistent location" if positives else "target never seen"
        return AttackVerdict("a2", False, evidence)
    fx, fy = cx[feasible], cy[feasible]
    est = Position(float(fx.mean()), float(fy.mean()))
    extent = float(np.max(np.hypot(fx - est.x, fy - est.y)))
    evidence.update({"estimate": est.to_json(), "feasible_extent_m": extent,
                     "feasible_area_m2": float(fx.size * resolution_m**2)})
    localized = extent < METERS_PER_MILE
    success = localized and len(queries) <= budget
    if truth is not None:
        err = est.distance_to(truth)
        evidence["error_m"] = err
        success = success and err < METERS_PER_MILE
    return AttackVerdict("a2", success, evidence)


# --- A3: linking by static MAC ---------------------------------------------------

def cluster_by_mac(capture: CaptureLog) -> dict[str, list[int]]:
    clusters: dict[str, list[int]] = defaultdict(list)
    for i, obs in enumerate(capture.observations):
        clusters[obs.adv.mac.hex()].append(i)
    return dict(clusters)


def _partition(labels: list[str]) -> set[frozenset[int]]:
    groups: dict[str, set[int]] = defaultdict(set)
    for i, label in enumerate(labels):
        groups[label].add(i)
    return {frozenset(g) for g in groups.values()}


def a3_link_by_static_mac(capture: CaptureLog, truth_labels: list[str] | None = None) -> AttackVerdict:
    clusters = cluster_by_mac(capture)
    found = {frozenset(v) for v in clusters.values()}
    evidence = {
        "clusters": len(clusters),
        "privateIds_per_cluster": {
            mac: len({capture.observations[i].adv.payload for i in idx}) for mac, idx in sorted(clusters.items())
        },
    }
    if truth_labels is None:
        return AttackVerdict("a3", bool(capture.observations), evidence)
    expected = _partition(truth_labels)
    evidence["true_tags"] = len(expected)
    evidence["false_merges"] = sum(1 for c in found if len({truth_labels[i] for i in c}) > 1)
    evidence["false_splits"] = sum(1 for e in expected if e not in found and not any(e < c for c in found))
    return AttackVerdict("a3", bool(capture.observations) and found == expected, evidence)


# --- A4: fingerprinting by the 90-day identifier cycle ----------------------------

def a4_fingerprint_by_cycle(
    capture: CaptureLog, truth_labels: list[str] | None = None, tolerance_s: float = crypto.ROTATION_PERIOD_S
) -> AttackVerdict:
    """Link sightings whose privateIds recur exactly one cycle apart, ignoring MACs."""
    obs = capture.observations
    if capture.span < crypto.CYCLE_S - tolerance_s:
        return AttackVerdict("a4", False, {"span_days": capture.span / 86400, "links": 0}, inconclusive=True)
    by_id: dict[bytes, list[int]] = defaultdict(list)
    for i, o in enumerate(obs):
        if o.adv.service_uuid == FEED:
            by_id[o.adv.payload].append(i)
    links = []
    for pid, idx in by_id.items():
        for a in idx:
            for b in idx:
                if abs(obs[b].t - obs[a].t - crypto.CYCLE_S) < tolerance_s:
                    links.append((a, b))
    # union-find over links gives one fingerprint per re-identified device
    parent = list(range(len(obs)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in links:
        parent[find(a)] = find(b)
    groups: dict[int, set[int]] = defaultdict(set)
    for a, b in links:
        groups[find(a)].update((a, b))
    fingerprints = [sorted(g) for g in groups.values()]
    evidence = {"span_days": capture.span / 86400, "links": len(links), "fingerprints": len(fingerprints)}
    if truth_labels is None:
        return AttackVerdict("a4", bool(links), evidence)
    false_links = sum(1 for a, b in links if truth_labels[a] != truth_labels[b])
    eligible = set()
    first_seen: dict[str, float] = {}
    last_seen: dict[str, float] = {}
    for o, label in zip(obs, truth_labels):
        first_seen[label] = min(first_seen.get(label, o.t), o.t)
        last_seen[label] = max(last_seen.get(label, o.t), o.t)
    for label in first_seen:
        if last_seen[label] - first_seen[label] >= crypto.CYCLE_S - tolerance_s:
            eligible.add(label)
    identified = {truth_labels[a] for a, _ in links}
    evidence.update({"false_links": false_links, "eligible_tags": sorted(eligible),
                     "reidentified": sorted(identified & eligible)})
    success = bool(eligible) and eligible <= identified and false_links == 0
    return AttackVerdict("a4", success, evidence)


# --- A5: tracking with a retained authKey ------------------------------------------

def a5_track_with_compromised_key(
    auth_key: bytes,
    tile_id: bytes,
    capture: CaptureLog,
    after: float = 0.0,
    truth_labels: list[str] | None = None,
    target: str | None = None,
) -> AttackVerdict:
    """Regenerate the full schedule from a kept authKey and pick the victim out of a capture."""
    schedule = set(crypto.private_id_schedule(auth_key, tile_id))
    track = [
        (i, o) for i, o in enumerate(capture.observations)
        if o.t >= after and o.adv.service_uuid == FEED and o.adv.payload in schedule
    ]
    evidence = {
        "matches": len(track),
        "track": [[o.t, o.receiver.to_json()] for _, o in track],
    }
    if truth_labels is None or target is None:
        return AttackVerdict("a5", bool(track), evidence)
    truth = {i for i, o in enumerate(capture.observations) if o.t >= after and truth_labels[i] == target}
    hit = {i for i, _ in track}
    evidence.update({
        "victim_observations": len(truth),
        "recovered": len(hit & truth),
        "false_matches": len(hit - truth),
        "coverage": len(hit & truth) / len(truth) if truth else 0.0,
    })
    return AttackVerdict("a5", bool(truth) and truth <= hit and not (hit - truth), evidence)


def align_activation(auth_key: bytes, tile_id: bytes, capture: CaptureLog) -> float | None:
    """Estimate a tag's activation time from one sighting of any of its privateIds."""
    schedule = {pid: ctr for ctr, pid in enumerate(crypto.private_id_schedule(auth_key, tile_id))}
    for o in capture.observations:
        if o.adv.payload in schedule:
            slot_start = o.t - (o.t % crypto.ROTATION_PERIOD_S)
            return slot_start - schedule[o.adv.payload] * crypto.ROTATION_PERIOD_S
    return None


# --- broadcasters used by the framing attacks -----------------------------------

class DeriveBroadcaster:
    """Transmits the privateId a compromised tag would be using right now."""

    def __init__(self, name: str, mac: bytes, position: Position, auth_key: bytes, tile_id: bytes,
                 activation_time: float):
        self.name = name
        self.mac = mac
        self.position = position
        self.seed = crypto.derive_private_id_seed(auth_key, tile_id)
        self.activation_time = activation_time

    def advertise(self, now: float) -> Advertisement:
        ctr = crypto.counter_at(self.activation_time, max(now, self.activation_time))
        return Advertisement(self.mac, FEED, crypto.private_id(self.seed, ctr), now)


class ReplayBroadcaster:
    """Re-emits one captured advertisement verbatim, forever."""

    def __init__(self, name: str, position: Position, adv: Advertisement):
        self.name = name
        self.position = position
        self.recorded = adv

    def advertise(self, now: float) -> Advertisement:
        return Advertisement(self.recorded.mac, self.recorded.service_uuid, self.recorded.payload, now)


# --- A6 / A7: framing -----------------------------------------------------------

def _displayed(scan) -> dict[bytes, int]:
    return {pid: n for pid, n in scan.unknown}


def a6_derive_then_replay_frame(
    auth_key: bytes, tile_id: bytes, victim_scan=None, tag_present: bool | None = None
) -> AttackVerdict:
    """Did the victim's Scan and Secure show identifiers we derived, with no tag around?"""
    if victim_scan is None:
        return AttackVerdict("a6", False, {"reason": "no victim scan"})
    schedule = set(crypto.private_id_schedule(auth_key, tile_id))
    shown = _displayed(victim_scan)
    framed = {pid.hex(): n for pid, n in shown.items() if pid in schedule}
    evidence = {"framed_ids": framed, "displayed": len(shown)}
    if tag_present is not None:
        evidence["real_tag_present"] = tag_present
    success = bool(framed) and max(framed.values()) >= 1 and not tag_present
    return AttackVerdict("a6", success, evidence)


def a7_replay_frame(
    replayed: list[Advertisement], victim_scan=None, live_ids: set[bytes] | None = None,
    tag_present: bool | None = None,
) -> AttackVerdict:
    if victim_scan is None:
        return AttackVerdict("a7", False, {"reason": "no victim scan"})
    injected = {a.payload for a in replayed if a.service_uuid == FEED and a.payload is not None}
    shown = _displayed(victim_scan)
    framed = {pid.hex(): n for pid, n in shown.items() if pid in injected}
    evidence = {
        "replayed": len(replayed),
        "replayed_services": sorted({a.service_uuid for a in replayed}),
        "framed_ids": framed,
    }
    if live_ids is not None:
        evidence["stale"] = bool(injected) and not (injected & live_ids)
    if tag_present is not None:
        evidence["real_tag_present"] = tag_present
    return AttackVerdict("a7", bool(framed) and not tag_present, evidence)


# --- A8: anti-theft circumvention ------------------------------------------------

def a8_antitheft_circumvention(
    wire_requests: list[wire.ScanSecureRequest], stock_scan, modified_scan, anti_theft_ids: set[bytes]
) -> AttackVerdict:
    """Three checks: ids sent on the wire, hidden by the stock app, shown by a modified one."""
    if not anti_theft_ids:
        return AttackVerdict("a8", False, {"reason": "no anti-theft tag present"})
    on_wire = {pid for req in wire_requests for scan in req.scans for pid in scan} & anti_theft_ids
    stock = set(_displayed(stock_scan)) & anti_theft_ids if stock_scan is not None else set()
    modified = set(_displayed(modified_scan)) & anti_theft_ids if modified_scan is not None else set()
    checks = {
        "wire_contains_anti_theft_ids": bool(on_wire),
        "stock_app_hides_them": stock_scan is not None and not stock,
        "modified_app_shows_them": bool(modified),
    }
    evidence = {**checks, "ids_on_wire": sorted(p.hex() for p in on_wire),
                "ids_shown_by_modified_app": sorted(p.hex() for p in modified)}
    return AttackVerdict("a8", all(checks.values()), evidence)
