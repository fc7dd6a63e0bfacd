"""Deterministic world: virtual clock, flat-plane geometry, BLE broadcast and an event log."""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass
from typing import Any, Iterable, Protocol

from .wire import FEED, Advertisement

# Simulation t=0 is 2024-01-01T00:00:00Z.
EPOCH_MS = 1_704_067_200_000
ANCHOR_LAT = 33.7756
ANCHOR_LON = -84.3963
EARTH_RADIUS_M = 6_371_008.8
METERS_PER_MILE = 1609.344
DEFAULT_RANGE_M = 30.0


class SimError(ValueError):
    pass


def to_timestamp_ms(t: float) -> int:
    return EPOCH_MS + int(round(t * 1000))


def from_timestamp_ms(ms: int) -> float:
    return (ms - EPOCH_MS) / 1000.0


@dataclass(frozen=True)
class Position:
    """A point in the simulation plane, in meters east (x) and north (y) of the anchor."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise SimError(f"non-finite position ({self.x}, {self.y})")

    def distance_to(self, other: "Position") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def to_latlon(self) -> tuple[float, float]:
        # equirectangular projection around the anchor
        lat = ANCHOR_LAT + math.degrees(self.y / EARTH_RADIUS_M)
        lon = ANCHOR_LON + math.degrees(self.x / (EARTH_RADIUS_M * math.cos(math.radians(ANCHOR_LAT))))
        return lat, lon

    @classmethod
    def from_latlon(cls, lat: float, lon: float) -> "Position":
        y = math.radians(lat - ANCHOR_LAT) * EARTH_RADIUS_M
        x = math.radians(lon - ANCHOR_LON) * EARTH_RADIUS_M * math.cos(math.radians(ANCHOR_LAT))
        return cls(x, y)

    def to_json(self) -> list[float]:
        return [self.x, self.y]


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp, dl = p2 - p1, math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


class SimClock:
    def __init__(self, now: float = 0.0):
        self.now = float(now)

    def advance(self, dt: float) -> None:
        if dt < 0:
            raise SimError(f"cannot advance the clock by a negative amount ({dt})")
        self.now += dt


class EventLog:
    """Append-only scenario log, serialized as JSON lines ``{t, actor, event, payload}``."""

    def __init__(self):
        self.events: list[dict] = []

    def emit(self, t: float, actor: str, event: str, payload: dict | None = None) -> None:
        self.events.append({"t": t, "actor": actor, "event": event, "payload": payload or {}})

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n" for e in self.events)

    def digest(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode()).hexdigest()

    def select(self, event: str | None = None, actor: str | None = None) -> list[dict]:
        return [
            e for e in self.events if (event is None or e["event"] == event) and (actor is None or e["actor"] == actor)
        ]


class Emitter(Protocol):
    name: str

    @property
    def position(self) -> Position: ...

    def advertise(self, now: float) -> Advertisement | None: ...


class Placement:
    """Where a thing is: a fixed point, or wherever its carrier currently is."""

    def __init__(self, position: Position | None = None, carrier: Any = None):
        self._position = position or Position(0.0, 0.0)
        self.carrier = carrier

    @property
    def position(self) -> Position:
        if self.carrier is not None:
            return self.carrier.position
        return self._position

    @position.setter
    def position(self, value: Position) -> None:
        self.carrier = None
        self._position = value

    def attach(self, carrier: Any) -> None:
        self.carrier = carrier


class BleMedium:
    """Disk-range BLE broadcast. Emitters are sampled at the scan instant."""

    def __init__(self, clock: SimClock, rng: random.Random, range_m: float = DEFAULT_RANGE_M, loss: float = 0.0):
        if not 0.0 <= loss < 1.0:
            raise SimError("loss probability must be in [0, 1)")
        self.clock = clock
        self.rng = rng
        self.range_m = range_m
        self.loss = loss
        self.emitters: list[Emitter] = []

    def register(self, emitter: Emitter) -> None:
        if emitter not in self.emitters:
            self.emitters.append(emitter)

    def unregister(self, emitter: Emitter) -> None:
        if emitter in self.emitters:
            self.emitters.remove(emitter)

    def in_range(self, a: Position, b: Position) -> bool:
        return a.distance_to(b) <= self.range_m

    def scan(self, position: Position, duration: float = 10.0, service: str | None = FEED) -> list[Advertisement]:
        """Advertisements audible at ``position`` now, optionally filtered by service UUID."""
        return [adv for _, adv in self.scan_sources(position, duration, service)]

    def scan_sources(
        self, position: Position, duration: float = 10.0, service: str | None = FEED
    ) -> list[tuple[Emitter, Advertisement]]:
        """Like ``scan`` but also names the emitter; meant for ground-truth bookkeeping only."""
        if duration <= 0:
            raise SimError("scan duration must be positive")
        now = self.clock.now
        heard = []
        for emitter in self.emitters:
            if not self.in_range(position, emitter.position):
                continue
            adv = emitter.advertise(now)
            if adv is None or (service is not None and adv.service_uuid != service):
                continue
            if self.loss and self.rng.random() < self.loss:
                continue
            heard.append((emitter, adv))
        return heard


class World:
    """Clock, medium, log and seeded randomness shared by every actor in a run."""

    def __init__(self, seed: int = 0, range_m: float = DEFAULT_RANGE_M, loss: float = 0.0):
        self.seed = seed
        self.clock = SimClock()
        self.log = EventLog()
        self.medium = BleMedium(self.clock, self.rng_for("medium"), range_m=range_m, loss=loss)

    @property
    def now(self) -> float:
        return self.clock.now

    def rng_for(self, name: str) -> random.Random:
        # str seeds hash through sha512, so streams are stable across processes
        return random.Random(f"{self.seed}/{name}")

    def advance(self, dt: float) -> None:
        self.clock.advance(dt)

    def advance_to(self, t: float) -> None:
        self.clock.advance(max(0.0, t - self.clock.now))

    def emit(self, actor: str, event: str, payload: dict | None = None) -> None:
        self.log.emit(self.clock.now, actor, event, payload)


def random_bytes(rng: random.Random, n: int) -> bytes:
    return rng.getrandbits(8 * n).to_bytes(n, "big")


def path_length(points: Iterable[Position]) -> float:
    pts = list(points)
    return sum(a.distance_to(b) for a, b in zip(pts, pts[1:]))


def sample_path(points: list[Position], n: int) -> list[Position]:
    """``n`` points spaced evenly by arc length along a polyline."""
    if not points:
        raise SimError("empty path")
    total = path_length(points)
    if total == 0 or len(points) == 1:
        return [points[0]] * n
    out = []
    for i in range(n):
        target = total * i / (n - 1)
        walked = 0.0
        last = len(points) - 2
        for k, (a, b) in enumerate(zip(points, points[1:])):
            seg = a.distance_to(b)
            if walked + seg >= target or k == last:
                f = 0.0 if seg == 0 else min(1.0, (target - walked) / seg)
                out.append(Position(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)))
                break
            walked += seg
    return out
