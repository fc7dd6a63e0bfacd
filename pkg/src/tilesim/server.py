"""Service-provider emulator: registries, activation, report ingestion and the HTTP API."""

from __future__ import annotations

import hashlib
import hmac
import json
import logging
import random
import re
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable
from urllib.parse import parse_qs, urlsplit

from . import crypto, wire
from .medium import METERS_PER_MILE, haversine_m, random_bytes, to_timestamp_ms
from .transport import Request, Response

log = logging.getLogger(__name__)

COMMUNITY_RADIUS_M = wire.COMMUNITY_RADIUS_MILES * METERS_PER_MILE
DEFAULT_VENDORS = {"TILE": bytes.fromhex("5469fe1e0c0ffee0a11ce0b0b0000001")}


class ServerError(Exception):
    def __init__(self, status: int, code: str, message: str = ""):
        super().__init__(message or code)
        self.status = status
        self.code = code
        self.message = message or code


def denied() -> ServerError:
    # same answer for "not yours" and "does not exist"
    return ServerError(403, "authorization-denied", "not authorized for this tile")


@dataclass
class UserRecord:
    user_uuid: bytes
    email: str
    password_salt: bytes
    password_digest: bytes
    client_uuids: set = field(default_factory=set)
    phone_tile_uuid: str | None = None
    verification_code: str = ""
    email_verified: bool = False
    anti_theft_identity: dict | None = None
    last_position: tuple | None = None  # (lat, lon, timestamp_ms)

    def to_json(self):
        return {
            "user_uuid": self.user_uuid.hex(),
            "email": self.email,
            "password_salt": self.password_salt.hex(),
            "password_digest": self.password_digest.hex(),
            "client_uuids": sorted(c.hex() for c in self.client_uuids),
            "phone_tile_uuid": self.phone_tile_uuid,
            "verification_code": self.verification_code,
            "email_verified": self.email_verified,
            "anti_theft_identity": self.anti_theft_identity,
            "last_position": list(self.last_position) if self.last_position else None,
        }

    @classmethod
    def from_json(cls, d):
        return cls(
            user_uuid=bytes.fromhex(d["user_uuid"]),
            email=d["email"],
            password_salt=bytes.fromhex(d["password_salt"]),
            password_digest=bytes.fromhex(d["password_digest"]),
            client_uuids={bytes.fromhex(c) for c in d["client_uuids"]},
            phone_tile_uuid=d["phone_tile_uuid"],
            verification_code=d["verification_code"],
            email_verified=d["email_verified"],
            anti_theft_identity=d["anti_theft_identity"],
            last_position=tuple(d["last_position"]) if d["last_position"] else None,
        )


@dataclass
class TagRecord:
    tile_id: bytes
    auth_key: bytes
    owner_uuid: bytes | None
    vendor_id: str
    activation_time: float
    name: str = ""
    shared_uuids: set = field(default_factory=set)
    anti_theft: bool = False
    key_epoch: int = 0

    def to_json(self):
        return {
            "tile_id": self.tile_id.hex(),
            "auth_key": self.auth_key.hex(),
            "owner_uuid": self.owner_uuid.hex() if self.owner_uuid else None,
            "vendor_id": self.vendor_id,
            "activation_time": self.activation_time,
            "name": self.name,
            "shared_uuids": sorted(u.hex() for u in self.shared_uuids),
            "anti_theft": self.anti_theft,
            "key_epoch": self.key_epoch,
        }

    @classmethod
    def from_json(cls, d):
        return cls(
            tile_id=bytes.fromhex(d["tile_id"]),
            auth_key=bytes.fromhex(d["auth_key"]),
            owner_uuid=bytes.fromhex(d["owner_uuid"]) if d["owner_uuid"] else None,
            vendor_id=d["vendor_id"],
            activation_time=d["activation_time"],
            name=d["name"],
            shared_uuids={bytes.fromhex(u) for u in d["shared_uuids"]},
            anti_theft=d["anti_theft"],
            key_epoch=d["key_epoch"],
        )


class TileServer:
    """All provider-side state. Callers serialize access (the HTTP app holds a lock)."""

    def __init__(
        self,
        vendors: dict[str, bytes] | None = None,
        clock: Callable[[], float] | None = None,
        rng: random.Random | None = None,
        retain_reports_on_delete: bool = True,
        fresh_key_on_transfer: bool = False,
    ):
        self.vendors = dict(DEFAULT_VENDORS if vendors is None else vendors)
        self.clock = clock or (lambda: time.time() - 1_704_067_200)
        self.rng = rng or random.Random(0)
        self.retain_reports_on_delete = retain_reports_on_delete
        self.fresh_key_on_transfer = fresh_key_on_transfer
        self.users: dict[bytes, UserRecord] = {}
        self.tags: dict[bytes, TagRecord] = {}
        self.triplets: set[tuple[bytes, bytes, bytes, bytes]] = set()
        self.reports: list[dict] = []
        self.index: dict[bytes, tuple[bytes, int]] = {}

    # -- helpers

    def _user(self, user_uuid: bytes | None) -> UserRecord:
        user = self.users.get(user_uuid) if user_uuid else None
        if user is None:
            raise ServerError(401, "unknown-user", "user_uuid not recognized")
        return user

    def user_by_email(self, email: str) -> UserRecord | None:
        for user in self.users.values():
            if user.email == email:
                return user
        return None

    def _owned(self, tile_id: bytes, user_uuid: bytes) -> TagRecord:
        record = self.tags.get(tile_id)
        if record is None or record.owner_uuid != user_uuid:
            raise denied()
        return record

    def _index_add(self, record: TagRecord) -> None:
        for ctr, pid in enumerate(crypto.private_id_schedule(record.auth_key, record.tile_id)):
            self.index[pid] = (record.tile_id, ctr)

    def _index_remove(self, record: TagRecord) -> None:
        for pid in crypto.private_id_schedule(record.auth_key, record.tile_id):
            if self.index.get(pid, (None,))[0] == record.tile_id:
                del self.index[pid]

    def rebuild_index(self) -> None:
        self.index = {}
        for record in self.tags.values():
            self._index_add(record)

    def resolve(self, private_id: bytes) -> tuple[bytes, int] | None:
        return self.index.get(bytes(private_id))

    @staticmethod
    def _digest(salt: bytes, password: str) -> bytes:
        return hashlib.pbkdf2_hmac("sha256", password.encode(), salt, 1000)

    # -- registration

    def create_user(self, req: wire.RegistrationRequest) -> wire.RegistrationResponse:
        if self.user_by_email(req.email) is not None:
            raise ServerError(409, "duplicate-email", f"{req.email} is already registered")
        user_uuid = random_bytes(self.rng, 16)
        salt = random_bytes(self.rng, 16)
        user = UserRecord(
            user_uuid=user_uuid,
            email=req.email,
            password_salt=salt,
            password_digest=self._digest(salt, req.password),
            client_uuids={req.client_uuid},
            verification_code=f"{self.rng.randrange(10**6):06d}",
        )
        self.users[user_uuid] = user
        return wire.RegistrationResponse(user_uuid, "ACTIVATED")

    def verify_email(self, user_uuid: bytes, code: str) -> bool:
        user = self._user(user_uuid)
        user.email_verified = hmac.compare_digest(user.verification_code, code)
        return user.email_verified

    def generate_tile_uuid(self, req: wire.TileUuidRequest, user_uuid: bytes) -> wire.TileUuidResponse:
        user = self._user(user_uuid)
        if req.user_uuid != user_uuid:
            raise ServerError(403, "authorization-denied", "user_uuid mismatch")
        user.client_uuids.add(req.tile_uuid)
        user.phone_tile_uuid = wire.PHONE_PREFIX + random_bytes(self.rng, 16).hex()
        return wire.TileUuidResponse(user.phone_tile_uuid)

    # -- activation

    def establish_auth_key(self, req: wire.ActivationRequest, user_uuid: bytes) -> wire.ActivationResponse:
        user = self._user(user_uuid)
        interim = self.vendors.get(req.model[:4])
        if interim is None:
            raise ServerError(403, "unknown-vendor", f"no interim key for vendor {req.model[:4]!r}")
        ledger_key = (req.tile_uuid, req.rand_a, req.rand_t, req.sres_t)
        if ledger_key in self.triplets:
            raise ServerError(403, "triplet-reused", "authentication triplet already used")
        triplet = crypto.AuthTriplet(req.rand_a, req.rand_t, req.sres_t)
        if not crypto.verify_triplet(interim, triplet, req.tile_uuid, "activation"):
            raise ServerError(403, "triplet-invalid", "authentication triplet does not verify")
        if req.tile_uuid in self.tags:
            raise ServerError(409, "already-activated", "tile is already registered")
        self.triplets.add(ledger_key)
        record = TagRecord(
            tile_id=req.tile_uuid,
            auth_key=crypto.derive_auth_key(interim, req.sres_t),
            owner_uuid=user.user_uuid,
            vendor_id=req.model[:4],
            activation_time=self.clock(),
            name=req.name,
            anti_theft=user.anti_theft_identity is not None,
        )
        self.tags[record.tile_id] = record
        self._index_add(record)
        return wire.ActivationResponse(record.tile_id, record.auth_key)

    # -- reports

    def ingest_location_update(
        self, update: wire.LocationUpdate, raw: str, user_uuid: bytes, client_uuid: bytes | None
    ) -> None:
        user = self._user(user_uuid)
        resolved = []
        for u in update.updates:
            row = []
            for entry in u.tiles:
                data = entry.data
                if isinstance(data, wire.AdvertisedServiceData):
                    hit = self.resolve(data.payload_service_data)
                    row.append(hit[0].hex() if hit else None)
                elif isinstance(data, wire.ConnectedAuthData):
                    record = self.tags.get(data.tile_uuid)
                    ok = record is not None and crypto.verify_triplet(
                        record.auth_key, crypto.AuthTriplet(data.rand_a, data.rand_t, data.sres_t), data.tile_uuid,
                        "session",
                    )
                    row.append(data.tile_uuid.hex() if ok else None)
                else:
                    row.append(None)
            resolved.append(row)
        self.reports.append(
            {
                "seq": len(self.reports),
                "received_at": self.clock(),
                "user_uuid": user.user_uuid.hex(),
                "client_uuid": client_uuid.hex() if client_uuid else None,
                "body": raw,
                "resolved": resolved,
            }
        )
        if update.updates:
            last = max(update.updates, key=lambda u: u.location.timestamp).location
            user.last_position = (last.latitude, last.longitude, last.timestamp)

    def history(self, tile_id: bytes, user_uuid: bytes | None) -> list[wire.Location]:
        record = self.tags.get(tile_id)
        if record is None or user_uuid is None or (
            record.owner_uuid != user_uuid and user_uuid not in record.shared_uuids
        ):
            raise denied()
        points = []
        target = tile_id.hex()
        for row in self.reports:
            body = wire.decode(row["body"], wire.LocationUpdate)
            for u, res in zip(body.updates, row["resolved"]):
                for entry, hit in zip(u.tiles, res):
                    if hit == target and isinstance(entry.data, wire.AdvertisedServiceData):
                        points.append((u.location.timestamp, row["seq"], u.location))
        points.sort(key=lambda p: (p[0], p[1]))
        return [p[2] for p in points]

    # -- scan and secure

    def filter_scan(self, req: wire.ScanSecureRequest) -> wire.ScanSecureResponse:
        out = []
        for scan in req.scans:
            kept = []
            for pid in scan:
                hit = self.resolve(pid)
                if hit is not None and self.tags[hit[0]].anti_theft:
                    continue
                kept.append(pid)
            out.append(tuple(kept))
        return wire.ScanSecureResponse(tuple(out))

    def enable_anti_theft(self, user_uuid: bytes, req: wire.AntiTheftRequest) -> None:
        user = self._user(user_uuid)
        if not req.accepted_terms:
            raise ServerError(400, "terms-not-accepted")
        user.anti_theft_identity = {"verification_id": req.verification_id, "document_type": req.document_type}
        for record in self.tags.values():
            if record.owner_uuid == user_uuid:
                record.anti_theft = True

    # -- community

    def community_stats(self, lat: float, lon: float) -> wire.CommunityStatsResponse:
        count = sum(
            1
            for user in self.users.values()
            if user.last_position is not None
            and haversine_m(lat, lon, user.last_position[0], user.last_position[1]) <= COMMUNITY_RADIUS_M
        )
        now_ms = to_timestamp_ms(self.clock())
        return wire.CommunityStatsResponse(
            timestamp_ms=now_ms, timestamp=now_ms, center_latitude=lat, center_longitude=lon, tilers_around=count
        )

    # -- transfer and sharing

    def _rekey(self, record: TagRecord) -> None:
        self._index_remove(record)
        record.auth_key = random_bytes(self.rng, 16)
        record.activation_time = self.clock()
        record.key_epoch += 1
        self._index_add(record)

    def transfer(self, tile_id: bytes, user_uuid: bytes, recipient_email: str) -> None:
        record = self._owned(tile_id, user_uuid)
        recipient = self.user_by_email(recipient_email)
        if recipient is None:
            raise ServerError(404, "unknown-recipient", f"no user {recipient_email}")
        record.owner_uuid = recipient.user_uuid
        record.shared_uuids.discard(recipient.user_uuid)
        record.anti_theft = recipient.anti_theft_identity is not None
        if self.fresh_key_on_transfer:
            self._rekey(record)

    def add_share(self, tile_id: bytes, user_uuid: bytes, email: str) -> wire.SharingResponse:
        record = self._owned(tile_id, user_uuid)
        other = self.user_by_email(email)
        if other is None:
            raise ServerError(404, "unknown-recipient", f"no user {email}")
        record.shared_uuids.add(other.user_uuid)
        return wire.SharingResponse("TILE", tile_id, user_uuid, other.user_uuid, other.email)

    def revoke_share(self, tile_id: bytes, user_uuid: bytes, email: str) -> None:
        record = self._owned(tile_id, user_uuid)
        other = self.user_by_email(email)
        if other is None or other.user_uuid not in record.shared_uuids:
            raise ServerError(404, "not-shared", f"tile is not shared with {email}")
        record.shared_uuids.discard(other.user_uuid)
        if self.fresh_key_on_transfer:
            self._rekey(record)

    def tiles_for(self, user_uuid: bytes) -> wire.TileListResponse:
        self._user(user_uuid)
        grants = []
        for record in self.tags.values():
            if record.owner_uuid == user_uuid:
                role = "owner"
            elif user_uuid in record.shared_uuids:
                role = "shared"
            else:
                continue
            grants.append(
                wire.TileGrant(record.tile_id, record.auth_key, role, to_timestamp_ms(record.activation_time))
            )
        return wire.TileListResponse(tuple(grants))

    # -- deletion

    def delete_user(self, user_uuid: bytes, password: str) -> wire.DeletionResponse:
        user = self._user(user_uuid)
        if not hmac.compare_digest(self._digest(user.password_salt, password), user.password_digest):
            raise ServerError(403, "bad-password", "password does not match")
        del self.users[user_uuid]
        for record in self.tags.values():
            record.shared_uuids.discard(user_uuid)
            if record.owner_uuid == user_uuid:
                # retired tiles stay registered so they cannot be activated again
                record.owner_uuid = None
        if not self.retain_reports_on_delete:
            self.reports = [r for r in self.reports if r["user_uuid"] != user_uuid.hex()]
        return wire.DeletionResponse(202)

    # -- persistence

    def snapshot(self) -> dict:
        return {
            "users": [u.to_json() for u in sorted(self.users.values(), key=lambda u: u.user_uuid)],
            "tags": [t.to_json() for t in sorted(self.tags.values(), key=lambda t: t.tile_id)],
            "triplets": sorted([[x.hex() for x in t] for t in self.triplets]),
            "reports": list(self.reports),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.snapshot(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def from_snapshot(cls, snap: dict, **kwargs) -> "TileServer":
        server = cls(**kwargs)
        server.users = {u.user_uuid: u for u in map(UserRecord.from_json, snap["users"])}
        server.tags = {t.tile_id: t for t in map(TagRecord.from_json, snap["tags"])}
        server.triplets = {tuple(bytes.fromhex(x) for x in t) for t in snap["triplets"]}
        server.reports = [dict(r) for r in snap["reports"]]
        server.rebuild_index()
        return server

    @classmethod
    def load(cls, path: str | Path, **kwargs) -> "TileServer":
        return cls.from_snapshot(json.loads(Path(path).read_text()), **kwargs)


# --- HTTP API -------------------------------------------------------------------

API = "/api/v1"
HEX_RE = r"[0-9a-f]+"


def _hex_header(headers: dict, name: str) -> bytes | None:
    value = {k.lower(): v for k, v in headers.items()}.get(name)
    if not value:
        return None
    try:
        return bytes.fromhex(value)
    except ValueError:
        raise ServerError(400, "bad-header", f"{name} must be hex") from None


def _hex_path(text: str) -> bytes:
    try:
        return bytes.fromhex(text)
    except ValueError:
        raise ServerError(400, "bad-path", "identifier must be hex") from None


class ApiApp:
    """Routes requests to a TileServer. One lock makes every request a single writer."""

    def __init__(self, server: TileServer):
        self.server = server
        self.lock = threading.RLock()
        self.routes: list[tuple[str, re.Pattern, Callable]] = [
            ("POST", re.compile(rf"^{API}/users$"), self._register),
            ("POST", re.compile(rf"^{API}/tiles/generate_tileUUID$"), self._generate_tile_uuid),
            ("POST", re.compile(rf"^{API}/tiles/activation$"), self._activate),
            ("POST", re.compile(rf"^{API}/tiles/location/update$"), self._location_update),
            ("GET", re.compile(rf"^{API}/tiles/location/history/(?P<tile>{HEX_RE})$"), self._history),
            ("POST", re.compile(rf"^{API}/scan_and_secure$"), self._scan),
            ("POST", re.compile(rf"^{API}/users/(?P<user>{HEX_RE})/anti_theft$"), self._anti_theft),
            ("POST", re.compile(rf"^{API}/users/(?P<user>{HEX_RE})/verify_email$"), self._verify_email),
            ("GET", re.compile(rf"^{API}/users/(?P<user>{HEX_RE})/tiles$"), self._tiles),
            ("POST", re.compile(rf"^{API}/tiles/(?P<tile>{HEX_RE})/transfer$"), self._transfer),
            ("POST", re.compile(rf"^{API}/tiles/shares$"), self._share),
            ("DELETE", re.compile(rf"^{API}/tiles/shares$"), self._unshare),
            ("GET", re.compile(rf"^{API}/community/stats$"), self._community),
            ("DELETE", re.compile(rf"^{API}/users/(?P<user>{HEX_RE})$"), self._delete_user),
        ]

    def __call__(self, request: Request) -> Response:
        return self.handle(request)

    def handle(self, request: Request) -> Response:
        parts = urlsplit(request.path)
        with self.lock:
            try:
                for method, pattern, fn in self.routes:
                    m = pattern.match(parts.path)
                    if m and method == request.method:
                        body = fn(request, parse_qs(parts.query), **m.groupdict())
                        status = 202 if isinstance(body, wire.DeletionResponse) else 200
                        return Response(status, wire.encode(body))
                return self._error(ServerError(404, "not-found", f"no route for {request.method} {parts.path}"))
            except wire.WireError as exc:
                code = "schema-error" if isinstance(exc, wire.SchemaError) else "validation-error"
                return self._error(ServerError(400, code, str(exc)))
            except crypto.CryptoArgumentError as exc:
                return self._error(ServerError(400, "invalid-argument", str(exc)))
            except ServerError as exc:
                return self._error(exc)

    @staticmethod
    def _error(exc: ServerError) -> Response:
        return Response(exc.status, wire.encode(wire.ErrorBody(exc.code, exc.message)))

    def _register(self, req, query):
        return self.server.create_user(wire.decode(req.body, wire.RegistrationRequest))

    def _generate_tile_uuid(self, req, query):
        body = wire.decode(req.body, wire.TileUuidRequest)
        return self.server.generate_tile_uuid(body, _hex_header(req.headers, "user_uuid"))

    def _activate(self, req, query):
        body = wire.decode(req.body, wire.ActivationRequest)
        return self.server.establish_auth_key(body, _hex_header(req.headers, "user_uuid"))

    def _location_update(self, req, query):
        body = wire.decode(req.body, wire.LocationUpdate)
        self.server.ingest_location_update(
            body, req.body, _hex_header(req.headers, "user_uuid"), _hex_header(req.headers, "client_uuid")
        )
        return wire.Ack()

    def _history(self, req, query, tile):
        tile_id = _hex_path(tile)
        points = self.server.history(tile_id, _hex_header(req.headers, "user_uuid"))
        return wire.HistoryResponse(tile_id, tuple(points))

    def _scan(self, req, query):
        return self.server.filter_scan(wire.decode(req.body, wire.ScanSecureRequest))

    def _anti_theft(self, req, query, user):
        user_uuid = _hex_path(user)
        if _hex_header(req.headers, "user_uuid") != user_uuid:
            raise ServerError(403, "authorization-denied", "can only enroll yourself")
        self.server.enable_anti_theft(user_uuid, wire.decode(req.body, wire.AntiTheftRequest))
        return wire.Ack()

    def _verify_email(self, req, query, user):
        code = json.loads(req.body or "{}").get("code", "")
        if not self.server.verify_email(_hex_path(user), str(code)):
            raise ServerError(400, "bad-code", "verification code does not match")
        return wire.Ack()

    def _tiles(self, req, query, user):
        user_uuid = _hex_path(user)
        if _hex_header(req.headers, "user_uuid") != user_uuid:
            raise ServerError(403, "authorization-denied", "can only list your own tiles")
        return self.server.tiles_for(user_uuid)

    def _transfer(self, req, query, tile):
        body = wire.decode(req.body, wire.TransferRequest)
        self.server.transfer(_hex_path(tile), _hex_header(req.headers, "user_uuid"), body.recipient_email)
        return wire.Ack()

    def _share(self, req, query):
        body = wire.decode(req.body, wire.ShareRequest)
        return self.server.add_share(body.tile_uuid, _hex_header(req.headers, "user_uuid"), body.email)

    def _unshare(self, req, query):
        body = wire.decode(req.body, wire.ShareRequest)
        self.server.revoke_share(body.tile_uuid, _hex_header(req.headers, "user_uuid"), body.email)
        return wire.Ack()

    def _community(self, req, query):
        try:
            lat = float(query["latitude"][0])
            lon = float(query["longitude"][0])
        except (KeyError, ValueError):
            raise ServerError(400, "schema-error", "latitude and longitude query parameters required") from None
        wire.Location(0.0, lat, lon, 0).validate("$.query")
        return self.server.community_stats(lat, lon)

    def _delete_user(self, req, query, user):
        user_uuid = _hex_path(user)
        if _hex_header(req.headers, "user_uuid") != user_uuid:
            raise ServerError(403, "authorization-denied", "can only delete yourself")
        body = wire.decode(req.body, wire.DeleteAccountRequest)
        return self.server.delete_user(user_uuid, body.password)


def make_http_server(app: ApiApp, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    """Bind an HTTP server for ``app``; raises OSError if the port is taken."""

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _dispatch(self):
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length).decode("utf-8", errors="replace") if length else ""
            resp = app.handle(Request(self.command, self.path, dict(self.headers.items()), body))
            payload = resp.body.encode()
            self.send_response(resp.status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        do_GET = do_POST = do_DELETE = _dispatch

        def log_message(self, fmt, *args):
            log.debug("%s - %s", self.address_string(), fmt % args)

    return ThreadingHTTPServer((host, port), Handler)
