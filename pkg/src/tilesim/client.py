"""Owner/finder phone app emulator.

A ``Client`` talks to tags over the simulated BLE medium and to the provider
through a transport, using the same JSON bodies the real app sends. Setting
``modified_app`` makes Scan and Secure show every unknown identifier it heard
instead of only the ones the server hands back.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from . import crypto, wire
from .medium import Position, World, path_length, random_bytes, sample_path, to_timestamp_ms, from_timestamp_ms
from .tag import (
    CMD_REKEY,
    CMD_RING,
    FIRMWARE_CHAR_UUID,
    HW_VERSION_CHAR_UUID,
    MODEL_CHAR_UUID,
    TILE_ID_CHAR_UUID,
    Tag,
)
from .transport import LocalTransport, Request, Response

API = "/api/v1"
SCAN_INTERVAL_S = 100.0
SCAN_DURATION_S = 10.0
MIN_SCAN_STEP_M = 10.0
FINDER_INTERVAL_S = 60.0


class ClientError(Exception):
    pass


class RegistrationFailed(ClientError):
    pass


class NoTag(ClientError):
    pass


class ActivationFailed(ClientError):
    pass


class AuthorizationDenied(ClientError):
    pass


class MotionRequired(ClientError):
    pass


class EnrollmentFailed(ClientError):
    pass


class ConfirmationRefused(ClientError):
    pass


class RequestFailed(ClientError):
    def __init__(self, response: Response):
        self.status = response.status
        try:
            err = wire.decode(response.body, wire.ErrorBody)
            self.code, msg = err.error, err.message
        except wire.WireError:
            self.code, msg = "unknown", response.body
        super().__init__(f"HTTP {self.status} {self.code}: {msg}")


@dataclass
class TileKey:
    """Everything a phone keeps about one of its tiles."""

    tile_id: bytes
    auth_key: bytes
    activation_time: float
    name: str = ""
    _schedule: dict | None = field(default=None, repr=False, compare=False)

    @property
    def schedule(self) -> dict[bytes, int]:
        """privateId -> counter for the tile's whole cycle (the app's local id database)."""
        if self._schedule is None:
            ids = crypto.private_id_schedule(self.auth_key, self.tile_id)
            self._schedule = {pid: ctr for ctr, pid in enumerate(ids)}
        return self._schedule


@dataclass(frozen=True)
class VerificationResult:
    approved: bool
    verification_id: str
    document_type: str


class MockIdentityVerifier:
    """Stand-in for the external ID-verification provider."""

    def __init__(self, approve: bool = True):
        self.approve = approve
        self.sessions: list[VerificationResult] = []

    def verify(self, email: str) -> VerificationResult:
        result = VerificationResult(self.approve, f"stub-{len(self.sessions):04d}-{email}", "stub-government-id")
        self.sessions.append(result)
        return result


@dataclass
class ScanResult:
    known: list[str]
    unknown: list[tuple[bytes, int]]
    recorded: list[list[bytes]]
    request: wire.ScanSecureRequest | None
    response: wire.ScanSecureResponse | None


class Client:
    def __init__(
        self,
        world: World,
        name: str,
        transport: LocalTransport,
        position: Position | None = None,
        modified_app: bool = False,
        verifier: MockIdentityVerifier | None = None,
    ):
        self.world = world
        self.name = name
        self.transport = transport
        self.rng = world.rng_for(f"client/{name}")
        self.client_uuid = random_bytes(self.rng, 16)
        self.user_uuid: bytes | None = None
        self.phone_tile_uuid: str | None = None
        self.email: str | None = None
        self.position = position or Position(0.0, 0.0)
        self.modified_app = modified_app
        self.verifier = verifier or MockIdentityVerifier()
        self.owned_tiles: dict[bytes, TileKey] = {}
        self.shared_tiles: dict[bytes, TileKey] = {}
        # every key this device has ever held; revocation does not erase local memory
        self.key_cache: dict[bytes, TileKey] = {}
        self._record_id = 0
        self._ctr_a: dict[bytes, int] = {}
        self._tag_keys: dict[bytes, bytes] = {}

    # -- plumbing

    def _emit(self, event: str, payload: dict | None = None) -> None:
        self.world.emit(self.name, event, payload)

    def _headers(self) -> dict:
        headers = {"client_uuid": self.client_uuid.hex()}
        if self.user_uuid is not None:
            headers["user_uuid"] = self.user_uuid.hex()
        return headers

    def _call(self, method: str, path: str, body: wire.Body | None = None, expect: type[wire.Body] | None = None):
        req = Request(method, path, self._headers(), wire.encode(body) if body is not None else "")
        resp = self.transport.send(self.name, req)
        if resp.status not in (200, 202):
            raise RequestFailed(resp)
        return wire.decode(resp.body, expect) if expect is not None else resp

    def _next_record_id(self) -> int:
        self._record_id += 1
        return self._record_id

    def _require_registered(self) -> None:
        if self.user_uuid is None:
            raise ClientError("client is not registered")

    def _remember(self, tile_id: bytes, key: TileKey, source: str) -> None:
        self.key_cache[tile_id] = key
        self._emit("key_acquired", {"tile_id": tile_id.hex(), "source": source})

    def all_tiles(self) -> dict[bytes, TileKey]:
        return {**self.shared_tiles, **self.owned_tiles}

    def in_range(self, tag: Tag) -> bool:
        return self.world.medium.in_range(self.position, tag.position)

    # -- registration

    def register(self, email: str, password: str, skip_email_verification: bool = True) -> bytes:
        if self.user_uuid is not None:
            raise RegistrationFailed("this client is already registered")
        try:
            resp = self._call(
                "POST", f"{API}/users", wire.RegistrationRequest(self.client_uuid, email, password),
                wire.RegistrationResponse,
            )
        except RequestFailed as exc:
            raise RegistrationFailed(str(exc)) from exc
        if resp.status != "ACTIVATED":
            raise RegistrationFailed(f"unexpected status {resp.status!r}")
        self.user_uuid = resp.user_uuid
        self.email = email
        tile = self._call(
            "POST", f"{API}/tiles/generate_tileUUID", wire.TileUuidRequest(self.client_uuid, self.user_uuid, "PHONE"),
            wire.TileUuidResponse,
        )
        self.phone_tile_uuid = tile.tile_uuid
        self._emit("registered", {"user_uuid": self.user_uuid.hex(), "email_verified": not skip_email_verification})
        return self.user_uuid

    # -- activation

    def activate_tag(self, tag: Tag, name: str = "Mate") -> bytes:
        """Run the full activation handshake with ``tag`` and return its tileId."""
        self._require_registered()
        nearby = self.world.medium.scan(self.position, SCAN_DURATION_S, service=wire.FEEC)
        if not any(adv.mac == tag.current_mac(self.world.now) for adv in nearby):
            raise NoTag(f"no unactivated tag {tag.name} in range")
        chars = tag.read_tdi()
        tdi = wire.TdiRecord(
            chars[TILE_ID_CHAR_UUID], chars[MODEL_CHAR_UUID], chars[FIRMWARE_CHAR_UUID], chars[HW_VERSION_CHAR_UUID]
        )
        rand_a = random_bytes(self.rng, crypto.RAND_A_LEN)
        rand_t, sres_t = tag.auth_challenge(rand_a)
        body = wire.ActivationRequest(
            tile_uuid=tdi.tile_id, name=name, rand_a=rand_a, rand_t=rand_t, sres_t=sres_t,
            hw_version=tdi.hardware_version, model=tdi.model, firmware_version=tdi.firmware,
        )
        try:
            resp = self._call("POST", f"{API}/tiles/activation", body, wire.ActivationResponse)
        except RequestFailed as exc:
            raise ActivationFailed(str(exc)) from exc
        tag.complete_activation(sres_t)
        key = TileKey(tdi.tile_id, resp.auth_key, self.world.now, name)
        self.owned_tiles[tdi.tile_id] = key
        self._remember(tdi.tile_id, key, "activation")
        key.schedule  # warm the local privateId database
        self._emit("tag_activated_by_owner", {"tile_id": tdi.tile_id.hex()})
        return tdi.tile_id

    # -- connected-channel operations

    def _key_for(self, tile_id: bytes) -> bytes:
        key = self.all_tiles().get(tile_id)
        if key is None:
            raise ClientError(f"no key for tile {tile_id.hex()}")
        return key.auth_key

    def authenticate_tag(self, tag: Tag, auth_key: bytes | None = None) -> crypto.AuthTriplet:
        """Challenge an activated tag; raise if it cannot prove knowledge of the authKey."""
        auth_key = auth_key or self._key_for(tag.tile_id)
        rand_a = random_bytes(self.rng, crypto.RAND_A_LEN)
        rand_t, sres_t = tag.auth_challenge(rand_a)
        triplet = crypto.AuthTriplet(rand_a, rand_t, sres_t)
        if not crypto.verify_triplet(auth_key, triplet, tag.tile_id, "session"):
            raise ClientError("tag failed session authentication")
        return triplet

    def connect(self, tag: Tag, auth_key: bytes | None = None) -> dict:
        """Authenticate the tag, open a channel and authenticate ourselves to it."""
        if not self.in_range(tag):
            raise NoTag(f"{tag.name} not in range")
        auth_key = auth_key or self._key_for(tag.tile_id)
        triplet = self.authenticate_tag(tag, auth_key)
        channel_prefix = random_bytes(self.rng, crypto.CHANNEL_PREFIX_LEN)
        channel_data = random_bytes(self.rng, crypto.CHANNEL_DATA_LEN)
        toa_token = random_bytes(self.rng, crypto.TOA_TOKEN_LEN)
        tag.open_channel(channel_prefix, channel_data, toa_token, triplet.rand_a)
        self._tag_keys[tag.tile_id] = crypto.derive_tag_key(
            auth_key, triplet.rand_a, channel_data, channel_prefix, toa_token
        )
        self._ctr_a[tag.tile_id] = 0
        return self.send_command(tag, crypto.AUTH_MESSAGE)

    def send_command(self, tag: Tag, msg: bytes) -> dict:
        ctr_a = self._ctr_a[tag.tile_id]
        mac = crypto.mac_message(self._tag_keys[tag.tile_id], ctr_a, msg)
        self._ctr_a[tag.tile_id] = ctr_a + 1
        return tag.receive_owner_message(msg, ctr_a, mac)

    def ring(self, tag: Tag) -> dict:
        self.connect(tag)
        return self.send_command(tag, CMD_RING)

    # -- reporting

    def _location(self, now: float) -> wire.Location:
        lat, lon = self.position.to_latlon()
        return wire.Location(altitude=0.0, latitude=lat, longitude=lon, timestamp=to_timestamp_ms(now))

    def _client_entry(self, ts: int) -> wire.TileEntry:
        return wire.TileEntry(wire.ClientData(self.phone_tile_uuid), ts, self._next_record_id())

    def _upload(self, entries: list[wire.TileEntry], now: float) -> wire.LocationUpdate:
        ts = to_timestamp_ms(now)
        update = wire.Update(self._next_record_id(), self._location(now), (*entries, self._client_entry(ts)))
        body = wire.LocationUpdate((update,))
        self._call("POST", f"{API}/tiles/location/update", body)
        return body

    def report_connected(self, tags: list[Tag], now: float | None = None) -> wire.LocationUpdate | None:
        """Upload the owner's position with fresh auth data for every owned tag in range."""
        self._require_registered()
        now = self.world.now if now is None else now
        entries = []
        ts = to_timestamp_ms(now)
        for tag in tags:
            if tag.tile_id not in self.all_tiles() or not tag.activated or not self.in_range(tag):
                continue
            t = self.authenticate_tag(tag)
            entries.append(
                wire.TileEntry(wire.ConnectedAuthData(t.rand_a, t.rand_t, t.sres_t, tag.tile_id), ts,
                               self._next_record_id())
            )
        if not entries:
            return None
        body = self._upload(entries, now)
        self._emit("report_connected", {"tiles": len(entries)})
        return body

    def is_own(self, private_id: bytes) -> bool:
        return any(private_id in key.schedule for key in self.all_tiles().values())

    def finder_cycle(self, now: float | None = None) -> wire.LocationUpdate | None:
        """One background scan-and-upload pass for other people's tags."""
        self._require_registered()
        now = self.world.now if now is None else now
        heard = self.world.medium.scan(self.position, SCAN_DURATION_S, service=wire.FEED)
        ts = to_timestamp_ms(now)
        entries, seen = [], set()
        for adv in heard:
            if self.is_own(adv.payload) or (adv.mac, adv.payload) in seen:
                continue
            seen.add((adv.mac, adv.payload))
            entries.append(
                wire.TileEntry(wire.AdvertisedServiceData(adv.mac, adv.payload), ts, self._next_record_id())
            )
        if not entries:
            return None
        body = self._upload(entries, now)
        self._emit("finder_upload", {"sightings": len(entries)})
        return body

    # -- owner queries

    def query_history(self, tile_id: bytes) -> list[wire.Location]:
        self._require_registered()
        try:
            resp = self._call("GET", f"{API}/tiles/location/history/{tile_id.hex()}", None, wire.HistoryResponse)
        except RequestFailed as exc:
            if exc.status == 403:
                raise AuthorizationDenied(str(exc)) from exc
            raise
        return list(resp.locations)

    def sync(self) -> wire.TileListResponse:
        """Refresh owned/shared tiles from the server (lazy pickup of transfers and shares)."""
        self._require_registered()
        resp = self._call("GET", f"{API}/users/{self.user_uuid.hex()}/tiles", None, wire.TileListResponse)
        owned, shared = {}, {}
        for grant in resp.tiles:
            current = self.all_tiles().get(grant.tile_uuid)
            act = from_timestamp_ms(grant.activation_timestamp)
            if current is not None and current.auth_key == grant.auth_key:
                key = current
                key.activation_time = act
            else:
                key = TileKey(grant.tile_uuid, grant.auth_key, act, current.name if current else "")
                self._remember(grant.tile_uuid, key, f"sync:{grant.role}")
            (owned if grant.role == "owner" else shared)[grant.tile_uuid] = key
        self.owned_tiles, self.shared_tiles = owned, shared
        return resp

    # -- scan and secure

    def scan_and_secure(self, motion_path: list[Position]) -> ScanResult:
        """Six scans along ``motion_path``, 100 s apart; the caller's clock advances by 500 s."""
        self._require_registered()
        points = sample_path(list(motion_path), wire.SCAN_PASSES)
        if path_length(motion_path) == 0 or any(
            a.distance_to(b) < MIN_SCAN_STEP_M for a, b in zip(points, points[1:])
        ):
            raise MotionRequired("Scan and Secure needs the user to keep moving")
        mine = self.all_tiles()
        recorded: list[list[bytes]] = []
        known: dict[str, None] = {}
        for i, point in enumerate(points):
            if i:
                self.world.advance(SCAN_INTERVAL_S)
            self.position = point
            unknown_ids = []
            for adv in self.world.medium.scan(point, SCAN_DURATION_S, service=wire.FEED):
                owner_key = next((k for k in mine.values() if adv.payload in k.schedule), None)
                if owner_key is not None:
                    known[owner_key.name] = None
                elif adv.payload not in unknown_ids:
                    unknown_ids.append(adv.payload)
            recorded.append(unknown_ids)
        counts = Counter(pid for scan in recorded for pid in scan)
        request = response = None
        if counts:
            request = wire.ScanSecureRequest(tuple(tuple(s) for s in recorded))
            response = self._call("POST", f"{API}/scan_and_secure", request, wire.ScanSecureResponse)
            visible = set(counts) if self.modified_app else {pid for scan in response.scans for pid in scan}
        else:
            visible = set()
        order = list(dict.fromkeys(pid for scan in recorded for pid in scan))
        unknown = [(pid, counts[pid]) for pid in order if pid in visible]
        self._emit("scan_and_secure", {"known": list(known), "unknown": [[p.hex(), c] for p, c in unknown],
                                       "modified_app": self.modified_app})
        return ScanResult(list(known), unknown, recorded, request, response)

    # -- anti-theft

    def enable_anti_theft(self) -> None:
        self._require_registered()
        result = self.verifier.verify(self.email)
        if not result.approved:
            raise EnrollmentFailed("identity verification was not approved")
        try:
            self._call(
                "POST", f"{API}/users/{self.user_uuid.hex()}/anti_theft",
                wire.AntiTheftRequest(result.verification_id, result.document_type, True),
            )
        except RequestFailed as exc:
            raise EnrollmentFailed(str(exc)) from exc
        self._emit("anti_theft_enabled", {})

    # -- transfers and sharing

    def _owner_call(self, method, path, body, expect=None):
        try:
            return self._call(method, path, body, expect)
        except RequestFailed as exc:
            if exc.status == 403:
                raise AuthorizationDenied(str(exc)) from exc
            raise

    def transfer(self, tile_id: bytes, recipient_email: str) -> None:
        self._require_registered()
        self._owner_call("POST", f"{API}/tiles/{tile_id.hex()}/transfer", wire.TransferRequest(recipient_email))
        self.owned_tiles.pop(tile_id, None)
        self._emit("transfer", {"tile_id": tile_id.hex(), "to": recipient_email})

    def share(self, tile_id: bytes, email: str) -> wire.SharingResponse:
        self._require_registered()
        resp = self._owner_call("POST", f"{API}/tiles/shares", wire.ShareRequest(tile_id, email),
                                wire.SharingResponse)
        self._emit("share", {"tile_id": tile_id.hex(), "with": email})
        return resp

    def revoke_share(self, tile_id: bytes, email: str) -> None:
        self._require_registered()
        self._owner_call("DELETE", f"{API}/tiles/shares", wire.ShareRequest(tile_id, email))
        self._emit("revoke_share", {"tile_id": tile_id.hex(), "with": email})

    def rekey_tag(self, tag: Tag) -> bool:
        """After a server-side key change, install the new authKey on an owned tag in range."""
        old = self.owned_tiles.get(tag.tile_id)
        self.sync()
        new = self.owned_tiles.get(tag.tile_id)
        if old is None or new is None or new.auth_key == old.auth_key:
            return False
        self.connect(tag, auth_key=old.auth_key)
        self.send_command(tag, bytes([CMD_REKEY]) + new.auth_key)
        self._emit("tag_rekeyed_by_owner", {"tile_id": tag.tile_id.hex()})
        return True

    # -- account

    def delete_account(self, password: str, confirmation: str) -> int:
        self._require_registered()
        if confirmation != "DELETE":
            raise ConfirmationRefused("type DELETE to confirm")
        resp = self._call("DELETE", f"{API}/users/{self.user_uuid.hex()}", wire.DeleteAccountRequest(password),
                          wire.DeletionResponse)
        self._emit("account_deleted", {})
        self.user_uuid = None
        self.owned_tiles, self.shared_tiles = {}, {}
        return resp.http_status

    def community_stats(self) -> int:
        return self.community_stats_at(self.position).tilers_around

    def community_stats_at(self, position: Position) -> wire.CommunityStatsResponse:
        lat, lon = position.to_latlon()
        return self._call(
            "GET", f"{API}/community/stats?latitude={lat!r}&longitude={lon!r}", None, wire.CommunityStatsResponse
        )
