"""JSON bodies exchanged with the Tile API and the BLE payloads tags emit.

Field names and nesting follow the captured request/response bodies. Byte
strings travel as lowercase hex. Keys that were elided in the captures are
kept in ``ext`` maps so they survive a decode/encode round trip.

Values are plain dataclasses; ``decode`` validates, ``encode`` re-validates
and refuses to serialize anything that breaks an invariant.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, ClassVar

FEEC = "FEEC"
FEED = "FEED"
SERVICE_UUIDS = (FEEC, FEED)

PHONE_PREFIX = "p!"
COMMUNITY_RADIUS_MILES = 5.0
SCAN_PASSES = 6

_MAC_RE = re.compile(r"^[0-9a-f]{2}(:[0-9a-f]{2}){5}$")
MODEL_RE = re.compile(r"^[A-Za-z0-9]{4} \d{2}\.\d{2}$")
FIRMWARE_RE = re.compile(r"^\d{2}\.\d{2}\.\d{2}\.\d$")
HW_VERSION_RE = re.compile(r"^\d{2}\.\d{2}$")
_EMAIL_RE = re.compile(r"^[^@\s]+@[^@\s]+$")


class WireError(ValueError):
    pass


class SchemaError(WireError):
    """Body does not have the expected shape; ``path`` locates the offender."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class ValidationError(WireError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class EncodeRefused(WireError):
    pass


# --- helpers ---------------------------------------------------------------

def mac_to_str(mac: bytes) -> str:
    return ":".join(f"{b:02x}" for b in mac)


def mac_from_str(text: str) -> bytes:
    if not _MAC_RE.match(text):
        raise ValueError(f"bad MAC address {text!r}")
    return bytes.fromhex(text.replace(":", ""))


def _need(obj: Any, key: str, path: str) -> Any:
    if not isinstance(obj, dict):
        raise SchemaError(path, "expected object")
    if key not in obj:
        raise SchemaError(f"{path}.{key}", "missing field")
    return obj[key]


def _typed(value: Any, types: tuple, path: str) -> Any:
    # bool is an int subclass; keep it out of numeric fields
    if isinstance(value, bool) and bool not in types:
        raise SchemaError(path, f"expected {types[0].__name__}, got bool")
    if not isinstance(value, types):
        raise SchemaError(path, f"expected {types[0].__name__}, got {type(value).__name__}")
    return value


def _str(obj, key, path):
    return _typed(_need(obj, key, path), (str,), f"{path}.{key}")


def _int(obj, key, path):
    return _typed(_need(obj, key, path), (int,), f"{path}.{key}")


def _num(obj, key, path):
    return float(_typed(_need(obj, key, path), (float, int), f"{path}.{key}"))


def _bool(obj, key, path):
    return _typed(_need(obj, key, path), (bool,), f"{path}.{key}")


def _list(obj, key, path):
    return _typed(_need(obj, key, path), (list,), f"{path}.{key}")


def _obj(obj, key, path):
    return _typed(_need(obj, key, path), (dict,), f"{path}.{key}")


def _hex(obj, key, path, nbytes: int | None) -> bytes:
    return _hex_value(_str(obj, key, path), f"{path}.{key}", nbytes)


def _hex_value(text: str, path: str, nbytes: int | None) -> bytes:
    if not isinstance(text, str):
        raise SchemaError(path, "expected hex string")
    if text != text.lower() or len(text) % 2:
        raise ValidationError(path, "hex must be lowercase with an even number of digits")
    try:
        raw = bytes.fromhex(text)
    except ValueError:
        raise ValidationError(path, "not hex") from None
    if nbytes is not None and len(raw) != nbytes:
        raise ValidationError(path, f"expected {nbytes} bytes, got {len(raw)}")
    return raw


def _ext(obj: dict, known: tuple[str, ...]) -> dict:
    return {k: v for k, v in obj.items() if k not in known}


def _check_bytes(value: Any, n: int | None, path: str) -> None:
    if not isinstance(value, (bytes, bytearray)) or (n is not None and len(value) != n):
        raise ValidationError(path, f"expected {n} bytes")


def _check_ext(ext: dict, known: tuple[str, ...], path: str) -> None:
    clash = set(ext) & set(known)
    if clash:
        raise ValidationError(path, f"extension keys shadow known fields: {sorted(clash)}")


# --- BLE side ----------------------------------------------------------------

@dataclass(frozen=True)
class Advertisement:
    """One BLE advertisement as a passive receiver sees it."""

    mac: bytes
    service_uuid: str
    payload: bytes | None
    emitted_at: float

    def validate(self) -> None:
        _check_bytes(self.mac, 6, "mac")
        if self.service_uuid not in SERVICE_UUIDS:
            raise ValidationError("service_uuid", f"unknown service {self.service_uuid!r}")
        if self.service_uuid == FEED:
            _check_bytes(self.payload, 8, "payload")
        elif self.payload is not None:
            raise ValidationError("payload", "FEEC advertisements carry no payload")

    def to_json(self) -> dict:
        return {
            "mac": mac_to_str(self.mac),
            "service_uuid": self.service_uuid,
            "payload": self.payload.hex() if self.payload is not None else None,
            "emitted_at": self.emitted_at,
        }

    @classmethod
    def from_json(cls, obj: Any, path: str = "$") -> "Advertisement":
        payload = _need(obj, "payload", path)
        adv = cls(
            mac=_mac_field(obj, "mac", path),
            service_uuid=_str(obj, "service_uuid", path),
            payload=None if payload is None else _hex_value(payload, f"{path}.payload", 8),
            emitted_at=_num(obj, "emitted_at", path),
        )
        adv.validate()
        return adv


def _mac_field(obj, key, path) -> bytes:
    text = _str(obj, key, path)
    try:
        return mac_from_str(text)
    except ValueError:
        raise ValidationError(f"{path}.{key}", f"bad MAC address {text!r}") from None


@dataclass(frozen=True)
class TdiRecord:
    """Values served by the tag's device-information service."""

    tile_id: bytes
    model: str
    firmware: str
    hardware_version: str

    def validate(self) -> None:
        _check_bytes(self.tile_id, 8, "tile_id")
        if not MODEL_RE.match(self.model):
            raise ValidationError("model", f"model must look like 'xxxx yy.yy', got {self.model!r}")
        if not FIRMWARE_RE.match(self.firmware):
            raise ValidationError("firmware", f"firmware must look like 'xx.xx.xx.x', got {self.firmware!r}")
        if not HW_VERSION_RE.match(self.hardware_version):
            raise ValidationError(
                "hardware_version", f"hardware version must look like 'xx.xx', got {self.hardware_version!r}"
            )

    @property
    def vendor_id(self) -> str:
        return self.model[:4]


# --- HTTP bodies ---------------------------------------------------------------

class Body:
    """Base for HTTP bodies; subclasses provide to_json/from_json/validate."""

    kind: ClassVar[str]

    def validate(self) -> None:  # pragma: no cover - overridden
        pass

    def to_json(self) -> Any:
        raise NotImplementedError

    @classmethod
    def from_json(cls, obj: Any, path: str = "$") -> "Body":
        raise NotImplementedError


@dataclass(frozen=True)
class RegistrationRequest(Body):
    kind: ClassVar[str] = "registration_request"
    client_uuid: bytes
    email: str
    password: str

    def validate(self):
        _check_bytes(self.client_uuid, 16, "client_uuid")
        if not _EMAIL_RE.match(self.email):
            raise ValidationError("email", f"not an email address: {self.email!r}")

    def to_json(self):
        return {"client_uuid": self.client_uuid.hex(), "email": self.email, "password": self.password}

    @classmethod
    def from_json(cls, obj, path="$"):
        return cls(_hex(obj, "client_uuid", path, 16), _str(obj, "email", path), _str(obj, "password", path))


@dataclass(frozen=True)
class RegistrationResponse(Body):
    kind: ClassVar[str] = "registration_response"
    user_uuid: bytes
    status: str = "ACTIVATED"

    def validate(self):
        _check_bytes(self.user_uuid, 16, "user_uuid")
        if self.status != "ACTIVATED":
            raise ValidationError("status", f"status must be ACTIVATED, got {self.status!r}")

    def to_json(self):
        return {"user_uuid": self.user_uuid.hex(), "status": self.status}

    @classmethod
    def from_json(cls, obj, path="$"):
        return cls(_hex(obj, "user_uuid", path, 16), _str(obj, "status", path))


@dataclass(frozen=True)
class TileUuidRequest(Body):
    kind: ClassVar[str] = "tile_uuid_request"
    tile_uuid: bytes
    user_uuid: bytes
    tile_type: str = "PHONE"

    def validate(self):
        _check_bytes(self.tile_uuid, 16, "tile_uuid")
        _check_bytes(self.user_uuid, 16, "user_uuid")
        if self.tile_type != "PHONE":
            raise ValidationError("tile_type", "only PHONE tiles are generated this way")

    def to_json(self):
        return {"tile_uuid": self.tile_uuid.hex(), "user_uuid": self.user_uuid.hex(), "tile_type": self.tile_type}

    @classmethod
    def from_json(cls, obj, path="$"):
        return cls(_hex(obj, "tile_uuid", path, 16), _hex(obj, "user_uuid", path, 16), _str(obj, "tile_type", path))


def _check_phone_uuid(value: str, path: str) -> None:
    if not isinstance(value, str) or not value.startswith(PHONE_PREFIX):
        raise ValidationError(path, f"phone tile_uuid must start with {PHONE_PREFIX!r}")
    _hex_value(value[len(PHONE_PREFIX):], path, 16)


@dataclass(frozen=True)
class TileUuidResponse(Body):
    kind: ClassVar[str] = "tile_uuid_response"
    tile_uuid: str

    def validate(self):
        _check_phone_uuid(self.tile_uuid, "tile_uuid")

    def to_json(self):
        return {"tile_uuid": self.tile_uuid}

    @classmethod
    def from_json(cls, obj, path="$"):
        return cls(_str(obj, "tile_uuid", path))


@dataclass(frozen=True)
class ActivationRequest(Body):
    kind: ClassVar[str] = "activation_request"
    tile_uuid: bytes
    name: str
    rand_a: bytes
    rand_t: bytes
    sres_t: bytes
    hw_version: str
    model: str
    firmware_version: str

    def validate(self):
        _check_bytes(self.tile_uuid, 8, "tile_uuid")
        _check_bytes(self.rand_a, 14, "rand_a")
        _check_bytes(self.rand_t, 10, "rand_t")
        _check_bytes(self.sres_t, 4, "sres_t")
        TdiRecord(self.tile_uuid, self.model, self.firmware_version, self.hw_version).validate()

    def to_json(self):
        return {
            "tile_uuid": self.tile_uuid.hex(),
            "name": self.name,
            "rand_a": self.rand_a.hex(),
            "rand_t": self.rand_t.hex(),
            "sres_t": self.sres_t.hex(),
            "hw_version": self.hw_version,
            "model": self.model,
            "firmware_version": self.firmware_version,
        }

    @classmethod
    def from_json(cls, obj, path="$"):
        return cls(
            tile_uuid=_hex(obj, "tile_uuid", path, 8),
            name=_str(obj, "name", path),
            rand_a=_hex(obj, "rand_a", path, 14),
            rand_t=_hex(obj, "rand_t", path, 10),
            sres_t=_hex(obj, "sres_t", path, 4),
            hw_version=_str(obj, "hw_version", path),
            model=_str(obj, "model", path),
            firmware_version=_str(obj, "firmware_version", path),
        )


@dataclass(frozen=True)
class ActivationResponse(Body):
    kind: ClassVar[str] = "activation_response"
    tile_uuid: bytes
    auth_key: bytes

    def validate(self):
        _check_bytes(self.tile_uuid, 8, "tile_uuid")
        _check_bytes(self.auth_key, 16, "auth_key")

    def to_json(self):
        return {"tile_uuid": self.tile_uuid.hex(), "auth_key": self.auth_key.hex()}

    @classmethod
    def from_json(cls, obj, path="$"):
        return cls(_hex(obj, "tile_uuid", path, 8), _hex(obj, "auth_key", path, 16))


# -- location updates

_LOCATION_KEYS = ("altitude", "latitude", "longitude", "timestamp")


@dataclass(frozen=True)
class Location:
    altitude: float
    latitude: float
    longitude: float
    timestamp: int
    ext: dict = field(default_factory=dict)

    def validate(self, path="location"):
        for name in ("altitude", "latitude", "longitude"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValidationError(f"{path}.{name}", "must be a finite number")
        if not -90.0 <= self.latitude <= 90.0:
            raise ValidationError(f"{path}.latitude", f"{self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValidationError(f"{path}.longitude", f"{self.longitude} outside [-180, 180]")
        if isinstance(self.timestamp, bool) or not isinstance(self.timestamp, int):
            raise ValidationError(f"{path}.timestamp", "must be an integer (ms)")
        _check_ext(self.ext, _LOCATION_KEYS, path)

    def to_json(self):
        out = {
            "altitude": float(self.altitude),
            "latitude": float(self.latitude),
            "longitude": float(self.longitude),
            "timestamp": self.timestamp,
        }
        out.update(self.ext)
        return out

    @classmethod
    def from_json(cls, obj, path):
        return cls(
            altitude=_num(obj, "altitude", path),
            latitude=_num(obj, "latitude", path),
            longitude=_num(obj, "longitude", path),
            timestamp=_int(obj, "timestamp", path),
            ext=_ext(obj, _LOCATION_KEYS),
        )


@dataclass(frozen=True)
class ConnectedAuthData:
    """Owner-side entry: a fresh session triplet for a connected tag."""

    key: ClassVar[str] = "connected_auth_data"
    rand_a: bytes
    rand_t: bytes
    sres_t: bytes
    tile_uuid: bytes

    def validate(self, path):
        _check_bytes(self.rand_a, 14, f"{path}.rand_a")
        _check_bytes(self.rand_t, 10, f"{path}.rand_t")
        _check_bytes(self.sres_t, 4, f"{path}.sres_t")
        _check_bytes(self.tile_uuid, 8, f"{path}.tile_uuid")

    def to_json(self):
        return {
            "rand_a": self.rand_a.hex(),
            "rand_t": self.rand_t.hex(),
            "sres_t": self.sres_t.hex(),
            "tile_uuid": self.tile_uuid.hex(),
        }

    @classmethod
    def from_json(cls, obj, path):
        return cls(
            _hex(obj, "rand_a", path, 14),
            _hex(obj, "rand_t", path, 10),
            _hex(obj, "sres_t", path, 4),
            _hex(obj, "tile_uuid", path, 8),
        )


_ASD_KEYS = ("mac_address", "payload_service_data")


@dataclass(frozen=True)
class AdvertisedServiceData:
    """Finder-side entry: what was heard over the air, verbatim."""

    key: ClassVar[str] = "advertised_service_data"
    mac_address: bytes
    payload_service_data: bytes
    ext: dict = field(default_factory=dict)

    def validate(self, path):
        _check_bytes(self.mac_address, 6, f"{path}.mac_address")
        _check_bytes(self.payload_service_data, 8, f"{path}.payload_service_data")
        _check_ext(self.ext, _ASD_KEYS, path)

    def to_json(self):
        out = {"mac_address": mac_to_str(self.mac_address), "payload_service_data": self.payload_service_data.hex()}
        out.update(self.ext)
        return out

    @classmethod
    def from_json(cls, obj, path):
        return cls(
            _mac_field(obj, "mac_address", path),
            _hex(obj, "payload_service_data", path, 8),
            _ext(obj, _ASD_KEYS),
        )


@dataclass(frozen=True)
class ClientData:
    """The uploading phone's own entry, identifying it by its phone tile_uuid."""

    key: ClassVar[str] = "client_data"
    tile_uuid: str

    def validate(self, path):
        _check_phone_uuid(self.tile_uuid, f"{path}.tile_uuid")

    def to_json(self):
        return {"tile_uuid": self.tile_uuid}

    @classmethod
    def from_json(cls, obj, path):
        return cls(_str(obj, "tile_uuid", path))


_ENTRY_TYPES = {c.key: c for c in (ConnectedAuthData, AdvertisedServiceData, ClientData)}
_TILE_ENTRY_KEYS = ("discovery_timestamp", "record_id")


@dataclass(frozen=True)
class TileEntry:
    data: ConnectedAuthData | AdvertisedServiceData | ClientData
    discovery_timestamp: int
    record_id: int

    def validate(self, path):
        if not isinstance(self.data, tuple(_ENTRY_TYPES.values())):
            raise ValidationError(path, "unknown tile entry payload")
        self.data.validate(f"{path}.{self.data.key}")
        for name in _TILE_ENTRY_KEYS:
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise ValidationError(f"{path}.{name}", "must be an integer")

    def to_json(self):
        return {self.data.key: self.data.to_json(), "discovery_timestamp": self.discovery_timestamp,
                "record_id": self.record_id}

    @classmethod
    def from_json(cls, obj, path):
        if not isinstance(obj, dict):
            raise SchemaError(path, "expected object")
        kinds = [k for k in _ENTRY_TYPES if k in obj]
        if len(kinds) != 1:
            raise SchemaError(path, f"expected exactly one of {sorted(_ENTRY_TYPES)}")
        extra = set(obj) - {kinds[0], *_TILE_ENTRY_KEYS}
        if extra:
            raise SchemaError(path, f"unexpected fields {sorted(extra)}")
        sub = f"{path}.{kinds[0]}"
        data = _ENTRY_TYPES[kinds[0]].from_json(_obj(obj, kinds[0], path), sub)
        return cls(data, _int(obj, "discovery_timestamp", path), _int(obj, "record_id", path))


_UPDATE_KEYS = ("record_id", "location", "tiles")


@dataclass(frozen=True)
class Update:
    record_id: int
    location: Location
    tiles: tuple[TileEntry, ...]
    ext: dict = field(default_factory=dict)

    def validate(self, path):
        if isinstance(self.record_id, bool) or not isinstance(self.record_id, int):
            raise ValidationError(f"{path}.record_id", "must be an integer")
        self.location.validate(f"{path}.location")
        for i, entry in enumerate(self.tiles):
            entry.validate(f"{path}.tiles[{i}]")
        _check_ext(self.ext, _UPDATE_KEYS, path)

    def to_json(self):
        out = {"record_id": self.record_id, "location": self.location.to_json(),
               "tiles": [t.to_json() for t in self.tiles]}
        out.update(self.ext)
        return out

    @classmethod
    def from_json(cls, obj, path):
        tiles = _list(obj, "tiles", path)
        return cls(
            record_id=_int(obj, "record_id", path),
            location=Location.from_json(_obj(obj, "location", path), f"{path}.location"),
            tiles=tuple(TileEntry.from_json(t, f"{path}.tiles[{i}]") for i, t in enumerate(tiles)),
            ext=_ext(obj, _UPDATE_KEYS),
        )


@dataclass(frozen=True)
class LocationUpdate(Body):
    kind: ClassVar[str] = "location_update"
    updates: tuple[Update, ...] = ()

    def validate(self):
        for i, u in enumerate(self.updates):
            u.validate(f"$.updates[{i}]")

    def to_json(self):
        return {"updates": [u.to_json() for u in self.updates]}

    @classmethod
    def from_json(cls, obj, path="$"):
        items = _list(obj, "updates", path)
        return cls(tuple(Update.from_json(u, f"{path}.updates[{i}]") for i, u in enumerate(items)))


def _scans_to_json(scans):
    return [{"privateIds": [pid.hex() for pid in scan]} for scan in scans]


def _scans_from_json(obj, path):
    if not isinstance(obj, list):
        raise SchemaError(path, "expected array of scan passes")
    if len(obj) != SCAN_PASSES:
        raise SchemaError(path, f"expected exactly {SCAN_PASSES} scan passes, got {len(obj)}")
    scans = []
    for i, item in enumerate(obj):
        ids = _list(item, "privateIds", f"{path}[{i}]")
        scans.append(tuple(_hex_value(x, f"{path}[{i}].privateIds[{j}]", 8) for j, x in enumerate(ids)))
    return tuple(scans)


def _check_scans(scans):
    if len(scans) != SCAN_PASSES:
        raise ValidationError("$", f"expected exactly {SCAN_PASSES} scan passes, got {len(scans)}")
    for i, scan in enumerate(scans):
        for j, pid in enumerate(scan):
            _check_bytes(pid, 8, f"$[{i}].privateIds[{j}]")


@dataclass(frozen=True)
class ScanSecureRequest(Body):
    kind: ClassVar[str] = "scan_secure_request"
    scans: tuple[tuple[bytes, ...], ...]

    def validate(self):
        _check_scans(self.scans)

    def to_json(self):
        return _scans_to_json(self.scans)

    @classmethod
    def from_json(cls, obj, path="$"):
        return cls(_scans_from_json(obj, path))


@dataclass(frozen=True)
class ScanSecureResponse(Body):
    kind: ClassVar[str] = "scan_secure_response"
    scans: tuple[tuple[bytes, ...], ...]

    def validate(self):
        _check_scans(self.scans)

    def to_json(self):
        return _scans_to_json(self.scans)

    @classmethod
    def from_json(cls, obj, path="$"):
        return cls(_scans_from_json(obj, path))


_SHARING_KEYS = ("tileType", "tile_uuid", "user_uuid", "other_user_uuid", "other_user_email")


@dataclass(frozen=True)
class SharingResponse(Body):
    kind: ClassVar[str] = "sharing_response"
    tile_type: str
    tile_uuid: bytes
    user_uuid: bytes
    other_user_uuid: bytes
    other_user_email: str
    ext: dict = field(default_factory=dict)

    def validate(self):
        _check_bytes(self.tile_uuid, 8, "result.tile_uuid")
        _check_bytes(self.user_uuid, 16, "result.user_uuid")
        _check_bytes(self.other_user_uuid, 16, "result.other_user_uuid")
        _check_ext(self.ext, _SHARING_KEYS, "result")

    def to_json(self):
        result = {
            "tileType": self.tile_type,
            "tile_uuid": self.tile_uuid.hex(),
            "user_uuid": self.user_uuid.hex(),
            "other_user_uuid": self.other_user_uuid.hex(),
            "other_user_email": self.other_user_email,
        }
        result.update(self.ext)
        return {"result": result}

    @classmethod
    def from_json(cls, obj, path="$"):
        r = _obj(obj, "result", path)
        p = f"{path}.result"
        return cls(
            tile_type=_str(r, "tileType", p),
            tile_uuid=_hex(r, "tile_uuid", p, 8),
            user_uuid=_hex(r, "user_uuid", p, 16),
            other_user_uuid=_hex(r, "other_user_uuid", p, 16),
            other_user_email=_str(r, "other_user_email", p),
            ext=_ext(r, _SHARING_KEYS),
        )


_COMMUNITY_TOP = ("timestamp_ms", "result_code", "result")
_COMMUNITY_RESULT = (
    "timestamp",
    "center_latitude",
    "center_longitude",
    "center_radius",
    "tilers_around",
    "display_tilers_around",
    "display_tiles_found",
)


@dataclass(frozen=True)
class CommunityStatsResponse(Body):
    kind: ClassVar[str] = "community_stats_response"
    timestamp_ms: int
    timestamp: int
    center_latitude: float
    center_longitude: float
    tilers_around: int
    center_radius: float = COMMUNITY_RADIUS_MILES
    result_code: int = 0
    display_tilers_around: bool = True
    display_tiles_found: bool = False
    ext: dict = field(default_factory=dict)
    result_ext: dict = field(default_factory=dict)

    def validate(self):
        if self.center_radius != COMMUNITY_RADIUS_MILES:
            raise ValidationError("$.result.center_radius", "radius is fixed at 5.0")
        if isinstance(self.tilers_around, bool) or not isinstance(self.tilers_around, int) or self.tilers_around < 0:
            raise ValidationError("$.result.tilers_around", "must be a non-negative integer")
        Location(0.0, self.center_latitude, self.center_longitude, 0).validate("$.result.center")
        _check_ext(self.ext, _COMMUNITY_TOP, "$")
        _check_ext(self.result_ext, _COMMUNITY_RESULT, "$.result")

    def to_json(self):
        result = {
            "timestamp": self.timestamp,
            "center_latitude": float(self.center_latitude),
            "center_longitude": float(self.center_longitude),
            "center_radius": float(self.center_radius),
            "tilers_around": self.tilers_around,
            "display_tilers_around": self.display_tilers_around,
            "display_tiles_found": self.display_tiles_found,
        }
        result.update(self.result_ext)
        # elided keys precede timestamp_ms in the captured body
        out = dict(self.ext)
        out.update({"timestamp_ms": self.timestamp_ms, "result_code": self.result_code, "result": result})
        return out

    @classmethod
    def from_json(cls, obj, path="$"):
        r = _obj(obj, "result", path)
        p = f"{path}.result"
        return cls(
            timestamp_ms=_int(obj, "timestamp_ms", path),
            result_code=_int(obj, "result_code", path),
            timestamp=_int(r, "timestamp", p),
            center_latitude=_num(r, "center_latitude", p),
            center_longitude=_num(r, "center_longitude", p),
            center_radius=_num(r, "center_radius", p),
            tilers_around=_int(r, "tilers_around", p),
            display_tilers_around=_bool(r, "display_tilers_around", p),
            display_tiles_found=_bool(r, "display_tiles_found", p),
            ext=_ext(obj, _COMMUNITY_TOP),
            result_ext=_ext(r, _COMMUNITY_RESULT),
        )


@dataclass(frozen=True)
class DeletionResponse(Body):
    kind: ClassVar[str] = "deletion_response"
    http_status: int = 202

    def validate(self):
        if self.http_status != 202:
            raise ValidationError("$.http_status", "account deletion answers 202")

    def to_json(self):
        return {"http_status": self.http_status}

    @classmethod
    def from_json(cls, obj, path="$"):
        return cls(_int(obj, "http_status", path))


# -- bodies for endpoints whose payloads were not captured

@dataclass(frozen=True)
class TransferRequest(Body):
    kind: ClassVar[str] = "transfer_request"
    recipient_email: str

    def to_json(self):
        return {"recipient_email": self.recipient_email}

    @classmethod
    def from_json(cls, obj, path="$"):
        return cls(_str(obj, "recipient_email", path))


@dataclass(frozen=True)
class ShareRequest(Body):
    kind: ClassVar[str] = "share_request"
    tile_uuid: bytes
    email: str

    def validate(self):
        _check_bytes(self.tile_uuid, 8, "tile_uuid")

    def to_json(self):
        return {"tile_uuid": self.tile_uuid.hex(), "email": self.email}

    @classmethod
    def from_json(cls, obj, path="$"):
        return cls(_hex(obj, "tile_uuid", path, 8), _str(obj, "email", path))


@dataclass(frozen=True)
class AntiTheftRequest(Body):
    kind: ClassVar[str] = "anti_theft_request"
    verification_id: str
    document_type: str
    accepted_terms: bool = True

    def to_json(self):
        return {"verification_id": self.verification_id, "document_type": self.document_type,
                "accepted_terms": self.accepted_terms}

    @classmethod
    def from_json(cls, obj, path="$"):
        return cls(_str(obj, "verification_id", path), _str(obj, "document_type", path),
                   _bool(obj, "accepted_terms", path))


@dataclass(frozen=True)
class DeleteAccountRequest(Body):
    kind: ClassVar[str] = "delete_account_request"
    password: str

    def to_json(self):
        return {"password": self.password}

    @classmethod
    def from_json(cls, obj, path="$"):
        return cls(_str(obj, "password", path))


@dataclass(frozen=True)
class TileGrant:
    tile_uuid: bytes
    auth_key: bytes
    role: str
    activation_timestamp: int

    def to_json(self):
        return {"tile_uuid": self.tile_uuid.hex(), "auth_key": self.auth_key.hex(), "role": self.role,
                "activation_timestamp": self.activation_timestamp}


@dataclass(frozen=True)
class TileListResponse(Body):
    kind: ClassVar[str] = "tile_list_response"
    tiles: tuple[TileGrant, ...] = ()

    def validate(self):
        for i, t in enumerate(self.tiles):
            _check_bytes(t.tile_uuid, 8, f"$.tiles[{i}].tile_uuid")
            _check_bytes(t.auth_key, 16, f"$.tiles[{i}].auth_key")
            if t.role not in ("owner", "shared"):
                raise ValidationError(f"$.tiles[{i}].role", f"unknown role {t.role!r}")

    def to_json(self):
        return {"tiles": [t.to_json() for t in self.tiles]}

    @classmethod
    def from_json(cls, obj, path="$"):
        items = _list(obj, "tiles", path)
        out = []
        for i, t in enumerate(items):
            p = f"{path}.tiles[{i}]"
            out.append(TileGrant(_hex(t, "tile_uuid", p, 8), _hex(t, "auth_key", p, 16), _str(t, "role", p),
                                 _int(t, "activation_timestamp", p)))
        return cls(tuple(out))


@dataclass(frozen=True)
class HistoryResponse(Body):
    kind: ClassVar[str] = "history_response"
    tile_uuid: bytes
    locations: tuple[Location, ...] = ()

    def validate(self):
        _check_bytes(self.tile_uuid, 8, "$.tile_uuid")
        for i, loc in enumerate(self.locations):
            loc.validate(f"$.locations[{i}]")

    def to_json(self):
        return {"tile_uuid": self.tile_uuid.hex(), "locations": [loc.to_json() for loc in self.locations]}

    @classmethod
    def from_json(cls, obj, path="$"):
        items = _list(obj, "locations", path)
        return cls(
            _hex(obj, "tile_uuid", path, 8),
            tuple(Location.from_json(x, f"{path}.locations[{i}]") for i, x in enumerate(items)),
        )


@dataclass(frozen=True)
class Ack(Body):
    kind: ClassVar[str] = "ack"
    result_code: int = 0

    def to_json(self):
        return {"result_code": self.result_code}

    @classmethod
    def from_json(cls, obj, path="$"):
        return cls(_int(obj, "result_code", path))


@dataclass(frozen=True)
class ErrorBody(Body):
    kind: ClassVar[str] = "error"
    error: str
    message: str = ""

    def to_json(self):
        return {"error": self.error, "message": self.message}

    @classmethod
    def from_json(cls, obj, path="$"):
        return cls(_str(obj, "error", path), _str(obj, "message", path))


BODY_TYPES: dict[str, type[Body]] = {
    cls.kind: cls
    for cls in (
        RegistrationRequest,
        RegistrationResponse,
        TileUuidRequest,
        TileUuidResponse,
        ActivationRequest,
        ActivationResponse,
        LocationUpdate,
        ScanSecureRequest,
        ScanSecureResponse,
        SharingResponse,
        CommunityStatsResponse,
        DeletionResponse,
        TransferRequest,
        ShareRequest,
        AntiTheftRequest,
        DeleteAccountRequest,
        TileListResponse,
        HistoryResponse,
        Ack,
        ErrorBody,
    )
}


def dumps(obj: Any) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def encode(body: Body) -> str:
    """Serialize ``body`` to canonical JSON text, refusing invalid values."""
    try:
        body.validate()
    except WireError as exc:
        raise EncodeRefused(str(exc)) from exc
    except (TypeError, AttributeError) as exc:
        raise EncodeRefused(f"malformed {type(body).__name__}: {exc}") from exc
    return dumps(body.to_json())


def decode(text: str | bytes, expected: str | type[Body]) -> Body:
    """Parse ``text`` as the body type named by ``expected``.

    Raises SchemaError for malformed JSON or a wrong shape and ValidationError
    when the shape is right but a value breaks an invariant.
    """
    cls = expected if isinstance(expected, type) else BODY_TYPES.get(expected)
    if cls is None:
        raise KeyError(f"unknown body type {expected!r}")
    try:
        obj = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from None
    body = cls.from_json(obj, "$")
    body.validate()
    return body

