"""Tile Mate 2022 emulator.

A tag starts unactivated, advertising the FEEC service with no payload. After
the activation handshake it advertises FEED with a privateId that rotates every
15 minutes, always from the same hardware MAC address. Owners talk to an
activated tag over a MAC-authenticated channel.
"""

from __future__ import annotations

import hmac
import hashlib
from dataclasses import dataclass

from . import crypto
from .medium import Placement, Position, World, random_bytes
from .wire import FEEC, FEED, Advertisement, TdiRecord

TDI_SERVICE_UUID = "180A"
TILE_ID_CHAR_UUID = "9d410007-35d6-f4dd-ba60-e7bd8dc491c0"
MODEL_CHAR_UUID = "00002a24-0000-1000-8000-00805f9b34fb"
FIRMWARE_CHAR_UUID = "00002a26-0000-1000-8000-00805f9b34fb"
HW_VERSION_CHAR_UUID = "00002a27-0000-1000-8000-00805f9b34fb"
MEP_TOA_CMD_UUID = "9d410018-35d6-f4dd-ba60-e7bd8dc491c0"
MEP_TOA_RSP_UUID = "9d410019-35d6-f4dd-ba60-e7bd8dc491c0"
SONG_CHAR_UUID = "9d410002-35d6-f4dd-ba60-e7bd8dc491c0"
REVERSE_RING_CHAR_UUID = "9d410000-35d6-f4dd-ba60-e7bd8dc491c0"

FEATURES = ("ring", "reverse_ring")

# Command opcodes on MEP_TOA_CMD beyond the fixed authentication message.
CMD_RING = bytes([0x02, 0x01])
CMD_REKEY = 0x30


class TagError(Exception):
    pass


class StateError(TagError):
    pass


class ActivationRefused(TagError):
    pass


class AuthReject(TagError):
    pass


class ReplayReject(TagError):
    pass


@dataclass
class Unactivated:
    interim_auth_key: bytes


@dataclass
class Activated:
    auth_key: bytes
    seed: bytes
    activation_time: float


@dataclass
class Channel:
    tag_key: bytes
    rand_a: bytes
    last_ctr_a: int = -1
    ctr_b: int = 0
    authenticated: bool = False


class Tag:
    def __init__(
        self,
        world: World,
        name: str,
        interim_auth_key: bytes,
        mac: bytes | None = None,
        model: str = "TILE 24.00",
        firmware: str = "48.04.16.0",
        hardware_version: str = "24.00",
        position: Position | None = None,
        randomized_mac: bool = False,
        ctr_check: bool = True,
        accept_rekey: bool = False,
    ):
        self.world = world
        self.name = name
        self.rng = world.rng_for(f"tag/{name}")
        # locally administered unicast address
        self.mac = mac if mac is not None else bytes([0xC2]) + random_bytes(self.rng, 5)
        self.tile_id = crypto.tile_id_from_mac(self.mac)
        self.tdi = TdiRecord(self.tile_id, model, firmware, hardware_version)
        self.tdi.validate()
        self.phase: Unactivated | Activated = Unactivated(crypto.require_len("interimAuthKey", interim_auth_key, 16))
        self.channel: Channel | None = None
        self.placement = Placement(position)
        self.randomized_mac = randomized_mac
        self.ctr_check = ctr_check
        self.accept_rekey = accept_rekey
        self._mac_secret = random_bytes(self.rng, 16)
        self._pending_sres: bytes | None = None

    # -- placement

    @property
    def position(self) -> Position:
        return self.placement.position

    @position.setter
    def position(self, value: Position) -> None:
        self.placement.position = value

    def attach(self, carrier) -> None:
        self.placement.attach(carrier)

    @property
    def activated(self) -> bool:
        return isinstance(self.phase, Activated)

    def _emit(self, event: str, payload: dict | None = None) -> None:
        self.world.emit(self.name, event, payload)

    # -- advertising

    def current_mac(self, now: float) -> bytes:
        if not self.randomized_mac:
            return self.mac
        slot = int(now // crypto.ROTATION_PERIOD_S)
        rotated = hmac.digest(self._mac_secret, slot.to_bytes(8, "little"), hashlib.sha256)[:6]
        return bytes([rotated[0] | 0xC0]) + rotated[1:]

    def current_private_id(self, now: float) -> bytes:
        if not isinstance(self.phase, Activated):
            raise StateError("tag is not activated")
        ctr = crypto.counter_at(self.phase.activation_time, now)
        return crypto.private_id(self.phase.seed, ctr)

    def advertise(self, now: float | None = None) -> Advertisement:
        now = self.world.now if now is None else now
        if isinstance(self.phase, Unactivated):
            return Advertisement(self.current_mac(now), FEEC, None, now)
        return Advertisement(self.current_mac(now), FEED, self.current_private_id(now), now)

    # -- device information

    def read_tdi(self) -> dict[str, bytes | str]:
        return {
            TILE_ID_CHAR_UUID: self.tdi.tile_id,
            MODEL_CHAR_UUID: self.tdi.model,
            FIRMWARE_CHAR_UUID: self.tdi.firmware,
            HW_VERSION_CHAR_UUID: self.tdi.hardware_version,
        }

    # -- activation and authentication

    def auth_challenge(self, rand_a: bytes) -> tuple[bytes, bytes]:
        """Answer an owner's randA with (randT, sresT)."""
        rand_t = random_bytes(self.rng, crypto.RAND_T_LEN)
        if isinstance(self.phase, Unactivated):
            sres_t = crypto.derive_sres_activation(self.phase.interim_auth_key, rand_a, rand_t, self.tile_id)
            self._pending_sres = sres_t
            mode = "activation"
        else:
            sres_t = crypto.derive_sres_session(self.phase.auth_key, rand_a, rand_t)
            mode = "session"
        self._emit("tag_auth_response", {"mode": mode, "rand_t": rand_t.hex(), "sres_t": sres_t.hex()})
        return rand_t, sres_t

    def complete_activation(self, sres_t: bytes) -> None:
        if isinstance(self.phase, Activated):
            raise StateError("tag is already activated")
        if self._pending_sres is None or not hmac.compare_digest(self._pending_sres, bytes(sres_t)):
            raise ActivationRefused("sresT does not match the last activation challenge")
        auth_key = crypto.derive_auth_key(self.phase.interim_auth_key, sres_t)
        self.phase = Activated(auth_key, crypto.derive_private_id_seed(auth_key, self.tile_id), self.world.now)
        self._pending_sres = None
        self._emit("tag_activated", {"tile_id": self.tile_id.hex()})

    def open_channel(self, channel_prefix: bytes, channel_data: bytes, toa_token: bytes, rand_a: bytes) -> None:
        if not isinstance(self.phase, Activated):
            raise StateError("cannot open a channel on an unactivated tag")
        tag_key = crypto.derive_tag_key(self.phase.auth_key, rand_a, channel_data, channel_prefix, toa_token)
        self.channel = Channel(tag_key=tag_key, rand_a=rand_a, ctr_b=self.rng.randrange(1 << 16))
        self._emit("channel_open", {"toa_token": toa_token.hex()})

    def close_channel(self) -> None:
        self.channel = None

    def receive_owner_message(self, msg: bytes, ctr_a: int, mac: bytes) -> dict:
        """Verify and act on an owner command; raise AuthReject/ReplayReject on failure."""
        if self.channel is None:
            raise StateError("no open channel")
        ch = self.channel
        if not crypto.verify_mac(ch.tag_key, ctr_a, msg, mac):
            self._emit("owner_message_rejected", {"reason": "auth", "ctr_a": ctr_a})
            raise AuthReject("MAC does not verify under the channel key")
        if self.ctr_check and ctr_a <= ch.last_ctr_a:
            self._emit("owner_message_rejected", {"reason": "replay", "ctr_a": ctr_a})
            raise ReplayReject(f"ctrA {ctr_a} not above last accepted {ch.last_ctr_a}")
        ch.last_ctr_a = max(ch.last_ctr_a, ctr_a)
        msg = bytes(msg)
        if msg == crypto.AUTH_MESSAGE:
            ch.authenticated = True
            self._emit("owner_authenticated", {"ctr_a": ctr_a, "ctr_b": ch.ctr_b})
            return {"features": list(FEATURES), "ctr_b": ch.ctr_b}
        if not ch.authenticated:
            raise StateError("owner has not authenticated on this channel")
        ch.ctr_b += 1
        if msg == CMD_RING:
            return self.ring()
        if msg and msg[0] == CMD_REKEY and len(msg) == 1 + crypto.KEY_LEN:
            if not self.accept_rekey:
                raise StateError("rekeying is not supported by this firmware")
            return self._rekey(msg[1:])
        raise StateError(f"unknown command {msg.hex()}")

    def _rekey(self, new_key: bytes) -> dict:
        self.phase = Activated(new_key, crypto.derive_private_id_seed(new_key, self.tile_id), self.world.now)
        self.channel = None
        self._emit("tag_rekeyed", {})
        return {"rekeyed": True, "activation_time": self.world.now}

    # -- features

    def ring(self) -> dict:
        if self.channel is None or not self.channel.authenticated:
            raise StateError("ringing needs an authenticated channel")
        event = {"characteristic": SONG_CHAR_UUID}
        self._emit("ring", event)
        return event

    def reverse_ring(self) -> dict:
        if not isinstance(self.phase, Activated):
            raise StateError("reverse ring needs an activated tag")
        event = {"characteristic": REVERSE_RING_CHAR_UUID}
        self._emit("reverse_ring", event)
        return event
