"""Key derivation, rolling identifiers and message authentication for Tile tags.

Every primitive here is HMAC-SHA256 with a particular key, message layout and
output slice. Byte layouts that are not pinned down by observation are kept as
module constants so they can be swapped without touching call sites.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass

KEY_LEN = 16
TILE_ID_LEN = 8
PRIVATE_ID_LEN = 8
SEED_LEN = 32
RAND_A_LEN = 14
RAND_T_LEN = 10
SRES_LEN = 4
TOA_TOKEN_LEN = 4
MAC_LEN = 4
MAC_ADDR_LEN = 6

ROTATION_PERIOD_S = 15 * 60
SCHEDULE_LEN = 8640
CYCLE_S = ROTATION_PERIOD_S * SCHEDULE_LEN  # 90 days

# Layout knobs for the unobserved parts of the derivations.
SRES_SLICE = slice(4, 8)
ACTIVATION_SRES_SLICE = SRES_SLICE
CTR_WIDTH = 4
CTR_BYTEORDER = "little"
CTRA_WIDTH = 2
MAC_SEED_MARKER = b"\x01"
CHANNEL_PREFIX_LEN = 1
CHANNEL_DATA_LEN = 2
TILE_ID_SUFFIX = b"\x00\x01"
IDENTITY_BYTES = "identity".encode("utf-8")
MAX_MSG_LEN = 255

AUTH_MESSAGE = bytes([0x12, 0x13])


class CryptoArgumentError(ValueError):
    """An input to a derivation has the wrong length or range."""


def _hmac(key: bytes, msg: bytes) -> bytes:
    return hmac.digest(key, msg, hashlib.sha256)


def require_len(name: str, value: bytes, length: int) -> bytes:
    if not isinstance(value, (bytes, bytearray)):
        raise CryptoArgumentError(f"{name} must be bytes, got {type(value).__name__}")
    if len(value) != length:
        raise CryptoArgumentError(f"{name} must be {length} bytes, got {len(value)}")
    return bytes(value)


def _pad(value: bytes, length: int) -> bytes:
    return value + b"\x00" * (length - len(value))


@dataclass(frozen=True)
class AuthTriplet:
    rand_a: bytes
    rand_t: bytes
    sres_t: bytes

    def __post_init__(self) -> None:
        require_len("randA", self.rand_a, RAND_A_LEN)
        require_len("randT", self.rand_t, RAND_T_LEN)
        require_len("sresT", self.sres_t, SRES_LEN)


def tile_id_from_mac(mac: bytes) -> bytes:
    """Static 8-byte tileId of a tag with hardware address ``mac``."""
    return require_len("mac", mac, MAC_ADDR_LEN) + TILE_ID_SUFFIX


def derive_sres_activation(key: bytes, rand_a: bytes, rand_t: bytes, tile_id: bytes) -> bytes:
    """Tag's activation response, computed under the vendor interimAuthKey."""
    msg = (
        require_len("randA", rand_a, RAND_A_LEN)
        + require_len("randT", rand_t, RAND_T_LEN)
        + require_len("tileId", tile_id, TILE_ID_LEN)
    )
    return _hmac(require_len("interimAuthKey", key, KEY_LEN), msg)[ACTIVATION_SRES_SLICE]


def derive_auth_key(key: bytes, sres_t: bytes) -> bytes:
    """Permanent authKey from the interimAuthKey and the activation sresT."""
    digest = _hmac(require_len("interimAuthKey", key, KEY_LEN), require_len("sresT", sres_t, SRES_LEN))
    return digest[:KEY_LEN]


def derive_sres_session(key: bytes, rand_a: bytes, rand_t: bytes) -> bytes:
    """Tag's post-activation response proving knowledge of the authKey."""
    seed = _pad(require_len("randA", rand_a, RAND_A_LEN), 16) + _pad(
        require_len("randT", rand_t, RAND_T_LEN), 16
    )
    return _hmac(require_len("authKey", key, KEY_LEN), seed)[SRES_SLICE]


def derive_private_id_seed(key: bytes, tile_id: bytes) -> bytes:
    msg = _pad(require_len("tileId", tile_id, TILE_ID_LEN) + IDENTITY_BYTES, SEED_LEN)
    return _hmac(require_len("authKey", key, KEY_LEN), msg)


def encode_ctr(ctr: int) -> bytes:
    return ctr.to_bytes(CTR_WIDTH, CTR_BYTEORDER)


def private_id(seed: bytes, ctr: int) -> bytes:
    if not 0 <= ctr < SCHEDULE_LEN:
        raise CryptoArgumentError(f"ctr must be in [0, {SCHEDULE_LEN - 1}], got {ctr}")
    return _hmac(require_len("seed", seed, SEED_LEN), encode_ctr(ctr))[:PRIVATE_ID_LEN]


def private_id_schedule(key: bytes, tile_id: bytes) -> list[bytes]:
    """All 8640 privateIds of a tag, indexed by counter."""
    seed = derive_private_id_seed(key, tile_id)
    keyed = hmac.new(seed, digestmod=hashlib.sha256)
    out = []
    for ctr in range(SCHEDULE_LEN):
        h = keyed.copy()
        h.update(encode_ctr(ctr))
        out.append(h.digest()[:PRIVATE_ID_LEN])
    return out


def counter_at(activation_time: float, now: float) -> int:
    if now < activation_time:
        raise CryptoArgumentError("now precedes activation_time")
    return int((now - activation_time) // ROTATION_PERIOD_S) % SCHEDULE_LEN


def private_id_at(key: bytes, tile_id: bytes, activation_time: float, now: float) -> bytes:
    """privateId a tag activated at ``activation_time`` broadcasts at ``now`` (seconds)."""
    ctr = counter_at(activation_time, now)
    return private_id(derive_private_id_seed(key, tile_id), ctr)


def derive_tag_key(
    key: bytes,
    rand_a: bytes,
    channel_data: bytes,
    channel_prefix: bytes,
    toa_token: bytes,
) -> bytes:
    seed = (
        require_len("randA", rand_a, RAND_A_LEN)
        + require_len("channelData", channel_data, CHANNEL_DATA_LEN)
        + require_len("channelPrefix", channel_prefix, CHANNEL_PREFIX_LEN)
        + require_len("toaToken", toa_token, TOA_TOKEN_LEN)
    )
    return _hmac(require_len("authKey", key, KEY_LEN), seed)[:KEY_LEN]


def mac_message(key: bytes, ctr_a: int, msg: bytes) -> bytes:
    """4-byte MAC over an owner-to-tag message at counter ``ctr_a``."""
    if not 0 <= ctr_a < 1 << (8 * CTRA_WIDTH):
        raise CryptoArgumentError(f"ctrA out of range: {ctr_a}")
    if len(msg) > MAX_MSG_LEN:
        raise CryptoArgumentError(f"message too long: {len(msg)} > {MAX_MSG_LEN}")
    seed = ctr_a.to_bytes(CTRA_WIDTH, "little") + MAC_SEED_MARKER + bytes([len(msg)]) + bytes(msg)
    return _hmac(require_len("tagKey", key, KEY_LEN), seed)[:MAC_LEN]


def verify_mac(key: bytes, ctr_a: int, msg: bytes, tag: bytes) -> bool:
    try:
        expected = mac_message(key, ctr_a, msg)
    except CryptoArgumentError:
        return False
    return hmac.compare_digest(expected, bytes(tag))


def verify_triplet(key: bytes, triplet: AuthTriplet, tile_id: bytes, mode: str) -> bool:
    """Recompute sresT under ``mode`` ("activation" or "session") and compare."""
    if mode == "activation":
        expected = derive_sres_activation(key, triplet.rand_a, triplet.rand_t, tile_id)
    elif mode == "session":
        expected = derive_sres_session(key, triplet.rand_a, triplet.rand_t)
    else:
        raise CryptoArgumentError(f"unknown triplet mode {mode!r}")
    return hmac.compare_digest(expected, triplet.sres_t)
