"""Write golden wire fixtures under tests/fixtures/wire/.

Each body is spelled out by hand in the captured key order with plain dicts and
json.dumps, without importing tilesim, so the fixtures are an independent check
on the package's encoder. Keys standing in for elided ("...") fields are named
``x_*``.
"""

import json
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "wire"

TILE = "c21f3a9b7e450001"
MAC = "c2:1f:3a:9b:7e:45"
RAND_A = "a1" * 14
RAND_T = "b2" * 10
SRES = "5e12c0de"
PHONE = "p!" + "3c" * 16
USER = "0f" * 16
OTHER = "e0" * 16
TS = 1704070800000

FIXTURES = {
    "activation_request": {
        "tile_uuid": TILE,
        "name": "Mate",
        "rand_a": RAND_A,
        "rand_t": RAND_T,
        "sres_t": SRES,
        "hw_version": "24.00",
        "model": "TILE 24.00",
        "firmware_version": "48.04.16.0",
    },
    "location_update_owner": {"updates": [{
        "record_id": 7,
        "location": {"altitude": 0.0, "latitude": 33.7756, "longitude": -84.3963, "timestamp": TS,
                     "x_horizontal_accuracy": 4.5},
        "tiles": [
            {"connected_auth_data": {"rand_a": RAND_A, "rand_t": RAND_T, "sres_t": SRES, "tile_uuid": TILE},
             "discovery_timestamp": TS, "record_id": 8},
            {"client_data": {"tile_uuid": PHONE}, "discovery_timestamp": TS, "record_id": 9},
        ],
    }]},
    "location_update_finder": {"updates": [{
        "record_id": 11,
        "location": {"altitude": 12.5, "latitude": 33.78, "longitude": -84.39, "timestamp": TS},
        "tiles": [
            {"advertised_service_data": {"mac_address": MAC, "payload_service_data": "4f442e7573f35ea8",
                                         "x_rssi": -71},
             "discovery_timestamp": TS, "record_id": 12},
            {"client_data": {"tile_uuid": PHONE}, "discovery_timestamp": TS, "record_id": 13},
        ],
    }]},
    "scan_secure_request": [
        {"privateIds": ["4f442e7573f35ea8"]},
        {"privateIds": ["4f442e7573f35ea8", "0011223344556677"]},
        {"privateIds": []},
        {"privateIds": ["0011223344556677"]},
        {"privateIds": []},
        {"privateIds": ["8899aabbccddeeff"]},
    ],
    "sharing_response": {"result": {
        "tileType": "TILE",
        "tile_uuid": TILE,
        "user_uuid": USER,
        "other_user_uuid": OTHER,
        "other_user_email": "mallory@example.com",
        "x_share_id": 3,
    }},
    "community_stats_response": {
        "x_version": "1.0",
        "timestamp_ms": TS,
        "result_code": 0,
        "result": {
            "timestamp": TS,
            "center_latitude": 33.7756,
            "center_longitude": -84.3963,
            "center_radius": 5.0,
            "tilers_around": 3,
            "display_tilers_around": True,
            "display_tiles_found": False,
            "x_tiles_found": 0,
        },
    },
    "registration_response": {"user_uuid": USER, "status": "ACTIVATED"},
}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, obj in FIXTURES.items():
        (OUT / f"{name}.json").write_text(json.dumps(obj, separators=(",", ":")) + "\n")
        print(name)


if __name__ == "__main__":
    main()
