import json
import os
import signal
import socket
import subprocess
import sys
import urllib.request

import pytest

from tilesim import crypto, wire
from tilesim.cli import main

KEY = "00112233445566778899aabbccddeeff"
TID = "c21f3a9b7e450001"


def test_run_list(capsys):
    assert main(["run", "--list"]) == 0
    assert "antitheft-circumvention" in capsys.readouterr().out.split()


def test_run_bundled_scenario(tmp_path, capsys):
    out, snap, log = tmp_path / "r.json", tmp_path / "s.json", tmp_path / "e.jsonl"
    code = main(["run", "--scenario", "antitheft-circumvention", "--report-out", str(out),
                 "--snapshot-out", str(snap), "--log-out", str(log)])
    assert code == 0
    report = json.loads(out.read_text())
    assert report["verdicts"][0]["attack"] == "a8" and report["verdicts"][0]["status"] == "success"
    assert json.loads(snap.read_text())["tags"]
    assert len(log.read_text().splitlines()) > 5


def test_run_assertion_failure_exit_1(tmp_path, capsys):
    from tilesim.scenario import bundled_path

    obj = json.loads(bundled_path("replay-frame").read_text())
    obj["assertions"] = [{"attack": "a7", "status": "failure"}]
    path = tmp_path / "sc.json"
    path.write_text(json.dumps(obj))
    assert main(["run", "--scenario", str(path)]) == 1
    assert "assertion failed" in capsys.readouterr().err


def test_run_schema_error_exit_2(tmp_path, capsys):
    path = tmp_path / "sc.json"
    path.write_text(json.dumps({"version": 1, "name": "x", "seed": 0, "duration": 10, "actors": [],
                                "script": [{"t": 0, "actor": "nobody", "do": "sync"}]}))
    assert main(["run", "--scenario", str(path)]) == 2
    assert "undefined actor" in capsys.readouterr().err
    assert main(["run", "--scenario", "no-such-scenario"]) == 2


def test_attack_subcommand(capsys):
    assert main(["attack", "a8"]) == 0
    assert json.loads(capsys.readouterr().out)["status"] == "success"
    assert main(["attack", "a5", "--scenario", "revoked-sharer-fresh-key"]) == 1
    assert main(["attack", "a3", "--scenario", "derive-frame"]) == 2


def test_derive_single_and_time(capsys):
    assert main(["derive", "--auth-key", KEY, "--tile-id", TID, "--ctr", "0"]) == 0
    first = capsys.readouterr().out.strip()
    assert first == crypto.private_id_at(bytes.fromhex(KEY), bytes.fromhex(TID), 0, 0).hex()
    assert main(["derive", "--auth-key", KEY, "--tile-id", TID, "--activation", "100",
                 "--time", str(100 + crypto.CYCLE_S)]) == 0
    assert capsys.readouterr().out.strip() == first


def test_derive_all(capsys):
    assert main(["derive", "--auth-key", KEY, "--tile-id", TID, "--all"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == len(set(lines)) == 8640


@pytest.mark.parametrize("argv", [
    ["derive", "--auth-key", "zz", "--tile-id", TID, "--ctr", "0"],
    ["derive", "--auth-key", KEY[:-2], "--tile-id", TID, "--ctr", "0"],
    ["derive", "--auth-key", KEY, "--tile-id", TID],
])
def test_derive_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_derive_counter_out_of_range(capsys):
    assert main(["derive", "--auth-key", KEY, "--tile-id", TID, "--ctr", "8640"]) == 2


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def _wait_listening(proc):
    line = proc.stdout.readline()
    assert line.startswith("listening on"), line
    return line.split()[-1]


def test_serve_subprocess_roundtrip(tmp_path):
    port = _free_port()
    snap = tmp_path / "snap.json"
    env = {**os.environ, "PYTHONUNBUFFERED": "1"}
    proc = subprocess.Popen(
        [sys.executable, "-m", "tilesim", "serve", "--port", str(port), "--snapshot-out", str(snap)],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True, env=env,
    )
    try:
        url = _wait_listening(proc)
        body = wire.encode(wire.RegistrationRequest(bytes(16), "a@example.com", "pw")).encode()
        req = urllib.request.Request(url + "/api/v1/users", data=body, method="POST",
                                     headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(req, timeout=5) as resp:
            assert json.loads(resp.read())["status"] == "ACTIVATED"

        busy = subprocess.run([sys.executable, "-m", "tilesim", "serve", "--port", str(port)],
                              capture_output=True, text=True, timeout=30)
        assert busy.returncode == 1 and "cannot listen" in busy.stderr
    finally:
        proc.send_signal(signal.SIGTERM)
        proc.wait(timeout=10)
    assert proc.returncode == 0
    assert len(json.loads(snap.read_text())["users"]) == 1


def test_serve_resumes_from_snapshot(tmp_path):
    from tilesim.server import TileServer

    server = TileServer()
    server.create_user(wire.RegistrationRequest(bytes(16), "old@example.com", "pw"))
    snap = tmp_path / "in.json"
    server.save(snap)
    port = _free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "tilesim", "serve", "--port", str(port), "--snapshot-in", str(snap)],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True, env={**os.environ, "PYTHONUNBUFFERED": "1"},
    )
    try:
        url = _wait_listening(proc)
        body = wire.encode(wire.RegistrationRequest(bytes(16), "old@example.com", "pw")).encode()
        req = urllib.request.Request(url + "/api/v1/users", data=body, method="POST")
        with pytest.raises(urllib.error.HTTPError) as exc:
            urllib.request.urlopen(req, timeout=5)
        assert exc.value.code == 409
    finally:
        proc.send_signal(signal.SIGTERM)
        proc.wait(timeout=10)
