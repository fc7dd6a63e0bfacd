import json

import pytest

from tilesim.scenario import (
    EXIT_ASSERTION,
    EXIT_OK,
    Scenario,
    ScenarioError,
    bundled_names,
    bundled_path,
    check_assertion,
    report_hash,
    run,
)
from tilesim.attacks import AttackVerdict


def minimal(**over):
    obj = {
        "version": 1, "name": "mini", "seed": 1, "duration": 600,
        "actors": [
            {"name": "alice", "kind": "phone", "position": [0, 0]},
            {"name": "tagA", "kind": "tag", "position": [0, 0]},
        ],
        "script": [{"t": 0, "actor": "alice", "do": "activate", "tag": "tagA"}],
    }
    obj.update(over)
    return obj


def test_bundled_scenarios_all_parse():
    names = bundled_names()
    assert len(names) >= 10 and "antitheft-circumvention" in names
    for name in names:
        Scenario.load(bundled_path(name))


@pytest.mark.parametrize(
    "mutate,where",
    [
        (lambda o: o.update(version=2), "$.version"),
        (lambda o: o.pop("seed"), "$.seed"),
        (lambda o: o["script"].append({"t": 1, "actor": "ghost", "do": "sync"}), "$.script[1].actor"),
        (lambda o: o["script"].append({"t": 1, "actor": "alice", "do": "fly"}), "$.script[1].do"),
        (lambda o: o["script"].append({"t": 900, "actor": "alice", "do": "sync"}), "$.script[1].t"),
        (lambda o: o["script"].append({"t": 1, "actor": "alice", "do": "share", "tag": "tagA"}), "$.script[1].with"),
        (lambda o: o["script"].append({"t": 1, "actor": "alice", "do": "activate", "tag": "alice"}),
         "$.script[1].tag"),
        (lambda o: o["actors"].append({"name": "alice", "kind": "phone"}), "$.actors[2].name"),
        (lambda o: o["actors"].append({"name": "x", "kind": "drone"}), "$.actors[2].kind"),
        (lambda o: o["actors"].append({"name": "t2", "kind": "tag", "carrier": "nobody"}), "carrier"),
        (lambda o: o.update(toggles={"warp_drive": True}), "$.toggles.warp_drive"),
        (lambda o: o.update(attacks=[{"id": "a9"}]), "$.attacks[0].id"),
        (lambda o: o.update(attacks=[{"id": "a5", "attacker": "alice"}]), "$.attacks[0].tag"),
        (lambda o: o.update(assertions=[{"attack": "a3", "status": "success"}]), "$.assertions[0].attack"),
        (lambda o: o["actors"][0].update(position=[0]), "$.actors[0].position"),
    ],
)
def test_schema_errors_name_the_offending_path(mutate, where):
    obj = minimal()
    mutate(obj)
    with pytest.raises(ScenarioError) as exc:
        Scenario.parse(obj)
    assert where in exc.value.path


def test_duplicate_scan_label_rejected():
    step = {"t": 1, "actor": "alice", "do": "scan_and_secure", "path": [[0, 0], [60, 0]], "label": "s"}
    with pytest.raises(ScenarioError):
        Scenario.parse(minimal(script=[step, {**step, "t": 2}]))


def test_invalid_json_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{")
    with pytest.raises(ScenarioError):
        Scenario.load(path)


def test_script_error_fails_the_run():
    obj = minimal(script=[{"t": 0, "actor": "alice", "do": "ring", "tag": "tagA"}])
    result = run(Scenario.parse(obj))
    assert result.exit_code == EXIT_ASSERTION
    assert result.report["script_errors"][0]["error"] == "ClientError"


def test_expected_error_is_not_a_script_error():
    obj = minimal(script=[{"t": 0, "actor": "alice", "do": "ring", "tag": "tagA", "expect_error": True}])
    result = run(Scenario.parse(obj))
    assert result.exit_code == EXIT_OK
    assert result.world.log.select("action_failed")


def test_failed_assertion_exit_code():
    obj = json.loads(bundled_path("antitheft-circumvention").read_text())
    obj["assertions"] = [{"attack": "a8", "status": "failure"}]
    result = run(Scenario.parse(obj))
    assert result.exit_code == EXIT_ASSERTION
    assert result.report["assertions"][0]["passed"] is False


@pytest.mark.parametrize("name", ["antitheft-circumvention", "derive-frame", "static-mac-week"])
def test_runs_are_deterministic(name):
    sc = Scenario.load(bundled_path(name))
    a, b = run(sc), run(sc)
    assert a.world.log.to_jsonl() == b.world.log.to_jsonl()
    assert a.report == b.report
    assert run(sc, seed=sc.seed + 1).report["event_log_sha256"] != a.report["event_log_sha256"]


def test_report_hash_covers_everything_but_itself():
    result = run(Scenario.load(bundled_path("replay-frame")))
    report = result.report
    assert report_hash(report) == report["report_hash"]
    assert set(report) == {"scenario", "seed", "toggles", "verdicts", "assertions", "script_errors",
                           "event_log_sha256", "report_hash"}
    assert report_hash({**report, "seed": 99}) != report["report_hash"]


def test_check_assertion_operators():
    verdicts = {"a3": AttackVerdict("a3", True, {"clusters": 4, "nested": {"n": 2}})}
    assert check_assertion({"attack": "a3", "evidence": "clusters", "op": ">=", "value": 4}, verdicts)["passed"]
    assert check_assertion({"attack": "a3", "evidence": "nested.n", "value": 2}, verdicts)["passed"]
    assert not check_assertion({"attack": "a3", "evidence": "missing", "value": 2}, verdicts)["passed"]
    assert not check_assertion({"attack": "a3", "evidence": "clusters", "op": "<", "value": "x"}, verdicts)["passed"]
    assert not check_assertion({"attack": "a3", "status": "failure"}, verdicts)["passed"]


def test_wander_and_periodic_behaviour():
    obj = minimal(duration=3600, actors=[
        {"name": "alice", "kind": "phone", "position": [0, 0], "report_interval": 600,
         "wander": {"places": [[0, 0], [500, 0]], "every": 900}},
        {"name": "tagA", "kind": "tag", "carrier": "alice"},
        {"name": "rx", "kind": "receiver", "position": [0, 0], "interval": 300},
    ])
    result = run(Scenario.parse(obj))
    runner = result.runner
    assert len(runner.trajectories["alice"]) == 1 + 4
    assert len(result.server.reports) == 7
    assert {e["event"] for e in result.world.log.select(actor="rx")} == {"capture"}
