"""Regenerate the bundled scenario files under src/tilesim/scenarios/.

Run from the repository root: ``python3 tools/make_scenarios.py``.
"""

import json
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "src" / "tilesim" / "scenarios"
DAY = 86400
MILE = 1609.344


def scenario(name, seed, duration, actors, script=(), attacks=(), assertions=(), toggles=None):
    out = {"version": 1, "name": name, "seed": seed, "duration": duration}
    if toggles:
        out["toggles"] = toggles
    out.update(actors=list(actors), script=list(script), attacks=list(attacks), assertions=list(assertions))
    return out


def phone(name, position, **kw):
    return {"name": name, "kind": "phone", "position": list(position), **kw}


def tag(name, position=None, carrier=None):
    out = {"name": name, "kind": "tag"}
    if position is not None:
        out["position"] = list(position)
    if carrier is not None:
        out["carrier"] = carrier
    return out


def step(t, actor, do, **kw):
    return {"t": t, "actor": actor, "do": do, **kw}


def expect(attack, status="success"):
    return {"attack": attack, "status": status}


def surveillance_day():
    places = [[0, 0], [2000, 500], [-1500, 3000], [4000, -2500], [800, 6000], [-3000, -1000]]
    owners = {"o1": [0, 1, 2, 1, 3, 4, 0, 5, 2, 1, 0, 3], "o2": [1, 2, 3, 4, 5, 0, 1, 2, 3, 4, 5, 1],
              "o3": [2, 3, 4, 5, 0, 1, 2, 3, 4, 5, 0, 2]}
    follows = {"f1": ["o1"] * 12, "f2": ["o2"] * 6 + ["o3"] * 6}
    actors, script = [], []
    for o, route in owners.items():
        actors.append(phone(o, places[route[0]], report_interval=60, finder_interval=60))
        actors.append(tag(f"tag-{o}", places[route[0]]))
        script += [step(0, o, "activate", tag=f"tag-{o}"), step(0, o, "carry", tag=f"tag-{o}")]
        script += [step(k * 7200, o, "move", to=places[p]) for k, p in enumerate(route) if k]
    for f, route in follows.items():
        actors.append(phone(f, places[owners[route[0]][0]], finder_interval=60))
        script += [step(k * 7200, f, "move", to=places[owners[o][k]]) for k, o in enumerate(route) if k]
    script.sort(key=lambda s: s["t"])
    return scenario("surveillance-day", 11, DAY, actors, script,
                    [{"id": "a1", "cadence": 60}], [expect("a1")])


def static_mac_week():
    places = [[0, 0], [3000, 0], [0, 3000], [3000, 3000], [-3000, 0]]
    actors, script = [], []
    for i in range(5):
        o = f"owner{i}"
        actors.append(phone(o, places[i], wander={"places": places, "every": 3 * 3600}))
        for j in range(2):
            t = f"tag{2 * i + j}"
            actors.append(tag(t, places[i]))
            script += [step(0, o, "activate", tag=t), step(0, o, "carry", tag=t)]
    for r in range(3):
        actors.append({"name": f"rx{r}", "kind": "receiver", "position": places[r], "interval": 900})
    return scenario("static-mac-week", 5, 7 * DAY, actors, script,
                    [{"id": "a3"}], [expect("a3"), {"attack": "a3", "evidence": "false_merges", "value": 0}])


def cycle_fingerprint(days, status):
    actors = [phone("owner", [0, 0])]
    script = []
    for i in range(5):
        actors.append(tag(f"tag{i}", [0, 0]))
        script.append(step(0, "owner", "activate", tag=f"tag{i}"))
    script.append(step(60, "owner", "move", to=[1000, 0]))
    actors.append({"name": "rx", "kind": "receiver", "position": [0, 0], "interval": DAY, "start": DAY / 2})
    return scenario(f"cycle-fingerprint-{days}d", 91, days * DAY, actors, script, [{"id": "a4"}],
                    [expect("a4", status)], toggles={"randomized_mac": True})


def revoked_sharer(control):
    places = [[0, 0], [2000, 0], [2000, 2000], [0, 2000]]
    actors = [
        phone("alice", places[0], wander={"places": places, "every": 1800, "start": 1800}),
        tag("tagA", places[0]),
        phone("mallory", [50, 0]),
        phone("bob", places[1], wander={"places": places, "every": 2700}),
        tag("tagB", places[1]),
    ]
    actors += [{"name": f"rx{i}", "kind": "receiver", "position": p, "interval": 900} for i, p in enumerate(places)]
    script = [
        step(0, "alice", "activate", tag="tagA"), step(0, "alice", "carry", tag="tagA"),
        step(0, "bob", "activate", tag="tagB"), step(0, "bob", "carry", tag="tagB"),
        step(60, "alice", "share", tag="tagA", **{"with": "mallory"}),
        step(120, "mallory", "sync"),
        step(600, "alice", "revoke_share", tag="tagA", **{"with": "mallory"}),
    ]
    attacks = [{"id": "a5", "attacker": "mallory", "tag": "tagA"}]
    if control:
        checks = [expect("a5", "failure"), {"attack": "a5", "evidence": "matches", "value": 0}]
        return scenario("revoked-sharer-fresh-key", 23, 2 * DAY, actors, script, attacks, checks,
                        toggles={"fresh_key_on_transfer": True})
    checks = [expect("a5"), {"attack": "a5", "evidence": "coverage", "value": 1.0}]
    return scenario("revoked-sharer-tracking", 23, 2 * DAY, actors, script, attacks, checks)


def derive_frame():
    actors = [
        phone("alice", [0, 0]), tag("tagA", [0, 0]),
        phone("mallory", [20, 0]),
        {"name": "mallory-radio", "kind": "broadcaster", "position": [5000, 0]},
        phone("bob", [4900, 0]),
    ]
    script = [
        step(0, "alice", "activate", tag="tagA"),
        step(60, "alice", "share", tag="tagA", **{"with": "mallory"}),
        step(120, "mallory", "sync"),
        step(600, "alice", "revoke_share", tag="tagA", **{"with": "mallory"}),
        step(900, "mallory-radio", "derive", tag="tagA", key_from="mallory"),
        step(1000, "bob", "scan_and_secure", path=[[4900, 0], [5100, 0]], label="victim"),
    ]
    return scenario("derive-frame", 3, 3600, actors, script,
                    [{"id": "a6", "attacker": "mallory", "tag": "tagA", "scan": "victim"}], [expect("a6")])


def replay_frame():
    actors = [
        phone("alice", [0, 0]), tag("tagA", [0, 0]),
        {"name": "eve-rx", "kind": "receiver", "position": [5, 0]},
        {"name": "eve-radio", "kind": "broadcaster", "position": [5000, 0]},
        phone("bob", [4900, 0]),
    ]
    script = [
        step(0, "alice", "activate", tag="tagA"), step(0, "alice", "carry", tag="tagA"),
        step(300, "eve-rx", "capture"),
        step(310, "eve-radio", "replay", **{"from": "eve-rx"}),
        step(320, "bob", "scan_and_secure", path=[[4900, 0], [5100, 0]], label="victim"),
    ]
    return scenario("replay-frame", 4, 3600, actors, script,
                    [{"id": "a7", "broadcaster": "eve-radio", "scan": "victim", "tag": "tagA"}], [expect("a7")])


def antitheft():
    actors = [phone("alice", [0, 0]), tag("tagA", [0, 0]), phone("bob", [-50, 0])]
    script = [
        step(0, "alice", "activate", tag="tagA"), step(0, "alice", "carry", tag="tagA"),
        step(10, "alice", "enable_anti_theft"),
        step(100, "bob", "scan_and_secure", path=[[-50, 0], [50, 0]], label="stock"),
        step(700, "bob", "scan_and_secure", path=[[-50, 0], [50, 0]], label="modified", modified_app=True),
    ]
    return scenario("antitheft-circumvention", 65, 3600, actors, script,
                    [{"id": "a8", "scanner": "bob", "tag": "tagA", "stock": "stock", "modified": "modified"}],
                    [expect("a8")])


def community_locate():
    half = 10 * MILE
    actors = [phone("alice", [3000.0, -4200.0]), tag("tagA", [3000.0, -4200.0])]
    script = [step(0, "alice", "activate", tag="tagA"), step(10, "alice", "report")]
    return scenario("community-locate", 2, 600, actors, script,
                    [{"id": "a2", "target": "alice", "area": [[-half, -half], [half, half]], "budget": 200}],
                    [expect("a2"), {"attack": "a2", "evidence": "queries", "op": "<=", "value": 200}])


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for sc in (
        surveillance_day(), static_mac_week(), cycle_fingerprint(91, "success"),
        cycle_fingerprint(89, "inconclusive"), revoked_sharer(False), revoked_sharer(True), derive_frame(),
        replay_frame(), antitheft(), community_locate(),
    ):
        (OUT / f"{sc['name']}.json").write_text(json.dumps(sc, indent=1) + "\n")
        print(sc["name"])


if __name__ == "__main__":
    main()
