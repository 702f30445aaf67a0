from importlib import resources

import pytest

from tracer_token import analysis, fixtures
from tracer_token.sim import (
    Scenario,
    ScenarioError,
    Transcript,
    TranscriptIntegrityError,
    dump_scenario,
    load_scenario,
    run,
)

SCENARIOS = resources.files("tracer_token") / "scenarios"


def notified_ids(tr):
    return {n["token"] for n in tr.of("notification")}


def test_two_token_contact_notifies_receiver():
    tr = run(fixtures.two_token_contact())
    assert notified_ids(tr) == {"b"}
    assert analysis.predicted_notifications(tr) == analysis.notified(tr)
    (n,) = tr.of("notification")
    assert n["source"] == "a" and n["disease"] == "COVID-19"


def test_far_apart_no_contact():
    tr = run(fixtures.two_token_contact(distance=10.0))
    assert tr.of("contact") == [] and notified_ids(tr) == set()


def test_cross_salt_never_notified():
    tr = run(fixtures.two_token_contact(salts=("COVID-19", "influenza")))
    assert tr.of("observation")  # radio contact still happens
    assert notified_ids(tr) == set() and tr.of("match") == []
    assert analysis.predicted_notifications(tr) == set()


@pytest.mark.parametrize("seed", [21, 22, 23, 24])
def test_oracle_matches_simulation_on_crowds(seed):
    sc = fixtures.crowd(seed, n_tokens=16, salts=("COVID-19", "influenza"),
                        servers={"topology": "tree", "fanout": 2, "depth": 2})
    tr = run(sc)
    assert analysis.predicted_notifications(tr) == analysis.notified(tr)


def test_swap_scenario():
    tr = run(fixtures.swap())
    assert "c" in notified_ids(tr)
    assert "b" not in notified_ids(tr)
    assert not [m for m in tr.of("match") if m["token"] == "b"]


def test_tree_reach_all_groups_notified():
    sc = fixtures.tree_reach(fanout=2, depth=2, per_leaf=2)
    tr = run(sc)
    members = {t.id for t in sc.tokens} - {"patient"}
    assert notified_ids(tr) == members


def test_determinism_and_seed_sensitivity():
    sc = fixtures.crowd(7, n_tokens=10)
    assert run(sc).dumps() == run(sc).dumps()
    assert run(sc).dumps() != run(sc.with_seed(8)).dumps()


def test_loss_only_removes_observations():
    base = fixtures.crowd(5, n_tokens=12)
    raw = base.to_dict()
    seen = []
    for loss in (0.0, 0.3, 0.7, 1.0):
        tr = run(Scenario.from_dict({**raw, "packet_loss": loss}))
        seen.append({(o["emitter"], o["receiver"], o["interval"]) for o in tr.of("observation")})
        assert {(c["emitter"], c["receiver"]) for c in tr.of("contact")} == \
            {(c["emitter"], c["receiver"]) for c in run(base).of("contact")}
    assert all(b <= a for a, b in zip(seen, seen[1:]))
    assert seen[-1] == set()


def test_observation_basis_oracle_under_loss():
    sc = fixtures.crowd(6, n_tokens=14, loss=0.5)
    tr = run(sc)
    assert analysis.predicted_notifications(tr, basis="observation") == analysis.notified(tr)


def test_latency_single_server():
    tr = run(fixtures.two_token_contact())
    lat = analysis.notification_latency(tr)
    assert lat["seconds"] == {0: 1} and lat["cycles"] == {1: 1} and lat["never"] == 0


def test_latency_grows_with_hops():
    raw = {
        "seed": 2, "duration": 600,
        "servers": {"topology": "line", "n": 3},
        "tokens": [
            {"id": "p", "path": [[0, 0.0, 0.0]], "server": 0},
            {"id": "near", "path": [[0, 1.0, 0.0]], "server": 0},
            {"id": "far", "path": [[0, -1.0, 0.0]], "server": 2},
        ],
        "events": [{"token": "p", "time": 590}],
    }
    tr = run(Scenario.from_dict(raw))
    by_token = {n["token"]: n for n in tr.of("notification")}
    assert by_token["near"]["latency_seconds"] == 10
    assert by_token["far"]["latency_seconds"] == 10 + 60
    assert by_token["far"]["latency_steps"] == by_token["near"]["latency_steps"] + 1
    assert analysis.predicted_notifications(tr) == analysis.notified(tr)


def test_partition_counts_never():
    tr = run(load_scenario(SCENARIOS / "partition.yaml"))
    lat = analysis.notification_latency(tr)
    assert lat["never"] == 1 and lat["never_tokens"] == ["c"]
    assert notified_ids(tr) == {"b"}


@pytest.mark.parametrize("name", ["two_token.yaml", "partition.yaml", "crowd.yaml", "tree_reach.yaml"])
def test_shipped_scenarios_load_and_round_trip(name):
    sc = load_scenario(SCENARIOS / name)
    assert Scenario.from_dict(__import__("yaml").safe_load(dump_scenario(sc))) == sc


@pytest.mark.parametrize("patch, field", [
    ({"duration": -5}, "duration"),
    ({"packet_loss": 1.5}, "packet_loss"),
    ({"radius": "far"}, "radius"),
    ({"colour": "red"}, "colour"),
    ({"servers": {"topology": "ring"}}, "servers.topology"),
    ({"events": [{"token": "zz", "time": 5}]}, "events[0].token"),
    ({"events": [{"token": "a", "time": 99999}]}, "events[0].time"),
    ({"salts": {"flu": "xyz"}}, "salts.flu"),
])
def test_validation_names_field(patch, field):
    raw = {**fixtures.two_token_contact().to_dict(), **patch}
    with pytest.raises(ScenarioError) as exc:
        Scenario.from_dict(raw)
    assert field in [f for f, _ in exc.value.errors]


def test_validation_token_fields():
    raw = fixtures.two_token_contact().to_dict()
    raw["tokens"][1] = {"id": "a", "path": [[0, 1]], "server": 4}
    with pytest.raises(ScenarioError) as exc:
        Scenario.from_dict(raw)
    fields = {f for f, _ in exc.value.errors}
    assert {"tokens[1].id", "tokens[1].server", "tokens[1].path[0]"} <= fields


def test_transcript_round_trip_and_integrity():
    tr = run(fixtures.two_token_contact(duration=600))
    text = tr.dumps()
    assert Transcript.loads(text).records == tr.records
    lines = text.splitlines(keepends=True)
    with pytest.raises(TranscriptIntegrityError):
        Transcript.loads("".join(lines[:-1]))  # footer cut off
    with pytest.raises(TranscriptIntegrityError):
        Transcript.loads(text[:-7])
    tampered = text.replace('"kind":"contact"', '"kind":"contacT"', 1)
    with pytest.raises(TranscriptIntegrityError):
        Transcript.loads(tampered)
    with pytest.raises(TranscriptIntegrityError):
        Transcript.loads("")
