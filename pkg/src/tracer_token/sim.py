"""Deterministic proximity simulator standing in for the BLE radio.

Time advances over a merged schedule of beacon ticks, scripted diagnoses and
server sync cycles (one propagate step followed by every token fetching and
matching). Equal timestamps run beacons, then diagnoses, then syncs. After
``duration`` the sync grid keeps running until the server network is quiet so
late uploads still reach every connected token.

A diagnosed token hands its keys to the provider and is reinitialized, as if
returned to its owner reset.
"""

from __future__ import annotations

import bisect
import hashlib
import heapq
import json
import random
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable

import yaml

from . import geometry, server
from .authority import ProviderKeypair, build_diagnosis_key_set, sign
from .crypto import SubnetworkSalt, interval_number
from .token import ObservedPayload, TokenState

TRANSCRIPT_VERSION = 1

TOPOLOGIES = ("single", "line", "complete", "tree", "edges")


class ScenarioError(ValueError):
    """Scenario failed validation; ``errors`` lists ``(field, message)`` pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{f}: {m}" for f, m in errors))


class TranscriptIntegrityError(ValueError):
    pass


@dataclass(frozen=True)
class TokenSpec:
    id: str
    salt: str
    path: tuple[tuple[float, float, float], ...]  # (time, x, y) waypoints
    server: int = 0


@dataclass(frozen=True)
class ServerSpec:
    topology: str = "single"
    n: int = 1
    fanout: int = 0
    depth: int = 0
    edges: tuple[tuple[int, int], ...] = ()

    def node_ids(self) -> list[int]:
        if self.topology == "single":
            return [0]
        if self.topology == "tree":
            return list(range(sum(self.fanout ** k for k in range(self.depth + 1))))
        if self.topology == "edges":
            ids = {0} | {x for e in self.edges for x in e}
            return sorted(ids | set(range(self.n)))
        return list(range(self.n))

    def edge_list(self) -> list[tuple[int, int]]:
        if self.topology == "line":
            return [(i, i + 1) for i in range(self.n - 1)]
        if self.topology == "complete":
            return [(i, j) for i in range(self.n) for j in range(i + 1, self.n)]
        if self.topology == "tree":
            return server.tree_edges(self.fanout, self.depth)
        if self.topology == "edges":
            return [tuple(e) for e in self.edges]
        return []


ACTIONS = ("diagnose", "reinitialize")


@dataclass(frozen=True)
class Diagnosis:
    token: str
    time: int
    provider: str = "provider"
    action: str = "diagnose"  # "reinitialize" models the owner-change button


@dataclass(frozen=True)
class Scenario:
    seed: int
    duration: int
    tokens: tuple[TokenSpec, ...]
    servers: ServerSpec = ServerSpec()
    events: tuple[Diagnosis, ...] = ()
    beacon_interval: int = 5
    radius: float = 2.5
    packet_loss: float = 0.0
    sync_interval: int = 60
    salts: tuple[tuple[str, str], ...] = ()  # label -> salt hex overrides
    providers: tuple[str, ...] | None = None  # registered providers; default: all used

    def salt_for(self, label: str) -> SubnetworkSalt:
        overrides = dict(self.salts)
        if label in overrides:
            return SubnetworkSalt(label, bytes.fromhex(overrides[label]))
        return SubnetworkSalt.for_label(label)

    def registered_providers(self) -> tuple[str, ...]:
        if self.providers is not None:
            return self.providers
        return tuple(sorted({e.provider for e in self.events if e.action == "diagnose"}))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tokens"] = [
            {"id": t.id, "salt": t.salt, "server": t.server, "path": [list(w) for w in t.path]}
            for t in self.tokens
        ]
        d["servers"] = {k: v for k, v in asdict(self.servers).items()}
        d["servers"]["edges"] = [list(e) for e in self.servers.edges]
        d["events"] = [asdict(e) for e in self.events]
        d["salts"] = dict(self.salts)
        d["providers"] = list(self.providers) if self.providers is not None else None
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)

    @classmethod
    def from_dict(cls, raw: Any) -> "Scenario":
        return _parse(raw)


_FIELDS = {
    "seed", "duration", "tokens", "servers", "events", "beacon_interval",
    "radius", "packet_loss", "sync_interval", "salts", "providers",
}


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _parse(raw: Any) -> Scenario:
    errors: list[tuple[str, str]] = []
    if not isinstance(raw, dict):
        raise ScenarioError([("<root>", "scenario must be a mapping")])
    for key in sorted(set(raw) - _FIELDS):
        errors.append((key, "unknown field"))
    for key in ("seed", "duration", "tokens"):
        if key not in raw:
            errors.append((key, "required field missing"))

    seed = raw.get("seed", 0)
    if not _is_int(seed) or not 0 <= seed < 2 ** 64:
        errors.append(("seed", "must be an integer in [0, 2^64)"))
    duration = raw.get("duration", 0)
    if not _is_int(duration) or duration <= 0:
        errors.append(("duration", "must be a positive integer number of seconds"))
        duration = 0
    beacon = raw.get("beacon_interval", 5)
    if not _is_int(beacon) or beacon <= 0:
        errors.append(("beacon_interval", "must be a positive integer"))
    sync = raw.get("sync_interval", 60)
    if not _is_int(sync) or sync <= 0:
        errors.append(("sync_interval", "must be a positive integer"))
    radius = raw.get("radius", 2.5)
    if not _is_num(radius) or radius <= 0:
        errors.append(("radius", "must be a positive number of meters"))
    loss = raw.get("packet_loss", 0.0)
    if not _is_num(loss) or not 0.0 <= loss <= 1.0:
        errors.append(("packet_loss", "must be a probability in [0, 1]"))

    salts_raw = raw.get("salts") or {}
    salts: list[tuple[str, str]] = []
    if not isinstance(salts_raw, dict):
        errors.append(("salts", "must map labels to hex strings"))
    else:
        seen_bytes: dict[str, str] = {}
        for label, hx in sorted(salts_raw.items()):
            try:
                b = bytes.fromhex(str(hx))
            except ValueError:
                errors.append((f"salts.{label}", "not a hex string"))
                continue
            if len(b) > 32:
                errors.append((f"salts.{label}", "salt longer than 32 bytes"))
            if b.hex() in seen_bytes:
                errors.append((f"salts.{label}", f"same salt bytes as {seen_bytes[b.hex()]}"))
            seen_bytes[b.hex()] = label
            salts.append((str(label), b.hex()))

    servers = _parse_servers(raw.get("servers", {"topology": "single"}), errors)
    node_ids = set(servers.node_ids()) if servers else {0}

    tokens: list[TokenSpec] = []
    tokens_raw = raw.get("tokens", [])
    if not isinstance(tokens_raw, list) or (not tokens_raw and "tokens" in raw):
        errors.append(("tokens", "must be a non-empty list"))
        tokens_raw = []
    ids: set[str] = set()
    for k, t in enumerate(tokens_raw):
        where = f"tokens[{k}]"
        if not isinstance(t, dict):
            errors.append((where, "must be a mapping"))
            continue
        for key in sorted(set(t) - {"id", "salt", "path", "server"}):
            errors.append((f"{where}.{key}", "unknown field"))
        tid = t.get("id")
        if not isinstance(tid, (str, int)) or isinstance(tid, bool):
            errors.append((f"{where}.id", "required string id"))
            continue
        tid = str(tid)
        if tid in ids:
            errors.append((f"{where}.id", f"duplicate token id {tid!r}"))
        ids.add(tid)
        label = t.get("salt", "COVID-19")
        if not isinstance(label, str) or not label:
            errors.append((f"{where}.salt", "must be a disease label"))
            label = "COVID-19"
        srv = t.get("server", 0)
        if not _is_int(srv) or srv not in node_ids:
            errors.append((f"{where}.server", f"unknown server node {srv!r}"))
            srv = 0
        path = _parse_path(t.get("path"), f"{where}.path", errors)
        tokens.append(TokenSpec(tid, label, path, srv))

    events: list[Diagnosis] = []
    events_raw = raw.get("events") or []
    if not isinstance(events_raw, list):
        errors.append(("events", "must be a list"))
        events_raw = []
    for k, e in enumerate(events_raw):
        where = f"events[{k}]"
        if not isinstance(e, dict):
            errors.append((where, "must be a mapping"))
            continue
        for key in sorted(set(e) - {"token", "time", "provider", "action"}):
            errors.append((f"{where}.{key}", "unknown field"))
        tok, when, prov = e.get("token"), e.get("time"), e.get("provider", "provider")
        action = e.get("action", "diagnose")
        before = len(errors)
        if action not in ACTIONS:
            errors.append((f"{where}.action", f"must be one of {', '.join(ACTIONS)}"))
        if tok is None or str(tok) not in ids:
            errors.append((f"{where}.token", f"unknown token {tok!r}"))
        if not _is_int(when) or not 0 <= when <= duration:
            errors.append((f"{where}.time", "must be an integer within [0, duration]"))
        if not isinstance(prov, str) or not prov:
            errors.append((f"{where}.provider", "must be a provider name"))
        if len(errors) == before:
            events.append(Diagnosis(str(tok), when, prov, action))

    providers = raw.get("providers")
    if providers is not None:
        if not isinstance(providers, list) or not all(isinstance(p, str) for p in providers):
            errors.append(("providers", "must be a list of provider names"))
            providers = None
        else:
            providers = tuple(providers)

    if errors:
        raise ScenarioError(errors)
    return Scenario(
        seed=seed, duration=duration, tokens=tuple(tokens), servers=servers,
        events=tuple(sorted(events, key=lambda e: e.time)), beacon_interval=beacon,
        radius=float(radius), packet_loss=float(loss), sync_interval=sync,
        salts=tuple(salts), providers=providers,
    )


def _parse_servers(raw: Any, errors: list) -> ServerSpec:
    if not isinstance(raw, dict):
        errors.append(("servers", "must be a mapping"))
        return ServerSpec()
    for key in sorted(set(raw) - {"topology", "n", "fanout", "depth", "edges"}):
        errors.append((f"servers.{key}", "unknown field"))
    topo = raw.get("topology", "single")
    if topo not in TOPOLOGIES:
        errors.append(("servers.topology", f"must be one of {', '.join(TOPOLOGIES)}"))
        return ServerSpec()
    n, fanout, depth = raw.get("n", 1), raw.get("fanout", 0), raw.get("depth", 0)
    for name, v in (("n", n), ("fanout", fanout), ("depth", depth)):
        if not _is_int(v) or v < 0:
            errors.append((f"servers.{name}", "must be a non-negative integer"))
            return ServerSpec()
    if topo in ("line", "complete") and n < 1:
        errors.append(("servers.n", "must be at least 1"))
    if topo == "tree" and (fanout < 1 or depth < 0):
        errors.append(("servers.fanout", "tree needs fanout >= 1"))
    edges: list[tuple[int, int]] = []
    for k, e in enumerate(raw.get("edges") or []):
        if (not isinstance(e, (list, tuple)) or len(e) != 2
                or not all(_is_int(x) and x >= 0 for x in e)):
            errors.append((f"servers.edges[{k}]", "must be a pair of node ids"))
            continue
        edges.append((e[0], e[1]))
    return ServerSpec(topo, n, fanout, depth, tuple(edges))


def _parse_path(raw: Any, where: str, errors: list) -> tuple:
    if not isinstance(raw, list) or not raw:
        errors.append((where, "must be a non-empty list of [time, x, y] waypoints"))
        return ()
    out = []
    for k, w in enumerate(raw):
        if not isinstance(w, (list, tuple)) or len(w) != 3 or not all(_is_num(x) for x in w):
            errors.append((f"{where}[{k}]", "waypoint must be [time, x, y]"))
            return ()
        out.append((float(w[0]), float(w[1]), float(w[2])))
    if any(b[0] < a[0] for a, b in zip(out, out[1:])):
        errors.append((where, "waypoint times must be non-decreasing"))
    return tuple(out)


def load_scenario(path: str | Path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    return Scenario.from_dict(raw)


def dump_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.to_dict(), sort_keys=False, default_flow_style=None)


def _subseed(seed: int, *parts: object) -> int:
    h = hashlib.sha256(":".join([str(seed), *map(str, parts)]).encode())
    return int.from_bytes(h.digest()[:8], "big")


def provider_keypair(seed: int, name: str) -> ProviderKeypair:
    return ProviderKeypair.from_seed(f"{seed}:provider:{name}".encode())


class _Path:
    """Piecewise-constant position lookup."""

    def __init__(self, waypoints: Iterable[tuple[float, float, float]]):
        pts = list(waypoints)
        self.times = [w[0] for w in pts]
        self.xy = [(w[1], w[2]) for w in pts]

    def at(self, t: float) -> tuple[float, float]:
        k = bisect.bisect_right(self.times, t) - 1
        return self.xy[max(k, 0)]


@dataclass
class Transcript:
    records: list[dict] = field(default_factory=list)

    def add(self, t: float, kind: str, **payload) -> None:
        self.records.append({"t": t, "kind": kind, **payload})

    def of(self, kind: str) -> list[dict]:
        return [r for r in self.records if r["kind"] == kind]

    @property
    def header(self) -> dict:
        return self.records[0] if self.records and self.records[0]["kind"] == "header" else {}

    def lines(self) -> list[str]:
        body = [json.dumps(r, sort_keys=True, separators=(",", ":")) for r in self.records
                if r["kind"] != "end"]
        digest = hashlib.sha256("\n".join(body).encode()).hexdigest()
        end = {"t": self.records[-1]["t"] if self.records else 0, "kind": "end",
               "records": len(body), "sha256": digest}
        return body + [json.dumps(end, sort_keys=True, separators=(",", ":"))]

    def dumps(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "Transcript":
        if not text.endswith("\n"):
            raise TranscriptIntegrityError("transcript does not end with a newline (truncated?)")
        lines = text[:-1].split("\n") if text.strip() else []
        if not lines:
            raise TranscriptIntegrityError("empty transcript file")
        try:
            records = [json.loads(line) for line in lines]
        except json.JSONDecodeError as exc:
            raise TranscriptIntegrityError(f"unparseable record: {exc}") from exc
        end = records[-1]
        if end.get("kind") != "end":
            raise TranscriptIntegrityError("missing end record (truncated?)")
        body = lines[:-1]
        if end.get("records") != len(body):
            raise TranscriptIntegrityError("record count mismatch")
        if hashlib.sha256("\n".join(body).encode()).hexdigest() != end.get("sha256"):
            raise TranscriptIntegrityError("digest mismatch")
        return cls(records[:-1])

    @classmethod
    def load(cls, path: str | Path) -> "Transcript":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


BEACON, DIAGNOSE, SYNC = 0, 1, 2


def run(scenario: Scenario, max_drain_cycles: int = 10_000) -> Transcript:
    tr = Transcript()
    tr.add(0, "header", version=TRANSCRIPT_VERSION, config_hash=scenario.config_hash(),
           scenario=scenario.to_dict(), seed=scenario.seed)

    used = {e.provider for e in scenario.events if e.action == "diagnose"}
    providers = {p: provider_keypair(scenario.seed, p)
                 for p in sorted(set(scenario.registered_providers()) | used)}
    registry = [providers[p].public_key for p in scenario.registered_providers()]
    network = server.build_network(scenario.servers.edge_list(), scenario.servers.node_ids(), registry)
    specs = list(scenario.tokens)
    paths = [_Path(t.path) for t in specs]
    tokens = [
        TokenState.create(scenario.salt_for(t.salt), 0, rng=random.Random(_subseed(scenario.seed, "token", t.id)))
        for t in specs
    ]
    index = {t.id: k for k, t in enumerate(specs)}
    generation = [0] * len(specs)
    cursors = [0] * len(specs)
    loss_rng = random.Random(_subseed(scenario.seed, "loss"))
    uploads: dict[str, dict] = {}  # digest hex -> submit info

    contacts_seen: set[tuple] = set()
    adverts: dict[int, tuple[int, bytes, bytes]] = {}
    last_interval = [0] * len(specs)

    def advance(k: int, now: int) -> None:
        if now != last_interval[k]:
            tokens[k].tick(now)
            last_interval[k] = now

    def beacon(t: int) -> None:
        now = interval_number(t)
        for k in range(len(tokens)):
            advance(k, now)
        xs, ys = [], []
        for p in paths:
            x, y = p.at(t)
            xs.append(x)
            ys.append(y)
        pairs = geometry.neighbor_pairs(xs, ys, scenario.radius)
        if not pairs:
            return
        rssi = geometry.rssi_hints([d for _, _, d in pairs])
        for (i, j, d), hint in zip(pairs, rssi):
            for e, r in ((i, j), (j, i)):
                key = (e, r, now, generation[e], generation[r])
                if key not in contacts_seen:
                    contacts_seen.add(key)
                    tr.add(t, "contact", emitter=specs[e].id, receiver=specs[r].id, interval=now,
                           distance=round(d, 4), emitter_gen=generation[e], receiver_gen=generation[r])
                # draw regardless of loss so every loss level sees the same sequence
                u = loss_rng.random()
                if u < scenario.packet_loss:
                    continue
                cached = adverts.get(e)
                if cached is None or cached[0] != now:
                    rpi, aem = tokens[e].advertise(now)
                    adverts[e] = (now, rpi, aem)
                else:
                    _, rpi, aem = cached
                payload = ObservedPayload(rpi, aem, now, hint)
                if payload not in tokens[r]:
                    tokens[r].observe(payload)
                    tr.add(t, "observation", emitter=specs[e].id, receiver=specs[r].id,
                           interval=now, rssi=hint, receiver_gen=generation[r], emitter_gen=generation[e])

    def diagnose(t: int, ev: Diagnosis) -> None:
        k = index[ev.token]
        now = interval_number(t)
        advance(k, now)
        if ev.action == "reinitialize":
            reset(t, k, now)
            return
        dk = sign(providers[ev.provider], build_diagnosis_key_set(tokens[k], now))
        encoded = dk.encode()
        digest = hashlib.sha256(encoded).hexdigest()
        node = specs[k].server
        result = network.submit(node, encoded)
        tr.add(t, "diagnosis", token=ev.token, provider=ev.provider, server=node,
               digest=digest, teks=len(dk.teks), first_epoch=dk.teks[0].epoch,
               last_epoch=dk.teks[-1].epoch, salt=specs[k].salt, generation=generation[k],
               accepted=bool(result),
               reason=None if result else result.reason,
               sequence=result.sequence if result else None, step=network.steps)
        if result:
            uploads[digest] = {"t": t, "step": network.steps, "token": ev.token}
        reset(t, k, now)

    def reset(t: int, k: int, now: int) -> None:
        tokens[k].reinitialize(now)
        generation[k] += 1
        adverts.pop(k, None)
        tr.add(t, "reinitialize", token=specs[k].id, generation=generation[k])

    def sync(t: int) -> None:
        server.propagate_step(network)
        tr.add(t, "propagate", step=network.steps)
        now = interval_number(t)
        for k, spec in enumerate(specs):
            advance(k, now)
            node = network[spec.server]
            body = node.handle(server.FETCH, server.encode_fetch(cursors[k]))
            dks = server.decode_fetch_response(body)
            cursors[k] += len(dks)
            for dk in dks:
                digest = dk.digest().hex()
                flagged_before = tokens[k].exposure_flag
                result = tokens[k].match_diagnosis_keys(dk)
                if not result.events:
                    continue
                tr.add(t, "match", token=spec.id, digest=digest, events=len(result.events),
                       first_interval=result.events[0].interval, generation=generation[k])
                if not flagged_before:
                    up = uploads.get(digest, {"t": t, "step": network.steps, "token": None})
                    tr.add(t, "notification", token=spec.id, digest=digest,
                           disease=tokens[k].exposure, generation=generation[k],
                           source=up["token"], latency_seconds=t - up["t"],
                           latency_steps=network.steps - up["step"])

    schedule: list[tuple[int, int, int, Any]] = []
    for t in range(0, scenario.duration, scenario.beacon_interval):
        schedule.append((t, BEACON, len(schedule), None))
    for ev in scenario.events:
        schedule.append((ev.time, DIAGNOSE, len(schedule), ev))
    for t in range(scenario.sync_interval, scenario.duration + 1, scenario.sync_interval):
        schedule.append((t, SYNC, len(schedule), None))
    heapq.heapify(schedule)
    dirty = False  # a diagnosis not yet followed by a sync
    last_sync = 0
    while schedule:
        t, kind, _, ev = heapq.heappop(schedule)
        if kind == BEACON:
            beacon(t)
        elif kind == DIAGNOSE:
            diagnose(t, ev)
            dirty = True
        else:
            sync(t)
            last_sync = t
            dirty = False

    # drain: keep syncing until relays settle and every upload has had a fetch
    cycles = 0
    t = last_sync
    while dirty or not network.quiescent():
        if cycles >= max_drain_cycles:
            raise RuntimeError("server network did not settle")
        t += scenario.sync_interval
        sync(t)
        cycles += 1
        dirty = False

    end_t = t
    for row in server.throughput_report(network):
        tr.add(end_t, "throughput", **row)
    tr.add(end_t, "summary", steps=network.steps, drain_cycles=cycles,
           tokens=len(specs), uploads=len(uploads),
           notified=sorted({r["token"] for r in tr.of("notification")}))
    return tr
