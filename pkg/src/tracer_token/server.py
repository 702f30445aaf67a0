"""Key-server network: verified uploads, flood relay with dedup, cursor fetch.

Wire bodies (big-endian):

    SUBMIT          canonical DiagnosisKeySet encoding
    RELAY           canonical encoding | origin node id u64
    FETCH           cursor u64
    FETCH-RESPONSE  count u32 | count * canonical encoding

The in-memory transport passes ``(kind, body)`` pairs; the bodies above are
exactly what an external binding would carry.
"""

from __future__ import annotations

import hashlib
import random
import struct
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable

import networkx as nx

from .authority import DiagnosisKeySet, MalformedError, Reject, verify

SUBMIT = "SUBMIT"
RELAY = "RELAY"
FETCH = "FETCH"
FETCH_RESPONSE = "FETCH-RESPONSE"

DUPLICATE = "duplicate"


def encode_submit(dk: DiagnosisKeySet) -> bytes:
    return dk.encode()


def encode_relay(encoded_dk: bytes, origin: int) -> bytes:
    return encoded_dk + struct.pack(">Q", origin)


def decode_relay(body: bytes) -> tuple[bytes, int]:
    if len(body) < 8:
        raise MalformedError("relay shorter than origin field")
    return body[:-8], struct.unpack(">Q", body[-8:])[0]


def encode_fetch(cursor: int) -> bytes:
    return struct.pack(">Q", cursor)


def decode_fetch(body: bytes) -> int:
    if len(body) != 8:
        raise MalformedError("fetch body must be 8 bytes")
    return struct.unpack(">Q", body)[0]


def encode_fetch_response(encoded: Iterable[bytes]) -> bytes:
    items = list(encoded)
    return struct.pack(">I", len(items)) + b"".join(items)


def decode_fetch_response(body: bytes) -> list[DiagnosisKeySet]:
    if len(body) < 4:
        raise MalformedError("fetch response missing count")
    (count,) = struct.unpack_from(">I", body)
    pos, out = 4, []
    for _ in range(count):
        dk, pos = DiagnosisKeySet.decode_prefix(body, pos)
        out.append(dk)
    if pos != len(body):
        raise MalformedError("trailing bytes in fetch response")
    return out


@dataclass(frozen=True)
class Accepted:
    sequence: int

    def __bool__(self) -> bool:
        return True


@dataclass(frozen=True)
class Rejected:
    reason: str

    def __bool__(self) -> bool:
        return False


@dataclass
class NodeMetrics:
    submits: int = 0
    relays_in: int = 0
    relays_out: int = 0
    fetches: int = 0
    bytes_relayed: int = 0
    bytes_served: int = 0
    rejected: Counter = field(default_factory=Counter)

    @property
    def inbound(self) -> int:
        return self.submits + self.relays_in

    @property
    def total(self) -> int:
        return self.inbound + self.relays_out + self.fetches


@dataclass
class LogEntry:
    sequence: int
    encoded: bytes
    digest: bytes
    came_from: int | None  # peer it arrived from; None for a direct submit


@dataclass
class ServerNode:
    node_id: int
    registry: frozenset[bytes]
    peers: list[int] = field(default_factory=list)
    log: list[LogEntry] = field(default_factory=list)
    seen: set[bytes] = field(default_factory=set)
    metrics: NodeMetrics = field(default_factory=NodeMetrics)
    relay_counts: Counter = field(default_factory=Counter)  # digest -> relays sent
    _pending: deque = field(default_factory=deque, repr=False)

    @property
    def head(self) -> int:
        return len(self.log)

    def submit(self, dk: DiagnosisKeySet | bytes, came_from: int | None = None) -> Accepted | Rejected:
        """Verify, dedupe by content digest, append and queue for relay."""
        if came_from is None:
            self.metrics.submits += 1
        else:
            self.metrics.relays_in += 1
        if isinstance(dk, DiagnosisKeySet):
            encoded = dk.encode()
        else:
            encoded = bytes(dk)
            try:
                dk = DiagnosisKeySet.decode(encoded)
            except (MalformedError, ValueError):
                return self._reject(Reject.MALFORMED.value)
        digest = hashlib.sha256(encoded).digest()
        if digest in self.seen:
            return self._reject(DUPLICATE)
        verdict = verify(self.registry, dk)
        if not verdict:
            return self._reject(verdict.reason.value)
        self.seen.add(digest)
        entry = LogEntry(self.head + 1, encoded, digest, came_from)
        self.log.append(entry)
        self._pending.append(entry)
        return Accepted(entry.sequence)

    def _reject(self, reason: str) -> Rejected:
        self.metrics.rejected[reason] += 1
        return Rejected(reason)

    def outgoing(self) -> list[tuple[int, str, bytes]]:
        """Drain the relay queue into (peer, kind, body) messages; once per entry per edge."""
        out = []
        while self._pending:
            entry = self._pending.popleft()
            for peer in self.peers:
                if peer == entry.came_from:
                    continue
                body = encode_relay(entry.encoded, self.node_id)
                out.append((peer, RELAY, body))
                self.metrics.relays_out += 1
                self.metrics.bytes_relayed += len(body)
                self.relay_counts[entry.digest] += 1
        return out

    def has_pending(self) -> bool:
        return bool(self._pending)

    def fetch(self, cursor: int) -> tuple[list[DiagnosisKeySet], int]:
        """Entries after ``cursor`` in log order; an invalid cursor restarts from zero."""
        if cursor < 0 or cursor > self.head:
            cursor = 0
        entries = self.log[cursor:]
        self.metrics.fetches += 1
        self.metrics.bytes_served += 4 + sum(len(e.encoded) for e in entries)
        return [DiagnosisKeySet.decode(e.encoded) for e in entries], self.head

    def handle(self, kind: str, body: bytes) -> bytes | Accepted | Rejected:
        """Dispatch one wire message."""
        if kind == SUBMIT:
            return self.submit(body)
        if kind == RELAY:
            encoded, origin = decode_relay(body)
            return self.submit(encoded, came_from=origin)
        if kind == FETCH:
            cursor = decode_fetch(body)
            if cursor < 0 or cursor > self.head:
                cursor = 0
            self.metrics.fetches += 1
            entries = [e.encoded for e in self.log[cursor:]]
            resp = encode_fetch_response(entries)
            self.metrics.bytes_served += len(resp)
            return resp
        raise MalformedError(f"unknown message kind {kind!r}")


@dataclass
class Network:
    nodes: dict[int, ServerNode]
    steps: int = 0
    # digest -> {node_id: step at which the node first logged it}
    arrivals: dict[bytes, dict[int, int]] = field(default_factory=dict)

    def __getitem__(self, node_id: int) -> ServerNode:
        return self.nodes[node_id]

    def __iter__(self):
        return iter(self.nodes.values())

    def __len__(self) -> int:
        return len(self.nodes)

    def submit(self, node_id: int, dk: DiagnosisKeySet | bytes) -> Accepted | Rejected:
        encoded = dk.encode() if isinstance(dk, DiagnosisKeySet) else bytes(dk)
        result = self.nodes[node_id].handle(SUBMIT, encoded)
        if result:
            digest = hashlib.sha256(encoded).digest()
            self.arrivals.setdefault(digest, {})[node_id] = self.steps
        return result

    def quiescent(self) -> bool:
        return not any(n.has_pending() for n in self.nodes.values())

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        for node in self.nodes.values():
            g.add_edges_from((node.node_id, p) for p in node.peers)
        return g


def propagate_step(network: Network) -> Network:
    """One synchronous round: every node relays its queue, then all messages land."""
    inflight = []
    for node in sorted(network.nodes.values(), key=lambda n: n.node_id):
        inflight.extend(node.outgoing())
    network.steps += 1
    for peer, kind, body in inflight:
        result = network.nodes[peer].handle(kind, body)
        if result:
            digest = hashlib.sha256(decode_relay(body)[0]).digest()
            network.arrivals.setdefault(digest, {})[peer] = network.steps
    return network


def run_until_quiescent(network: Network, max_steps: int = 10_000) -> int:
    taken = 0
    while not network.quiescent():
        if taken >= max_steps:
            raise RuntimeError("propagation did not settle")
        propagate_step(network)
        taken += 1
    return taken


def fetch(node: ServerNode, cursor: int) -> tuple[list[DiagnosisKeySet], int]:
    return node.fetch(cursor)


def build_network(edges: Iterable[tuple[int, int]], node_ids: Iterable[int], registry: Iterable[bytes]) -> Network:
    reg = frozenset(registry)
    nodes = {i: ServerNode(i, reg) for i in sorted(set(node_ids))}
    for a, b in edges:
        if a == b:
            continue
        if b not in nodes[a].peers:
            nodes[a].peers.append(b)
        if a not in nodes[b].peers:
            nodes[b].peers.append(a)
    for node in nodes.values():
        node.peers.sort()
    return Network(nodes)


def single(registry: Iterable[bytes] = ()) -> Network:
    return build_network([], [0], registry)


def line(n: int, registry: Iterable[bytes] = ()) -> Network:
    return build_network([(i, i + 1) for i in range(n - 1)], range(n), registry)


def complete(n: int, registry: Iterable[bytes] = ()) -> Network:
    return build_network([(i, j) for i in range(n) for j in range(i + 1, n)], range(n), registry)


def tree_edges(fanout: int, depth: int) -> list[tuple[int, int]]:
    """Edges of a complete ``fanout``-ary tree with ``depth`` levels below the root (BFS ids)."""
    edges, frontier, next_id = [], [0], 1
    for _ in range(depth):
        new = []
        for parent in frontier:
            for _ in range(fanout):
                edges.append((parent, next_id))
                new.append(next_id)
                next_id += 1
        frontier = new
    return edges


def tree_leaves(fanout: int, depth: int) -> list[int]:
    total = sum(fanout ** k for k in range(depth + 1))
    return list(range(total - fanout ** depth, total))


def tree(fanout: int, depth: int, registry: Iterable[bytes] = ()) -> Network:
    total = sum(fanout ** k for k in range(depth + 1))
    return build_network(tree_edges(fanout, depth), range(total), registry)


def random_connected(n: int, extra_edges: int, seed: int, registry: Iterable[bytes] = ()) -> Network:
    """Random spanning tree plus ``extra_edges`` chords; always connected."""
    rng = random.Random(seed)
    edges = [(i, rng.randrange(i)) for i in range(1, n)]
    for _ in range(extra_edges):
        a, b = rng.sample(range(n), 2)
        edges.append((a, b))
    return build_network(edges, range(n), registry)


def throughput_report(network: Network) -> list[dict]:
    """Per-node counters plus, per upload, the hop-latency histogram and max relay fan-out."""
    rows = []
    for node in sorted(network.nodes.values(), key=lambda n: n.node_id):
        m = node.metrics
        rows.append({
            "scope": "node",
            "node": node.node_id,
            "degree": len(node.peers),
            "submits": m.submits,
            "relays_in": m.relays_in,
            "relays_out": m.relays_out,
            "fetches": m.fetches,
            "messages": m.total,
            "bytes_relayed": m.bytes_relayed,
            "bytes_served": m.bytes_served,
            "log_size": node.head,
        })
    for digest, arrived in sorted(network.arrivals.items()):
        start = min(arrived.values())
        hist = Counter(step - start for step in arrived.values())
        rows.append({
            "scope": "upload",
            "digest": digest.hex()[:16],
            "reached_nodes": len(arrived),
            "hop_histogram": {str(k): hist[k] for k in sorted(hist)},
            "max_relays_per_node": max(
                (n.relay_counts[digest] for n in network.nodes.values()), default=0
            ),
        })
    return rows
