"""Transcript analysis: ground-truth exposure oracle, latency, report tables.

The oracle never touches key material. It predicts who must be notified from
the geometric contact records, the server topology and the sync schedule only,
so comparing it with the simulated notifications checks the whole
derive/observe/sign/relay/match pipeline end to end.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict

import networkx as nx

from .crypto import RETENTION_INTERVALS, interval_number
from .sim import ServerSpec, Transcript


def _scenario(tr: Transcript) -> dict:
    return tr.header.get("scenario", {})


def _hops(scenario: dict) -> dict[int, dict[int, int]]:
    srv = dict(scenario.get("servers", {}))
    srv["edges"] = tuple(tuple(e) for e in srv.get("edges", ()))
    spec = ServerSpec(**srv)
    g = nx.Graph()
    g.add_nodes_from(spec.node_ids())
    g.add_edges_from(e for e in spec.edge_list() if e[0] != e[1])
    return {a: dict(d) for a, d in nx.all_pairs_shortest_path_length(g)}


def predicted_notifications(tr: Transcript, basis: str = "contact") -> set[tuple[str, int]]:
    """(token, generation) pairs that must end up notified.

    ``basis="contact"`` uses geometric contacts (exact for zero loss);
    ``basis="observation"`` uses the payloads actually received.
    """
    sc = _scenario(tr)
    if not sc:
        return set()
    si = sc["sync_interval"]
    token_info = {t["id"]: t for t in sc["tokens"]}
    hops = _hops(sc)
    resets = defaultdict(list)
    for r in tr.of("reinitialize"):
        resets[r["token"]].append(r["t"])

    def generation_at(token: str, t: float) -> int:
        # resets run before a sync at the same instant
        return sum(1 for x in resets[token] if x <= t)

    sightings = defaultdict(list)  # (emitter, emitter_gen) -> records
    for rec in tr.of(basis):
        sightings[(rec["emitter"], rec["emitter_gen"])].append(rec)

    out = set()
    for d in tr.of("diagnosis"):
        if not d["accepted"]:
            continue
        first_sync = max(si, math.ceil(d["t"] / si) * si)
        for rec in sightings[(d["token"], d["generation"])]:
            r = rec["receiver"]
            info = token_info[r]
            if info["salt"] != d["salt"]:
                continue
            h = hops.get(d["server"], {}).get(info["server"])
            if h is None:
                continue
            fetch_t = first_sync + max(h - 1, 0) * si
            gen = generation_at(r, fetch_t)
            if rec["receiver_gen"] != gen:
                continue
            if rec["interval"] < d["first_epoch"]:
                continue
            if rec["interval"] < interval_number(fetch_t) - RETENTION_INTERVALS:
                continue
            out.add((r, gen))
    return out


def exposed_tokens(tr: Transcript) -> set[str]:
    """Tokens that met an accepted-diagnosed same-salt token, ignoring server reachability."""
    sc = _scenario(tr)
    if not sc:
        return set()
    salt = {t["id"]: t["salt"] for t in sc["tokens"]}
    diagnosed = {(d["token"], d["generation"]): d for d in tr.of("diagnosis") if d["accepted"]}
    out = set()
    for c in tr.of("contact"):
        d = diagnosed.get((c["emitter"], c["emitter_gen"]))
        if d and salt[c["receiver"]] == d["salt"] and c["interval"] >= d["first_epoch"]:
            out.add(c["receiver"])
    return out


def notified(tr: Transcript) -> set[tuple[str, int]]:
    return {(n["token"], n["generation"]) for n in tr.of("notification")}


def notification_latency(tr: Transcript) -> dict:
    """Histograms of submit-to-flag delay in seconds and in sync cycles.

    Exposed tokens that were never notified (e.g. behind a server partition)
    are counted under ``never`` rather than dropped.
    """
    seconds, cycles = Counter(), Counter()
    for n in tr.of("notification"):
        seconds[n["latency_seconds"]] += 1
        cycles[n["latency_steps"]] += 1
    reached = {n["token"] for n in tr.of("notification")}
    never = sorted(exposed_tokens(tr) - reached)
    return {
        "seconds": dict(sorted(seconds.items())),
        "cycles": dict(sorted(cycles.items())),
        "notified": sum(seconds.values()),
        "never": len(never),
        "never_tokens": never,
    }


def throughput_rows(tr: Transcript) -> list[dict]:
    return [r for r in tr.of("throughput") if r.get("scope") == "node"]


def upload_rows(tr: Transcript) -> list[dict]:
    return [r for r in tr.of("throughput") if r.get("scope") == "upload"]


def summary_counts(tr: Transcript) -> dict:
    nodes = throughput_rows(tr)
    return {
        "tokens": len(_scenario(tr).get("tokens", [])),
        "contacted": len(exposed_tokens(tr)),
        "notified": len({n["token"] for n in tr.of("notification")}),
        "diagnoses": len(tr.of("diagnosis")),
        "accepted_uploads": sum(1 for d in tr.of("diagnosis") if d["accepted"]),
        "max_relays_out": max((r["relays_out"] for r in nodes), default=0),
        "max_messages": max((r["messages"] for r in nodes), default=0),
    }


def report_records(tr: Transcript) -> list[dict]:
    lat = notification_latency(tr)
    out = [{"table": "summary", **summary_counts(tr)}]
    for k, v in lat["seconds"].items():
        out.append({"table": "latency_seconds", "bucket": k, "count": v})
    for k, v in lat["cycles"].items():
        out.append({"table": "latency_cycles", "bucket": k, "count": v})
    out.append({"table": "latency_never", "count": lat["never"], "tokens": lat["never_tokens"]})
    for r in throughput_rows(tr):
        out.append({"table": "throughput", **{k: v for k, v in r.items() if k not in ("t", "kind", "scope")}})
    return out


def _table(title: str, header: list[str], rows: list[list]) -> str:
    cells = [header] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = [title, "  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells[1:]]
    return "\n".join(lines)


def render_report(tr: Transcript) -> str:
    s = summary_counts(tr)
    lat = notification_latency(tr)
    parts = [_table("Summary", list(s), [list(s.values())])]
    parts.append(_table(
        "Notification latency (seconds)", ["delay_s", "tokens"],
        [[k, v] for k, v in lat["seconds"].items()] + [["never", lat["never"]]],
    ))
    parts.append(_table(
        "Notification latency (sync cycles)", ["cycles", "tokens"],
        [[k, v] for k, v in lat["cycles"].items()] + [["never", lat["never"]]],
    ))
    cols = ["node", "degree", "submits", "relays_in", "relays_out", "fetches", "messages", "bytes_relayed"]
    parts.append(_table("Per-node throughput", cols, [[r[c] for c in cols] for r in throughput_rows(tr)]))
    return "\n\n".join(parts) + "\n"
