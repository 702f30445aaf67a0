"""Scenario builders shared by the tests, the acceptance run and the CLI."""

from __future__ import annotations

import random

from .server import tree_leaves
from .sim import Scenario

HOUR = 3600


def two_token_contact(seed: int = 1, distance: float = 1.0, salts=("COVID-19", "COVID-19"),
                      duration: int = HOUR) -> Scenario:
    """Two stationary tokens ``distance`` meters apart; token ``a`` is diagnosed at the end."""
    return Scenario.from_dict({
        "seed": seed,
        "duration": duration,
        "tokens": [
            {"id": "a", "salt": salts[0], "path": [[0, 0.0, 0.0]]},
            {"id": "b", "salt": salts[1], "path": [[0, distance, 0.0]]},
        ],
        "events": [{"token": "a", "time": duration, "provider": "clinic"}],
    })


def swap(seed: int = 3) -> Scenario:
    """Owner-change scenario.

    ``b`` and ``c`` both sit next to ``a`` for the first hour. ``b`` is then handed
    to a new owner (reinitialized) and moved away; ``a`` reports two hours in. The
    control ``c`` must be notified, ``b`` must not match its pre-reset sightings.
    """
    return Scenario.from_dict({
        "seed": seed,
        "duration": 2 * HOUR,
        "tokens": [
            {"id": "a", "path": [[0, 0.0, 0.0]]},
            {"id": "b", "path": [[0, 1.0, 0.0], [HOUR, 500.0, 0.0]]},
            {"id": "c", "path": [[0, -1.0, 0.0], [HOUR, -500.0, 0.0]]},
        ],
        "events": [
            {"token": "b", "time": HOUR + 60, "action": "reinitialize"},
            {"token": "a", "time": 2 * HOUR, "provider": "clinic"},
        ],
    })


def crowd(seed: int, n_tokens: int = 20, duration: int = 2 * HOUR, n_diagnoses: int = 3,
          area: float = 30.0, moves: int = 12, loss: float = 0.0, salts=("COVID-19",),
          servers: dict | None = None) -> Scenario:
    """Random walkers on an ``area`` x ``area`` square with scripted diagnoses."""
    rng = random.Random(seed)
    tokens = []
    node_ids = [0]
    if servers and servers.get("topology") == "tree":
        node_ids = tree_leaves(servers["fanout"], servers["depth"])
    elif servers and servers.get("topology") in ("line", "complete"):
        node_ids = list(range(servers["n"]))
    for k in range(n_tokens):
        times = sorted(rng.sample(range(1, duration), moves - 1))
        path = [[0, round(rng.uniform(0, area), 2), round(rng.uniform(0, area), 2)]]
        path += [[t, round(rng.uniform(0, area), 2), round(rng.uniform(0, area), 2)] for t in times]
        tokens.append({"id": f"t{k:02d}", "salt": salts[k % len(salts)], "path": path,
                       "server": node_ids[k % len(node_ids)]})
    diagnosed = rng.sample(range(n_tokens), n_diagnoses)
    events = [
        {"token": f"t{k:02d}", "time": rng.randrange(duration // 4, duration), "provider": "clinic"}
        for k in diagnosed
    ]
    raw = {"seed": seed, "duration": duration, "tokens": tokens, "events": events,
           "packet_loss": loss}
    if servers:
        raw["servers"] = servers
    return Scenario.from_dict(raw)


def tree_reach(fanout: int = 4, depth: int = 3, per_leaf: int = 4, seed: int = 5,
               dwell: int = 10) -> Scenario:
    """A patient walks past every leaf group of a server tree, then reports at the root.

    Groups sit 100 m apart so they never hear each other; each group's tokens fetch
    from their own leaf server.
    """
    leaves = tree_leaves(fanout, depth)
    tokens, path = [], []
    for g, leaf in enumerate(leaves):
        gx = 100.0 * g
        for m in range(per_leaf):
            tokens.append({"id": f"g{g:03d}m{m}", "path": [[0, gx + 0.5 * m, 0.0]], "server": leaf})
        path.append([g * dwell, gx + 0.75, 1.0])
    path.append([len(leaves) * dwell, -1000.0, -1000.0])
    tokens.append({"id": "patient", "path": path, "server": 0})
    duration = len(leaves) * dwell + 60
    return Scenario.from_dict({
        "seed": seed,
        "duration": duration,
        "tokens": tokens,
        "servers": {"topology": "tree", "fanout": fanout, "depth": depth},
        "events": [{"token": "patient", "time": duration, "provider": "clinic"}],
    })
