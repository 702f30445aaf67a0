"""Executable acceptance criteria.

Each check returns a :class:`Outcome`; ``tests/test_acceptance.py`` asserts on
them and ``tracer-token acceptance`` prints one line per criterion.
"""

from __future__ import annotations

import hashlib
import random
import time
from dataclasses import dataclass
from typing import Callable

from . import analysis, crypto, fixtures, reference
from .authority import DiagnosisKeySet, ProviderKeypair, build_diagnosis_key_set, sign, verify, verify_bytes
from .crypto import ROLLING_PERIOD, SubnetworkSalt, TemporaryExposureKey
from .server import tree_leaves
from .sim import run
from .token import ObservedPayload, TokenState

SALT_A = SubnetworkSalt("COVID-19", b"")
SALT_B = SubnetworkSalt("influenza", bytes.fromhex("8d2f1c0a5e6b7d49a13e0f2c6b5a4d39"))


@dataclass
class Outcome:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.2f}s)"


def crypto_oracle(n: int = 1000, seed: int = 101, budget: float = 5.0) -> Outcome:
    rng = random.Random(seed)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(n):
        tek = TemporaryExposureKey(rng.randbytes(16), rng.randrange(0, 2 ** 32 // ROLLING_PERIOD) * ROLLING_PERIOD)
        salt = SubnetworkSalt("s", rng.randbytes(rng.randrange(0, 33)))
        interval = rng.randrange(0, 2 ** 32)
        meta = rng.randbytes(4)
        rpik, aemk = crypto.derive_rpik(tek, salt), crypto.derive_aemk(tek, salt)
        ident = crypto.derive_rpi(rpik, interval)
        aem = crypto.encrypt_metadata(aemk, ident, meta)
        ref_rpik = reference.rpik(tek.key, salt.salt_bytes)
        ref_aemk = reference.aemk(tek.key, salt.salt_bytes)
        ref_rpi = reference.rpi(ref_rpik, interval)
        ok = (rpik == ref_rpik and aemk == ref_aemk and ident.rpi == ref_rpi
              and aem == reference.aem(ref_aemk, ref_rpi, meta)
              and crypto.decrypt_metadata(aemk, ident, aem) == meta)
        mismatches += not ok
    elapsed = time.perf_counter() - start
    return Outcome("1 crypto oracle equivalence", mismatches == 0 and elapsed < budget,
                   f"{mismatches} mismatches over {n} inputs, budget {budget}s", elapsed)


def subnetwork_isolation(n: int = 1000, seed: int = 202) -> Outcome:
    rng = random.Random(seed)
    start = time.perf_counter()
    teks = [TemporaryExposureKey(rng.randbytes(16), 144 * (20000 + k % 14)) for k in range(n)]
    set_a = {r.rpi for t in teks for r in crypto.rpi_sequence(t, SALT_A)}
    set_b = {r.rpi for t in teks for r in crypto.rpi_sequence(t, SALT_B)}
    overlap = len(set_a & set_b)

    # cross-salt matching: a token holding every salt-B identifier of a 14-day set
    events = 0
    for g in range(0, n, 14):
        group = sorted(teks[g:g + 14], key=lambda t: t.epoch)  # 14 consecutive keys, distinct days
        issued = group[-1].epoch + ROLLING_PERIOD - 1
        for holder_salt in (SALT_B, SALT_A):
            token = TokenState.create(holder_salt, issued, rng=rng)
            for t in group:
                for r in crypto.rpi_sequence(t, SALT_B):
                    token.observe(ObservedPayload(r.rpi, bytes(4), r.interval))
            dk_a = DiagnosisKeySet(tuple(group), SALT_A, issued)
            events += len(token.match_diagnosis_keys(dk_a))
    elapsed = time.perf_counter() - start
    return Outcome("2 subnetwork isolation", overlap == 0 and events == 0 and len(set_a) == 144 * n,
                   f"{overlap} shared identifiers, {events} cross-salt exposure events", elapsed)


def brute_force_matches(teks, salt, payloads, clock, window=1):
    """Triple loop over (tek, interval, payload) with per-interval derivation."""
    found = set()
    for tek in teks:
        rpik = crypto.derive_rpik(tek, salt)
        for interval in range(tek.epoch, tek.epoch + ROLLING_PERIOD):
            ident = crypto.derive_rpi(rpik, interval).rpi
            for p in payloads:
                if (p.rpi_bytes == ident and abs(p.heard_at - interval) <= window
                        and p.heard_at >= clock - crypto.RETENTION_INTERVALS):
                    found.add((p.heard_at, salt.label))
    return sorted(found)


def random_instance(rng: random.Random):
    n_teks = rng.randint(1, 5)
    first_day = rng.randrange(100, 20000)
    days = sorted(rng.sample(range(first_day, first_day + 14), n_teks))
    teks = [TemporaryExposureKey(rng.randbytes(16), d * ROLLING_PERIOD) for d in days]
    salt = rng.choice([SALT_A, SALT_B])
    issued = teks[-1].epoch + rng.randrange(ROLLING_PERIOD)
    holder = TokenState.create(salt, issued, rng=rng)
    payloads = []
    for _ in range(rng.randint(0, 200)):
        kind = rng.random()
        if kind < 0.5:
            tek = rng.choice(teks)
            interval = tek.epoch + rng.randrange(ROLLING_PERIOD)
            rpi = crypto.derive_rpi(crypto.derive_rpik(tek, salt), interval).rpi
            heard = interval + rng.choice([-2, -1, 0, 0, 0, 1, 2])
        elif kind < 0.7:
            tek = rng.choice(teks)
            interval = tek.epoch + rng.randrange(ROLLING_PERIOD)
            other = SALT_B if salt is SALT_A else SALT_A
            rpi = crypto.derive_rpi(crypto.derive_rpik(tek, other), interval).rpi
            heard = interval
        else:
            rpi = rng.randbytes(16)
            heard = issued - rng.randrange(crypto.RETENTION_INTERVALS)
        if 0 <= issued - heard <= crypto.RETENTION_INTERVALS:
            p = ObservedPayload(rpi, rng.randbytes(4), heard)
            holder.observe(p)
            payloads.append(p)
    dk = DiagnosisKeySet(tuple(teks), salt, issued)
    return holder, dk, payloads


def matching_oracle(instances: int = 200, seed: int = 303) -> Outcome:
    rng = random.Random(seed)
    start = time.perf_counter()
    bad = 0
    total = 0
    for _ in range(instances):
        holder, dk, payloads = random_instance(rng)
        got = [(e.interval, e.disease_label) for e in holder.match_diagnosis_keys(dk)]
        want = brute_force_matches(dk.teks, dk.salt, payloads, holder.clock)
        bad += got != want
        total += len(want)
    elapsed = time.perf_counter() - start
    return Outcome("3 matching oracle", bad == 0,
                   f"{bad}/{instances} instances differ ({total} expected events)", elapsed)


def identifier_count(seed: int = 404) -> Outcome:
    rng = random.Random(seed)
    start = time.perf_counter()
    token = TokenState.create(SALT_A, 0, rng=rng)
    token.tick(30 * ROLLING_PERIOD)
    dk = build_diagnosis_key_set(token)
    per_day = [len(crypto.rpi_sequence(t, dk.salt)) for t in dk.teks]
    candidates = {r.rpi for t in dk.teks for r in crypto.rpi_sequence(t, dk.salt)}
    ok = per_day == [144] * 14 and len(dk.teks) == 14 and len(candidates) == 2016
    return Outcome("4 per-day identifier count", ok,
                   f"{len(dk.teks)} TEKs x {per_day[0]} = {len(candidates)} candidates",
                   time.perf_counter() - start)


def throughput_claim(fanout: int = 4, depth: int = 3, budget: float = 10.0) -> Outcome:
    start = time.perf_counter()
    scenario = fixtures.tree_reach(fanout, depth, per_leaf=fanout)
    tr = run(scenario)
    elapsed = time.perf_counter() - start
    nodes = analysis.throughput_rows(tr)
    (upload,) = analysis.upload_rows(tr)
    max_out = max(r["relays_out"] for r in nodes)
    max_io = max(r["relays_in"] + r["submits"] + r["relays_out"] for r in nodes)
    groups = {tok["server"] for tok in scenario.to_dict()["tokens"] if tok["id"] != "patient"}
    reached_groups = {t.server for t in scenario.tokens
                      if t.id in {n["token"] for n in tr.of("notification")}}
    want_hist = {str(k): fanout ** k for k in range(depth + 1)}
    ok = (len(nodes) == 85 if (fanout, depth) == (4, 3) else True)
    ok = ok and max_out <= fanout + 1 and max_io <= fanout + 1
    ok = ok and sum(r["relays_out"] for r in nodes) == len(nodes) - 1
    ok = ok and upload["hop_histogram"] == want_hist
    ok = ok and reached_groups == groups == set(tree_leaves(fanout, depth))
    ok = ok and analysis.predicted_notifications(tr) == analysis.notified(tr)
    ok = ok and len(analysis.notified(tr)) == fanout ** (depth + 1)
    ok = ok and elapsed < budget
    return Outcome(
        "5 throughput claim", ok,
        f"{len(nodes)} nodes, max relays/node {max_out}, max relay msgs/node {max_io}, "
        f"{len(reached_groups)} leaf groups / {len(analysis.notified(tr))} tokens notified, "
        f"budget {budget}s", elapsed)


def end_to_end(seeds=(11, 12, 13)) -> Outcome:
    start = time.perf_counter()
    details, ok = [], True
    for seed in seeds:
        tr = run(fixtures.crowd(seed, n_tokens=20, duration=7200, n_diagnoses=3))
        want = analysis.predicted_notifications(tr)
        got = analysis.notified(tr)
        ok = ok and want == got and len(tr.of("diagnosis")) == 3
        details.append(f"seed {seed}: {len(got)}/{len(want)}")
    return Outcome("6 end-to-end soundness/completeness", ok,
                   "notified/predicted " + ", ".join(details), time.perf_counter() - start)


def signed_fixture(seed: int = 505):
    rng = random.Random(seed)
    keypair = ProviderKeypair.from_seed(b"acceptance-provider")
    token = TokenState.create(SALT_B, 0, rng=rng)
    token.tick(20 * ROLLING_PERIOD + 7)
    return keypair, sign(keypair, build_diagnosis_key_set(token))


def signature_robustness() -> Outcome:
    start = time.perf_counter()
    keypair, dk = signed_fixture()
    registry = [keypair.public_key, ProviderKeypair.from_seed(b"other").public_key]
    blob = bytearray(dk.encode())
    baseline = bool(verify_bytes(registry, bytes(blob))) and bool(verify(registry, dk))
    accepted = 0
    for bit in range(len(blob) * 8):
        blob[bit // 8] ^= 1 << (bit % 8)
        accepted += bool(verify_bytes(registry, bytes(blob)))
        blob[bit // 8] ^= 1 << (bit % 8)
    truncations = sum(bool(verify_bytes(registry, bytes(blob[:n]))) for n in range(len(blob)))
    return Outcome("7 signature robustness", baseline and accepted == 0 and truncations == 0,
                   f"{len(blob) * 8} bit flips, {accepted} accepted; {truncations} truncations accepted",
                   time.perf_counter() - start)


def trustless_reset() -> Outcome:
    start = time.perf_counter()
    tr = run(fixtures.swap())
    b_matches = [m for m in tr.of("match") if m["token"] == "b"]
    c_notified = any(n["token"] == "c" for n in tr.of("notification"))
    b_sightings = [o for o in tr.of("observation") if o["receiver"] == "b" and o["emitter"] == "a"]
    ok = not b_matches and c_notified and len(b_sightings) > 0
    return Outcome("8 trustless reset", ok,
                   f"{len(b_sightings)} pre-reset sightings, {len(b_matches)} matches; control notified={c_notified}",
                   time.perf_counter() - start)


def fixture_scenarios():
    return {
        "two_token_contact": fixtures.two_token_contact(),
        "far_apart": fixtures.two_token_contact(distance=50.0),
        "cross_salt": fixtures.two_token_contact(salts=("COVID-19", "influenza")),
        "swap": fixtures.swap(),
        "crowd": fixtures.crowd(11),
        "crowd_lossy": fixtures.crowd(11, loss=0.3),
        "tree_reach": fixtures.tree_reach(2, 2, per_leaf=2),
    }


def determinism() -> Outcome:
    start = time.perf_counter()
    differing = []
    for name, sc in fixture_scenarios().items():
        h1 = hashlib.sha256(run(sc).dumps().encode()).hexdigest()
        h2 = hashlib.sha256(run(sc).dumps().encode()).hexdigest()
        if h1 != h2:
            differing.append(name)
    n = len(fixture_scenarios())
    return Outcome("9 determinism", not differing,
                   f"{n - len(differing)}/{n} fixtures byte-identical", time.perf_counter() - start)


CRITERIA: list[Callable[[], Outcome]] = [
    crypto_oracle, subnetwork_isolation, matching_oracle, identifier_count, throughput_claim,
    end_to_end, signature_robustness, trustless_reset, determinism,
]


def run_all() -> list[Outcome]:
    return [check() for check in CRITERIA]
