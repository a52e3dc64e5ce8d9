"""Fixture builders shared by the analytics, zero-day and acceptance tests."""

from __future__ import annotations

import hashlib
import random
from fractions import Fraction

from opsig.signature import AppSig, ClassRecord, ClassSig, SignatureBundle
from opsig.synth import build_app, make_class

FP = "test-table"


def fake_bundle(app_id: str, classes: dict[str, int], package: str = "p", fingerprint: str = FP) -> SignatureBundle:
    """Bundle with hand-chosen Lev2 digests and API counts."""
    records = tuple(
        ClassRecord(f"c{i}", ClassSig(d, n, "code" if n else "payload_native"))
        for i, (d, n) in enumerate(sorted(classes.items()))
    )
    lev1 = hashlib.md5("".join(sorted(classes)).encode()).hexdigest()
    return SignatureBundle(app_id, package, AppSig(lev1, tuple(r.sig for r in records)), records, fingerprint)


def app_id(i: int, tag: str = "") -> str:
    return hashlib.md5(f"{tag}app{i}".encode()).hexdigest()


def brute_force_jaccard(a: SignatureBundle, b: SignatureBundle) -> tuple[int, int]:
    """Similarity ratio by explicit enumeration over class-record lists."""
    la = [(c.sig.digest, c.sig.api_count) for c in a.classes]
    lb = [(c.sig.digest, c.sig.api_count) for c in b.classes]
    union: list[tuple[str, int]] = []
    for item in la + lb:
        if all(item[0] != u[0] for u in union):
            union.append(item)
    inter = [u for u in union if any(u[0] == x[0] for x in la) and any(u[0] == y[0] for y in lb)]
    return sum(n for _, n in inter), sum(n for _, n in union)


def oracle_ratio(a, b) -> Fraction:
    num, den = brute_force_jaccard(a, b)
    if den:
        return Fraction(num, den)
    # zero API mass on both sides: equal digest sets count as identical
    same = {c.sig.digest for c in a.classes} == {c.sig.digest for c in b.classes}
    return Fraction(int(same))


def random_pair(rng: random.Random, max_classes: int = 20):
    pool = [hashlib.md5(f"cls{i}".encode()).hexdigest() for i in range(30)]
    counts = {d: rng.choice([0, 1, 2, 3, 5, 8, 13, 40]) for d in pool}
    pick = lambda: {d: counts[d] for d in rng.sample(pool, rng.randint(0, max_classes))}
    return fake_bundle(app_id(rng.random()), pick()), fake_bundle(app_id(rng.random()), pick())


def planted_family_apps(table, n_apps=40, family=12, inject_calls=60, seed=5):
    """Apps for the zero-day scenario.

    Every app carries the same ad-library class and a unique own class; the
    first ``family`` apps also carry one injected class with ``inject_calls``
    API calls. Returns (apps, family app ids, injected class name, ad class name).
    """
    rng = random.Random(seed)
    apis = sorted(table.entries)
    injected_body = [apis[(7 * i) % len(apis)] for i in range(inject_calls)]
    ad_body = [apis[(3 * i + 1) % len(apis)] for i in range(25)]
    apps = []
    for i in range(n_apps):
        own = [rng.choice(apis) for _ in range(rng.randint(5, 40))]
        main = make_class(f"app{i}/Main", {"onCreate": own + ["com/google/ads/AdView;->load"]
                                           + (["com/evil/Payload;->run"] if i < family else [])})
        classes = [main, make_class("com/google/ads/AdView", {"load": ad_body})]
        if i < family:
            classes.append(make_class("com/evil/Payload", {"run": injected_body}))
        apps.append(build_app(classes, table, [f"app{i}/Main;->onCreate()V"], package=f"com.app{i}"))
    fam = [a.app_id for a in apps[:family]]
    return apps, fam
