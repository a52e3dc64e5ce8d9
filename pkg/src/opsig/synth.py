"""Small builders for synthetic apps used by fixtures, tests and demos."""

from __future__ import annotations

import random
from dataclasses import replace
from typing import Sequence

from .apitable import ApiTable
from .ingest import content_id
from .ir import AppIR, CallSite, ClassIR, MethodIR, PayloadFile, mark_entries, method_ref, resolve_kinds
from .magic import ELF_MAGIC, PNG_MAGIC, detect_file_type


def make_method(name: str, targets: Sequence[str], descriptor: str = "()V") -> MethodIR:
    return MethodIR(name, descriptor, tuple(CallSite(t) for t in targets))


def make_class(name: str, bodies: dict[str, Sequence[str]]) -> ClassIR:
    return ClassIR(name, tuple(make_method(m, calls) for m, calls in bodies.items()))


def build_app(
    classes: Sequence[ClassIR],
    table: ApiTable,
    entry_points: Sequence[str] = (),
    package: str = "com.example.app",
    payloads: Sequence[PayloadFile] = (),
    permissions: Sequence[str] = (),
) -> AppIR:
    """Assemble an AppIR; app_id is the content hash of the result."""
    resolved = resolve_kinds(classes, table)
    entries = frozenset(entry_points)
    app = AppIR(
        app_id="0" * 32,
        package_name=package,
        declared_permissions=frozenset(permissions),
        entry_points=entries,
        classes=mark_entries(resolved, entries),
        payloads=tuple(
            replace(p, detected_type=detect_file_type(p.data),
                    embedded_classes=None if p.embedded_classes is None
                    else resolve_kinds(p.embedded_classes, table))
            for p in payloads
        ),
    )
    return replace(app, app_id=content_id(app))


def payload(path: str, data: bytes, embedded: Sequence[ClassIR] | None = None) -> PayloadFile:
    return PayloadFile(path, data, detect_file_type(data),
                       None if embedded is None else tuple(embedded))


def random_app(
    rng: random.Random,
    table: ApiTable,
    max_classes: int = 8,
    max_methods: int = 6,
    max_calls: int = 8,
    package: str | None = None,
    with_payloads: bool = True,
) -> AppIR:
    """Random app with at least one entry point, internal call edges and some dead code."""
    apis = sorted(table.entries)
    pkg = package or f"com/r{rng.randrange(16**6):06x}"
    n_classes = rng.randint(1, max_classes)
    shapes = [(f"{pkg}/C{i}", [f"m{j}" for j in range(rng.randint(1, max_methods))])
              for i in range(n_classes)]
    all_methods = [(c, m) for c, ms in shapes for m in ms]
    classes = []
    for cname, mnames in shapes:
        methods = []
        for mname in mnames:
            calls = []
            for _ in range(rng.randint(0, max_calls)):
                if rng.random() < 0.7:
                    calls.append(rng.choice(apis))
                else:
                    tc, tm = rng.choice(all_methods)
                    calls.append(f"{tc};->{tm}")
            methods.append(make_method(mname, calls))
        classes.append(ClassIR(cname, tuple(methods)))
    entry_classes = rng.sample(range(n_classes), k=rng.randint(1, min(2, n_classes)))
    entries = [method_ref(classes[i].name, classes[i].methods[0].name, classes[i].methods[0].descriptor)
               for i in entry_classes]
    payloads = []
    if with_payloads:
        if rng.random() < 0.3:
            payloads.append(payload("assets/runme.png", ELF_MAGIC + rng.randbytes(24)))
        if rng.random() < 0.3:
            payloads.append(payload("res/drawable/icon.png", PNG_MAGIC + rng.randbytes(16)))
    return build_app(classes, table, entries, package=pkg.replace("/", "."), payloads=payloads)
