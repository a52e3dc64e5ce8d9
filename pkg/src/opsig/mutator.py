"""Repackaging and obfuscation transforms that must not move the Lev1 signature.

Every transform changes the app's bytes (and therefore its app_id) while
keeping the live API-call sequences intact. Transforms that have nothing to
act on (reordering a single class, inserting dead code into an app with no
declared entry points, where everything counts as live) fall back to a
resource touch so the app_id still changes.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Sequence

from .apitable import ApiTable, default_api_table
from .ingest import content_id
from .ir import AppIR, CallSite, ClassIR, MethodIR, PayloadFile, mark_entries, method_ref, parse_method_ref
from .magic import PNG_MAGIC

KINDS = (
    "reorder_classes",
    "reorder_methods",
    "rename_identifiers",
    "insert_dead_method",
    "insert_dead_class",
    "touch_resources",
)
REPACKAGING = ("reorder_classes", "reorder_methods", "touch_resources")
OBFUSCATION = ("rename_identifiers", "insert_dead_method", "insert_dead_class")
_KEEP_NAMES = ("<init>", "<clinit>")


@dataclass(frozen=True)
class MutationSpec:
    kind: str
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown mutation kind {self.kind!r}")


def _referenced(app: AppIR) -> set[str]:
    names = {c.name for c in app.classes}
    for _, m in app.iter_methods():
        for cs in m.instructions:
            names.add(cs.target)
            names.add(cs.target.partition(";->")[0])
    return names


def _fresh(rng: random.Random, taken: set[str], prefix: str) -> str:
    while True:
        name = f"{prefix}{rng.randrange(16**8):08x}"
        if name not in taken:
            taken.add(name)
            return name


def _shuffled(rng: random.Random, items: Sequence) -> tuple:
    items = list(items)
    if len(items) < 2:
        return tuple(items)
    original = list(items)
    while items == original:
        rng.shuffle(items)
    return tuple(items)


def _reorder_classes(app, rng, table):
    return replace(app, classes=_shuffled(rng, app.classes))


def _reorder_methods(app, rng, table):
    return replace(app, classes=tuple(replace(c, methods=_shuffled(rng, c.methods)) for c in app.classes))


def _touch_resources(app, rng, table):
    blob = PNG_MAGIC + rng.randbytes(rng.randint(8, 64))
    payloads = list(app.payloads)
    pngs = [i for i, p in enumerate(payloads) if p.detected_type == "png"]
    if pngs:
        i = rng.choice(pngs)
        payloads[i] = replace(payloads[i], data=blob)
    else:
        taken = {p.path for p in payloads}
        payloads.append(PayloadFile(_fresh(rng, taken, "res/drawable/img_") + ".png", blob, "png"))
    return replace(app, payloads=tuple(payloads))


def _rename_identifiers(app, rng, table):
    taken = _referenced(app)
    class_map = {c.name: _fresh(rng, taken, "o/") for c in app.classes}
    method_map: dict[tuple[str, str], str] = {}
    for c, m in app.iter_methods():
        key = (c.name, m.name)
        if key not in method_map:
            method_map[key] = m.name if m.name in _KEEP_NAMES else _fresh(rng, taken, "m")

    def retarget(cs: CallSite) -> CallSite:
        if table.lookup(cs.target) is not None:
            return cs
        cls, sep, name = cs.target.partition(";->")
        if not sep or cls not in class_map:
            return cs
        return CallSite(f"{class_map[cls]};->{method_map.get((cls, name), name)}", cs.kind)

    classes = tuple(
        ClassIR(
            class_map[c.name],
            tuple(replace(m, name=method_map[(c.name, m.name)],
                          instructions=tuple(retarget(cs) for cs in m.instructions))
                  for m in c.methods),
        )
        for c in app.classes
    )
    entries = set()
    for ref in app.entry_points:
        cls, name, desc = parse_method_ref(ref)
        entries.add(method_ref(class_map[cls], method_map[(cls, name)], desc))
    return replace(app, classes=mark_entries(classes, frozenset(entries)), entry_points=frozenset(entries))


def _dead_body(rng, table, app) -> tuple[CallSite, ...]:
    apis = sorted(table.entries)
    calls = [CallSite(rng.choice(apis), "api") for _ in range(rng.randint(1, 6))] if apis else []
    live_targets = [f"{c.name};->{m.name}" for c, m in app.iter_methods()]
    if live_targets and rng.random() < 0.5:
        # outgoing edges from dead code are harmless
        calls.insert(rng.randrange(len(calls) + 1), CallSite(rng.choice(live_targets), "internal"))
    return tuple(calls)


def _insert_dead_method(app, rng, table):
    if not app.entry_points:
        return None
    if not app.classes:
        return _insert_dead_class(app, rng, table)
    taken = _referenced(app) | {m.name for _, m in app.iter_methods()}
    i = rng.randrange(len(app.classes))
    host = app.classes[i]
    name = _fresh(rng, taken, "zz")
    dead = MethodIR(name, "()V", _dead_body(rng, table, app))
    methods = list(host.methods)
    methods.insert(rng.randrange(len(methods) + 1), dead)
    classes = list(app.classes)
    classes[i] = replace(host, methods=tuple(methods))
    return replace(app, classes=tuple(classes))


def _insert_dead_class(app, rng, table):
    if not app.entry_points:
        return None
    taken = _referenced(app)
    name = _fresh(rng, taken, "dead/K")
    methods = tuple(
        MethodIR(f"d{j}", "()V", _dead_body(rng, table, app)) for j in range(rng.randint(1, 3))
    )
    classes = list(app.classes)
    classes.insert(rng.randrange(len(classes) + 1), ClassIR(name, methods))
    return replace(app, classes=tuple(classes))


_OPS = {
    "reorder_classes": _reorder_classes,
    "reorder_methods": _reorder_methods,
    "rename_identifiers": _rename_identifiers,
    "insert_dead_method": _insert_dead_method,
    "insert_dead_class": _insert_dead_class,
    "touch_resources": _touch_resources,
}


def mutate(app: AppIR, spec: MutationSpec, table: ApiTable | None = None) -> AppIR:
    table = table if table is not None else default_api_table()
    rng = random.Random(f"{spec.kind}:{spec.seed}")
    out = _OPS[spec.kind](app, rng, table)
    if out is None or content_id(out) == content_id(app):
        out = _touch_resources(out or app, rng, table)
    return replace(out, app_id=content_id(out))


def mutate_chain(app: AppIR, specs: Sequence[MutationSpec], table: ApiTable | None = None) -> AppIR:
    for spec in specs:
        app = mutate(app, spec, table)
    return app


def suite_specs(seed: int) -> list[list[MutationSpec]]:
    """Three repackaging and four obfuscation recipes."""
    return [
        [MutationSpec("reorder_classes", seed)],
        [MutationSpec("reorder_methods", seed)],
        [MutationSpec("touch_resources", seed)],
        [MutationSpec("rename_identifiers", seed)],
        [MutationSpec("insert_dead_method", seed)],
        [MutationSpec("insert_dead_class", seed)],
        [
            MutationSpec("rename_identifiers", seed + 1),
            MutationSpec("insert_dead_method", seed + 1),
            MutationSpec("reorder_methods", seed + 1),
        ],
    ]


def variant_suite(app: AppIR, seed: int = 0, table: ApiTable | None = None) -> list[AppIR]:
    """Seven variants of ``app``, all with distinct app_ids."""
    seen = {app.app_id}
    out = []
    for i, recipe in enumerate(suite_specs(seed)):
        variant = mutate_chain(app, recipe, table)
        bump = 0
        while variant.app_id in seen:
            bump += 1
            variant = mutate(variant, MutationSpec("touch_resources", seed * 1000 + i * 97 + bump), table)
        seen.add(variant.app_id)
        out.append(variant)
    return out
