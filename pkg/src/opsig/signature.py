"""Three-level signatures: method (Lev3), class or payload (Lev2), app (Lev1).

A Lev3 digest hashes the method's API IDs in call order, each rendered as
five lowercase hex digits with no separator. Lev2 hashes the sorted Lev3
digests of a class's live methods; Lev1 hashes the sorted Lev2 digests of the
app. Sorting at both upper levels is what makes the result independent of
method and class ordering.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable

from .apitable import ApiTable, render_id
from .callgraph import ReachabilitySet, compute_reachability
from .ir import AppIR, ClassIR, MethodIR, PayloadFile, rebind
from .magic import EXECUTABLE_TYPES

log = logging.getLogger(__name__)

DEFAULT_HASH = "md5"
MAX_NESTED_DEPTH = 2


def digest(data: str | bytes, hash_name: str = DEFAULT_HASH) -> str:
    if isinstance(data, str):
        data = data.encode("ascii")
    return hashlib.new(hash_name, data).hexdigest()


def table_fingerprint(table: ApiTable, exclude: Iterable[str] = (), hash_name: str = DEFAULT_HASH) -> str:
    """Identifies the signing alphabet; bundles with different fingerprints are not comparable."""
    h = hashlib.sha256(table.fingerprint().encode())
    for item in sorted(exclude):
        h.update(b"\0-" + item.encode("utf-8"))
    h.update(b"\0#" + hash_name.encode())
    return h.hexdigest()[:16]


@dataclass(frozen=True, order=True)
class MethodSig:
    digest: str
    api_count: int
    id_string: str


@dataclass(frozen=True, order=True)
class ClassSig:
    digest: str
    api_count: int
    origin: str = "code"  # code | payload_native | payload_apk


@dataclass(frozen=True)
class AppSig:
    digest: str
    class_sigs: tuple[ClassSig, ...]


@dataclass(frozen=True)
class MethodRecord:
    name: str
    descriptor: str
    sig: MethodSig
    permissions: frozenset[str] = frozenset()


@dataclass(frozen=True)
class ClassRecord:
    name: str
    sig: ClassSig
    methods: tuple[MethodRecord, ...] = ()
    permissions: frozenset[str] = frozenset()


@dataclass(frozen=True)
class SignatureBundle:
    app_id: str
    package_name: str
    app_sig: AppSig
    classes: tuple[ClassRecord, ...]
    table_fingerprint: str
    hash_name: str = DEFAULT_HASH
    degenerate: bool = False
    permissions: frozenset[str] = frozenset()
    nested: tuple["SignatureBundle", ...] = ()
    label: str | None = None

    @property
    def lev1(self) -> str:
        return self.app_sig.digest

    @property
    def api_count(self) -> int:
        return sum(c.sig.api_count for c in self.classes)

    def class_digests(self) -> dict[str, int]:
        return {c.sig.digest: c.sig.api_count for c in self.classes}


@dataclass(frozen=True)
class Signer:
    table: ApiTable
    exclude: frozenset[str] = frozenset()
    hash_name: str = DEFAULT_HASH
    keep_dead: bool = False
    max_depth: int = MAX_NESTED_DEPTH
    fingerprint: str = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "fingerprint", table_fingerprint(self.table, self.exclude, self.hash_name))

    def sign(self, app: AppIR, pmap=None) -> SignatureBundle:
        bundle = lev1_sign(app, self.table, self.exclude, self.hash_name, self.keep_dead, self.max_depth)
        if pmap is not None:
            from .analytics import annotate_permissions, apply_permissions
            bundle = apply_permissions(bundle, annotate_permissions(bundle, app, pmap, self.table))
        return bundle


def lev3_sign(
    method: MethodIR,
    table: ApiTable,
    exclude: frozenset[str] | None = None,
    hash_name: str = DEFAULT_HASH,
) -> MethodSig | None:
    ids = []
    for cs in method.instructions:
        if exclude and cs.target in exclude:
            continue
        value = table.lookup(cs.target)
        if value is not None:
            ids.append(render_id(value))
    if not ids:
        return None
    id_string = "".join(ids)
    return MethodSig(digest(id_string, hash_name), len(ids), id_string)


def _class_record(
    cls: ClassIR,
    methods: Iterable[MethodIR],
    table: ApiTable,
    exclude,
    hash_name: str,
    name: str | None = None,
) -> ClassRecord | None:
    records = []
    for m in methods:
        sig = lev3_sign(m, table, exclude, hash_name)
        if sig is not None:
            records.append(MethodRecord(m.name, m.descriptor, sig))
    if not records:
        return None
    records.sort(key=lambda r: (r.sig.digest, r.name, r.descriptor))
    sig = ClassSig(
        digest("".join(r.sig.digest for r in records), hash_name),
        sum(r.sig.api_count for r in records),
        "code",
    )
    return ClassRecord(name or cls.name, sig, tuple(records))


def lev2_sign(
    cls: ClassIR,
    live: ReachabilitySet | None,
    table: ApiTable,
    exclude: frozenset[str] | None = None,
    hash_name: str = DEFAULT_HASH,
) -> ClassSig | None:
    """Class signature over the live methods of ``cls``; ``live=None`` treats all as live."""
    rec = lev2_record(cls, live, table, exclude, hash_name)
    return None if rec is None else rec.sig


def lev2_record(cls, live, table, exclude=None, hash_name=DEFAULT_HASH) -> ClassRecord | None:
    methods = [m for m in cls.methods
               if live is None or live.is_live(cls.name, m.name, m.descriptor)]
    return _class_record(cls, methods, table, exclude, hash_name)


def payload_sign(
    payload: PayloadFile,
    table: ApiTable,
    exclude: frozenset[str] | None = None,
    hash_name: str = DEFAULT_HASH,
) -> tuple[list[ClassRecord], AppIR | None]:
    """Class records contributed by one payload, plus a nested app for apk payloads.

    Embedded classes are always treated as live: no entry points are known
    for code that is loaded at run time.
    """
    kind = payload.detected_type
    if kind not in EXECUTABLE_TYPES:
        return [], None
    if kind in ("dex", "zipjar") and payload.embedded_classes is not None:
        out = []
        for c in payload.embedded_classes:
            rec = _class_record(c, c.methods, table, exclude, hash_name, name=f"{payload.path}!{c.name}")
            if rec is not None:
                out.append(rec)
        return out, None
    origin = "payload_apk" if kind == "apk" else "payload_native"
    rec = ClassRecord(payload.path, ClassSig(digest(payload.data, hash_name), 0, origin))
    nested = None
    if kind == "apk":
        if payload.embedded_classes is None:
            log.warning("apk payload %s carries no embedded code; nested analysis skipped", payload.path)
        else:
            nested = AppIR(
                app_id=hashlib.md5(payload.data).hexdigest(),
                package_name=payload.path,
                classes=payload.embedded_classes,
            )
    return [rec], nested


def lev1_sign(
    app: AppIR,
    table: ApiTable,
    exclude: frozenset[str] | None = None,
    hash_name: str = DEFAULT_HASH,
    keep_dead: bool = False,
    max_depth: int = MAX_NESTED_DEPTH,
    _depth: int = 1,
) -> SignatureBundle:
    exclude = frozenset(exclude or ())
    app = rebind(app, table)
    live = compute_reachability(app, keep_dead=keep_dead)
    records: list[ClassRecord] = []
    for c in app.classes:
        if c.name not in live.live_classes:
            continue
        rec = lev2_record(c, live, table, exclude, hash_name)
        if rec is not None:
            records.append(rec)
    nested_bundles = []
    for p in sorted(app.payloads, key=lambda p: (p.path, p.data)):
        recs, nested = payload_sign(p, table, exclude, hash_name)
        records.extend(recs)
        if nested is not None:
            if _depth < max_depth:
                nested_bundles.append(
                    lev1_sign(nested, table, exclude, hash_name, keep_dead, max_depth, _depth + 1)
                )
            else:
                log.warning("nested apk %s exceeds depth %d; not analysed", p.path, max_depth)
    records.sort(key=lambda r: (r.sig.digest, r.name))
    class_sigs = tuple(r.sig for r in records)
    app_sig = AppSig(digest("".join(s.digest for s in class_sigs), hash_name), class_sigs)
    return SignatureBundle(
        app_id=app.app_id,
        package_name=app.package_name,
        app_sig=app_sig,
        classes=tuple(records),
        table_fingerprint=table_fingerprint(table, exclude, hash_name),
        hash_name=hash_name,
        degenerate=not records,
        nested=tuple(sorted(nested_bundles, key=lambda b: b.app_id)),
    )


# -- JSON ---------------------------------------------------------------------

def _method_json(r: MethodRecord) -> dict:
    return {
        "name": r.name,
        "descriptor": r.descriptor,
        "lev3": r.sig.digest,
        "api_count": r.sig.api_count,
        "id_string": r.sig.id_string,
        "permissions": sorted(r.permissions),
    }


def bundle_to_json(bundle: SignatureBundle) -> dict:
    doc = {
        "app_id": bundle.app_id,
        "package": bundle.package_name,
        "lev1": bundle.lev1,
        "hash": bundle.hash_name,
        "table": bundle.table_fingerprint,
        "degenerate": bundle.degenerate,
        "api_count": bundle.api_count,
        "permissions": sorted(bundle.permissions),
        "classes": [
            {
                "name": c.name,
                "lev2": c.sig.digest,
                "api_count": c.sig.api_count,
                "origin": c.sig.origin,
                "methods": [_method_json(m) for m in c.methods],
                "permissions": sorted(c.permissions),
            }
            for c in bundle.classes
        ],
        "nested": [bundle_to_json(n) for n in bundle.nested],
    }
    if bundle.label is not None:
        doc["label"] = bundle.label
    return doc


def bundle_from_json(doc: dict) -> SignatureBundle:
    classes = tuple(
        ClassRecord(
            c["name"],
            ClassSig(c["lev2"], c["api_count"], c.get("origin", "code")),
            tuple(
                MethodRecord(
                    m["name"],
                    m["descriptor"],
                    MethodSig(m["lev3"], m["api_count"], m.get("id_string", "")),
                    frozenset(m.get("permissions", ())),
                )
                for m in c.get("methods", [])
            ),
            frozenset(c.get("permissions", ())),
        )
        for c in doc["classes"]
    )
    return SignatureBundle(
        app_id=doc["app_id"],
        package_name=doc.get("package", ""),
        app_sig=AppSig(doc["lev1"], tuple(c.sig for c in classes)),
        classes=classes,
        table_fingerprint=doc.get("table", ""),
        hash_name=doc.get("hash", DEFAULT_HASH),
        degenerate=doc.get("degenerate", not classes),
        permissions=frozenset(doc.get("permissions", ())),
        nested=tuple(bundle_from_json(n) for n in doc.get("nested", [])),
        label=doc.get("label"),
    )


def with_label(bundle: SignatureBundle, label: str | None) -> SignatureBundle:
    return replace(bundle, label=label)
