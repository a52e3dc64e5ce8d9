"""Turn app inputs into a validated AppIR.

Two input forms are accepted:

* a smali bundle: ``*.smali`` text files, one ``manifest.txt`` and any other
  files (treated as candidate payloads and typed by magic number);
* an AIR JSON document, the interchange form used by fixtures and tests.

Only the ``.class`` / ``.super`` / ``.method`` / ``.end method`` / ``invoke-*``
subset of smali is interpreted. Everything else inside a class is counted in
``AppIR.ignored_lines`` and otherwise skipped.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import logging
import re
import tarfile
from pathlib import Path
from typing import Mapping

import jsonschema

from .apitable import ApiTable
from .errors import ParseError, SchemaError, ValidationError
from .ir import (
    AppIR,
    CallSite,
    ClassIR,
    MethodIR,
    PayloadFile,
    expand_entry_points,
    mark_entries,
    method_ref,
    resolve_kinds,
    validate,
)
from .magic import detect_file_type

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.txt"
AIR_VERSION = 1

_CLASS_RE = re.compile(r"^\.class\b.*\s(L[^\s;]+;)\s*$")
_METHOD_RE = re.compile(r"^\.method\b(.*)$")
_INVOKE_RE = re.compile(
    r"^invoke-(?:virtual|direct|static|interface|super)(?:/range)?\s+\{[^}]*\}\s*,\s*(\S+)\s*$"
)
_KNOWN_NOOP = (".super", ".source", ".implements")


def normalize_target(raw: str) -> str:
    """``Lcom/a/B;->foo(I)V`` -> ``com/a/B;->foo``."""
    cls, sep, rest = raw.partition(";->")
    if not sep:
        raise ValueError(f"invoke target without '->': {raw!r}")
    if cls.startswith("L"):
        cls = cls[1:]
    name = rest.split("(", 1)[0]
    return f"{cls};->{name}"


def _canonical_text(data: str | bytes) -> bytes:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data.replace("\r\n", "\n").replace("\r", "\n").encode("utf-8")


def bundle_digest(texts: Mapping[str, str | bytes], binaries: Mapping[str, bytes]) -> str:
    """MD5 over every file, sorted by name; text files are LF-normalized first."""
    items = [(name, _canonical_text(body)) for name, body in texts.items()]
    items += [(name, bytes(body)) for name, body in binaries.items()]
    h = hashlib.md5()
    for name, body in sorted(items):
        h.update(name.encode("utf-8") + b"\0" + str(len(body)).encode("ascii") + b"\0")
        h.update(body)
    return h.hexdigest()


def parse_smali(text: str, source: str = "<smali>") -> tuple[list[ClassIR], int]:
    """Parse one smali document. Returns its classes and the ignored-line count."""
    classes: list[ClassIR] = []
    ignored = 0
    cls_name: str | None = None
    methods: list[MethodIR] = []
    cur: tuple[str, str, int] | None = None  # name, descriptor, opening line
    calls: list[CallSite] = []

    def close_class():
        if cls_name is not None:
            classes.append(ClassIR(cls_name, tuple(methods)))

    for lineno, raw in enumerate(_canonical_text(text).decode("utf-8").split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith(".class"):
            if cur is not None:
                raise ParseError(".class inside an unterminated .method", lineno, source)
            m = _CLASS_RE.match(line)
            if not m:
                raise ParseError("malformed .class directive", lineno, source)
            close_class()
            cls_name, methods = m.group(1)[1:-1], []
            continue
        if line.startswith(".end method"):
            if cur is None:
                raise ParseError(".end method without matching .method", lineno, source)
            methods.append(MethodIR(cur[0], cur[1], tuple(calls)))
            cur, calls = None, []
            continue
        if _METHOD_RE.match(line):
            if cls_name is None:
                raise ParseError(".method before any .class", lineno, source)
            if cur is not None:
                raise ParseError(
                    f".method nested inside .method opened on line {cur[2]}", lineno, source
                )
            sig = line.split()[-1]
            if "(" not in sig:
                raise ParseError("malformed .method directive", lineno, source)
            name, _, desc = sig.partition("(")
            cur, calls = (name, "(" + desc, lineno), []
            continue
        if line.startswith("invoke-"):
            m = _INVOKE_RE.match(line)
            if m is None:
                ignored += 1  # invoke-polymorphic, invoke-custom, ...
                continue
            if cur is None:
                raise ParseError("invoke outside of a method body", lineno, source)
            try:
                calls.append(CallSite(normalize_target(m.group(1))))
            except ValueError as exc:
                raise ParseError(str(exc), lineno, source) from None
            continue
        if line.startswith(_KNOWN_NOOP) and cur is None:
            continue
        ignored += 1
    if cur is not None:
        raise ParseError(f".method opened on line {cur[2]} is never closed", None, source)
    close_class()
    return classes, ignored


def parse_manifest(text: str, source: str = MANIFEST_NAME) -> dict:
    out = {"package": "", "permissions": set(), "receivers": [], "entries": []}
    for lineno, raw in enumerate(_canonical_text(text).decode("utf-8").split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ParseError("expected key=value", lineno, source)
        if key == "package":
            out["package"] = value
        elif key == "permission":
            out["permissions"].add(value)
        elif key == "receiver":
            out["receivers"].append(value)
        elif key == "entry":
            out["entries"].append(value)
        else:
            raise ParseError(f"unknown manifest key {key!r}", lineno, source)
    return out


def parse_smali_bundle(
    documents: Mapping[str, str | bytes],
    manifest: str | bytes,
    table: ApiTable | None = None,
    payloads: Mapping[str, bytes] | None = None,
) -> AppIR:
    payloads = dict(payloads or {})
    table = table if table is not None else ApiTable()
    classes: list[ClassIR] = []
    ignored = 0
    for name in sorted(documents):
        found, n = parse_smali(_canonical_text(documents[name]).decode("utf-8"), source=name)
        classes.extend(found)
        ignored += n
    if ignored:
        log.warning("skipped %d smali lines outside the supported subset", ignored)
    man = parse_manifest(manifest if isinstance(manifest, str) else manifest.decode("utf-8"))
    resolved = resolve_kinds(classes, table)
    texts = dict(documents)
    texts[MANIFEST_NAME] = manifest
    app_id = bundle_digest(texts, payloads)
    seen: set[str] = set()
    for c in resolved:
        if c.name in seen:
            raise ValidationError(f"duplicate class definition {c.name!r}")
        seen.add(c.name)
    entries = expand_entry_points(resolved, man["entries"])
    app = AppIR(
        app_id=app_id,
        package_name=man["package"],
        declared_permissions=frozenset(man["permissions"]),
        receivers=tuple(man["receivers"]),
        entry_points=entries,
        classes=mark_entries(resolved, entries),
        payloads=tuple(
            PayloadFile(path, bytes(data), detect_file_type(bytes(data)))
            for path, data in sorted(payloads.items())
        ),
        ignored_lines=ignored,
    )
    return validate(app)


# -- AIR JSON -----------------------------------------------------------------

_CLASS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "methods": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "descriptor"],
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "descriptor": {"type": "string"},
                    "calls": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["target"],
                            "properties": {"target": {"type": "string", "pattern": ";->"}},
                        },
                    },
                    "is_entry": {"type": "boolean"},
                },
            },
        },
    },
}

AIR_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["app_id", "package", "classes"],
    "$defs": {"class": _CLASS_SCHEMA},
    "properties": {
        "air_version": {"const": AIR_VERSION},
        "app_id": {"type": "string", "pattern": "^[0-9a-f]{32}$"},
        "package": {"type": "string"},
        "permissions": {"type": "array", "items": {"type": "string"}},
        "receivers": {"type": "array", "items": {"type": "string"}},
        "entry_points": {"type": "array", "items": {"type": "string"}},
        "classes": {"type": "array", "items": {"$ref": "#/$defs/class"}},
        "payloads": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["path", "bytes_b64"],
                "properties": {
                    "path": {"type": "string"},
                    "bytes_b64": {"type": "string", "contentEncoding": "base64"},
                    "embedded_classes": {"type": "array", "items": {"$ref": "#/$defs/class"}},
                },
            },
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(AIR_SCHEMA)


def _json_path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def check_air(doc) -> None:
    errors = list(_VALIDATOR.iter_errors(doc))
    if not errors:
        return
    first = min(errors, key=lambda e: [(0, p) if isinstance(p, int) else (1, p)
                                       for p in e.absolute_path])
    raise SchemaError(first.message, _json_path(first.absolute_path))


def _classes_from_air(items, table: ApiTable) -> tuple[ClassIR, ...]:
    classes = tuple(
        ClassIR(
            c["name"],
            tuple(
                MethodIR(
                    m["name"],
                    m["descriptor"],
                    tuple(CallSite(call["target"]) for call in m.get("calls", [])),
                    bool(m.get("is_entry", False)),
                )
                for m in c.get("methods", [])
            ),
        )
        for c in items
    )
    return resolve_kinds(classes, table)


def air_to_app(doc: dict, table: ApiTable | None = None) -> AppIR:
    check_air(doc)
    table = table if table is not None else ApiTable()
    classes = _classes_from_air(doc["classes"], table)
    seen: set[str] = set()
    for c in classes:
        if c.name in seen:
            raise ValidationError(f"duplicate class definition {c.name!r}")
        seen.add(c.name)
    flagged = [method_ref(c.name, m.name, m.descriptor)
               for c in classes for m in c.methods if m.is_entry]
    entries = expand_entry_points(classes, list(doc.get("entry_points", [])) + flagged)
    payloads = []
    for i, p in enumerate(doc.get("payloads", [])):
        try:
            data = base64.b64decode(p["bytes_b64"], validate=True)
        except ValueError:
            raise SchemaError("invalid base64", f"$.payloads[{i}].bytes_b64") from None
        embedded = p.get("embedded_classes")
        payloads.append(PayloadFile(
            p["path"], data, detect_file_type(data),
            None if embedded is None else _classes_from_air(embedded, table),
        ))
    app = AppIR(
        app_id=doc["app_id"],
        package_name=doc["package"],
        declared_permissions=frozenset(doc.get("permissions", [])),
        receivers=tuple(doc.get("receivers", [])),
        entry_points=entries,
        classes=mark_entries(classes, entries),
        payloads=tuple(payloads),
    )
    return validate(app)


def parse_air_json(document: str | bytes, table: ApiTable | None = None) -> AppIR:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno, "<air>") from None
    return air_to_app(doc, table)


def _classes_to_air(classes) -> list[dict]:
    return [
        {
            "name": c.name,
            "methods": [
                {
                    "name": m.name,
                    "descriptor": m.descriptor,
                    "calls": [{"target": cs.target} for cs in m.instructions],
                    "is_entry": m.is_entry,
                }
                for m in c.methods
            ],
        }
        for c in classes
    ]


def app_to_air(app: AppIR) -> dict:
    payloads = []
    for p in app.payloads:
        item = {"path": p.path, "bytes_b64": base64.b64encode(p.data).decode("ascii")}
        if p.embedded_classes is not None:
            item["embedded_classes"] = _classes_to_air(p.embedded_classes)
        payloads.append(item)
    return {
        "air_version": AIR_VERSION,
        "app_id": app.app_id,
        "package": app.package_name,
        "permissions": sorted(app.declared_permissions),
        "receivers": list(app.receivers),
        "entry_points": sorted(app.entry_points),
        "classes": _classes_to_air(app.classes),
        "payloads": payloads,
    }


def dump_air(app: AppIR) -> str:
    return json.dumps(app_to_air(app), sort_keys=True, indent=1) + "\n"


def content_id(app: AppIR) -> str:
    """MD5 over the canonical AIR form, ignoring the stored app_id."""
    doc = app_to_air(app)
    del doc["app_id"]
    return hashlib.md5(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()


# -- readers ------------------------------------------------------------------

def _split_bundle_files(files: Mapping[str, bytes]):
    if MANIFEST_NAME not in files:
        raise ParseError(f"bundle has no {MANIFEST_NAME}")
    docs = {n: b for n, b in files.items() if n.endswith(".smali")}
    other = {n: b for n, b in files.items() if n != MANIFEST_NAME and n not in docs}
    return docs, files[MANIFEST_NAME], other


def read_bundle_files(path: str | Path) -> dict[str, bytes]:
    path = Path(path)
    files: dict[str, bytes] = {}
    if path.is_dir():
        for f in sorted(path.rglob("*")):
            if f.is_file():
                files[f.relative_to(path).as_posix()] = f.read_bytes()
    elif tarfile.is_tarfile(path):
        with tarfile.open(path) as tf:
            for member in tf.getmembers():
                if member.isfile():
                    fh = tf.extractfile(member)
                    name = member.name[2:] if member.name.startswith("./") else member.name
                    files[name] = fh.read()
    else:
        raise ParseError(f"{path} is neither a directory nor a tar archive")
    return files


def load_app(path: str | Path, table: ApiTable | None = None) -> AppIR:
    """Load an AIR ``.json`` file, a smali bundle directory, or a tar of one."""
    path = Path(path)
    if path.is_file() and path.suffix == ".json":
        return parse_air_json(path.read_bytes(), table)
    docs, manifest, other = _split_bundle_files(read_bundle_files(path))
    try:
        texts = {n: b.decode("utf-8") for n, b in docs.items()}
        manifest_text = manifest.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"bundle text is not UTF-8: {exc}") from None
    return parse_smali_bundle(texts, manifest_text, table, other)


def write_smali_bundle(app: AppIR, out_dir: str | Path) -> Path:
    """Render an AppIR back into the smali subset plus manifest and payload files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for c in app.classes:
        lines = [f".class public L{c.name};", ".super Ljava/lang/Object;", ""]
        for m in c.methods:
            lines.append(f".method public {m.name}{m.descriptor}")
            for cs in m.instructions:
                cls, _, name = cs.target.partition(";->")
                lines.append(f"    invoke-virtual {{}}, L{cls};->{name}()V")
            lines += [".end method", ""]
        dest = out / (c.name + ".smali")
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_text("\n".join(lines), encoding="utf-8")
    man = [f"package={app.package_name}"]
    man += [f"permission={p}" for p in sorted(app.declared_permissions)]
    man += [f"receiver={r}" for r in app.receivers]
    man += [f"entry={e}" for e in sorted(app.entry_points)]
    (out / MANIFEST_NAME).write_text("\n".join(man) + "\n", encoding="utf-8")
    for p in app.payloads:
        dest = out / p.path.lstrip("/")
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_bytes(p.data)
    return out


def app_from_bytes(files: Mapping[str, bytes], table: ApiTable | None = None) -> AppIR:
    docs, manifest, other = _split_bundle_files(files)
    return parse_smali_bundle(
        {n: b.decode("utf-8") for n, b in docs.items()}, manifest.decode("utf-8"), table, other
    )


def tar_bytes(files: Mapping[str, bytes]) -> bytes:
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w") as tf:
        for name in sorted(files):
            info = tarfile.TarInfo(name)
            info.size = len(files[name])
            tf.addfile(info, io.BytesIO(files[name]))
    return buf.getvalue()
