"""Immutable intermediate representation of one app (AppIR and its parts)."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Literal

from .errors import ValidationError

CallKind = Literal["api", "internal"]
FileType = Literal["elf", "dex", "zipjar", "apk", "png", "unknown"]

_HEX32 = re.compile(r"^[0-9a-f]{32}$")


def split_target(target: str) -> tuple[str, str]:
    """``com/a/B;->foo`` -> (``com/a/B``, ``foo``)."""
    cls, sep, name = target.partition(";->")
    if not sep:
        raise ValueError(f"not a full-path method: {target!r}")
    return cls, name


def method_ref(cls: str, name: str, descriptor: str) -> str:
    return f"{cls};->{name}{descriptor}"


def parse_method_ref(ref: str) -> tuple[str, str, str | None]:
    """Split ``[L]cls;->name[(args)ret]`` into (cls, name, descriptor or None)."""
    ref = ref.strip()
    cls, sep, rest = ref.partition(";->")
    if not sep or not cls or not rest:
        raise ValueError(f"malformed method reference: {ref!r}")
    if cls.startswith("L"):
        cls = cls[1:]
    paren = rest.find("(")
    if paren < 0:
        return cls, rest, None
    return cls, rest[:paren], rest[paren:]


@dataclass(frozen=True)
class CallSite:
    target: str
    kind: CallKind = "internal"


@dataclass(frozen=True)
class MethodIR:
    name: str
    descriptor: str
    instructions: tuple[CallSite, ...] = ()
    is_entry: bool = False

    @property
    def key(self) -> tuple[str, str]:
        return self.name, self.descriptor


@dataclass(frozen=True)
class ClassIR:
    name: str
    methods: tuple[MethodIR, ...] = ()

    def method(self, name: str, descriptor: str) -> MethodIR | None:
        for m in self.methods:
            if m.name == name and m.descriptor == descriptor:
                return m
        return None


@dataclass(frozen=True)
class PayloadFile:
    path: str
    data: bytes
    detected_type: FileType = "unknown"
    embedded_classes: tuple[ClassIR, ...] | None = None


@dataclass(frozen=True)
class AppIR:
    app_id: str
    package_name: str = ""
    declared_permissions: frozenset[str] = frozenset()
    receivers: tuple[str, ...] = ()
    entry_points: frozenset[str] = frozenset()
    classes: tuple[ClassIR, ...] = ()
    payloads: tuple[PayloadFile, ...] = ()
    ignored_lines: int = field(default=0, compare=False)

    def class_named(self, name: str) -> ClassIR | None:
        for c in self.classes:
            if c.name == name:
                return c
        return None

    def iter_methods(self) -> Iterator[tuple[ClassIR, MethodIR]]:
        for c in self.classes:
            for m in c.methods:
                yield c, m


def resolve_kinds(classes: Iterable[ClassIR], table) -> tuple[ClassIR, ...]:
    """Recompute every CallSite kind against ``table``; input kinds are ignored."""
    out = []
    for c in classes:
        methods = []
        for m in c.methods:
            calls = tuple(
                CallSite(cs.target, "api" if table.lookup(cs.target) is not None else "internal")
                for cs in m.instructions
            )
            methods.append(replace(m, instructions=calls))
        out.append(replace(c, methods=tuple(methods)))
    return tuple(out)


def rebind(app: AppIR, table) -> AppIR:
    payloads = tuple(
        p if p.embedded_classes is None
        else replace(p, embedded_classes=resolve_kinds(p.embedded_classes, table))
        for p in app.payloads
    )
    return replace(app, classes=resolve_kinds(app.classes, table), payloads=payloads)


def expand_entry_points(classes: Iterable[ClassIR], refs: Iterable[str]) -> frozenset[str]:
    """Normalize entry references to full ``cls;->name(desc)ret`` form.

    A reference without a descriptor names every overload of that method.
    Unknown references raise ValidationError.
    """
    by_name = {c.name: c for c in classes}
    out: set[str] = set()
    for ref in refs:
        try:
            cls, name, desc = parse_method_ref(ref)
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
        c = by_name.get(cls)
        matches = [] if c is None else [
            m for m in c.methods if m.name == name and (desc is None or m.descriptor == desc)
        ]
        if not matches:
            raise ValidationError(f"entry point {ref!r} does not name a method in the app")
        out.update(method_ref(cls, m.name, m.descriptor) for m in matches)
    return frozenset(out)


def mark_entries(classes: Iterable[ClassIR], entry_points: frozenset[str]) -> tuple[ClassIR, ...]:
    return tuple(
        replace(c, methods=tuple(
            replace(m, is_entry=method_ref(c.name, m.name, m.descriptor) in entry_points)
            for m in c.methods
        ))
        for c in classes
    )


def _check_classes(classes: Iterable[ClassIR], where: str) -> None:
    names: set[str] = set()
    for c in classes:
        if c.name in names:
            raise ValidationError(f"{where}: duplicate class {c.name!r}")
        names.add(c.name)
        keys: set[tuple[str, str]] = set()
        for m in c.methods:
            if m.key in keys:
                raise ValidationError(f"{where}: duplicate method {c.name};->{m.name}{m.descriptor}")
            keys.add(m.key)


def validate(app: AppIR) -> AppIR:
    if not _HEX32.match(app.app_id):
        raise ValidationError(f"app_id must be 32 lowercase hex chars, got {app.app_id!r}")
    _check_classes(app.classes, "classes")
    known = {method_ref(c.name, m.name, m.descriptor) for c, m in app.iter_methods()}
    missing = sorted(app.entry_points - known)
    if missing:
        raise ValidationError(f"entry point {missing[0]!r} does not name a method in the app")
    for p in app.payloads:
        if p.embedded_classes is not None:
            _check_classes(p.embedded_classes, f"payload {p.path}")
    return app
