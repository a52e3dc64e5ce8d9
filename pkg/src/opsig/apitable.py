"""API call table, permission map and the optional exclusion filter.

The table maps a framework method in full-path form
(``android/content/Intent;-><init>``) to a numeric ID. IDs are rendered as
fixed-width lowercase hex and concatenated to form method signatures, so the
width is part of the signature encoding and cannot change.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ParseError

ID_WIDTH = 5
MAX_ID = 16**ID_WIDTH

_HEX_RE = re.compile(r"^[0-9a-fA-F]+$")


def render_id(value: int) -> str:
    if not 0 <= value < MAX_ID:
        raise ValueError(f"API id {value:#x} does not fit in {ID_WIDTH} hex digits")
    return f"{value:0{ID_WIDTH}x}"


def parse_id(text: str) -> int:
    if not _HEX_RE.match(text):
        raise ValueError(f"not a hex id: {text!r}")
    value = int(text, 16)
    if value >= MAX_ID:
        raise ValueError(f"id {text} exceeds {ID_WIDTH} hex digits")
    return value


def _data_lines(document: str) -> Iterable[tuple[int, str]]:
    for lineno, raw in enumerate(document.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        yield lineno, line


@dataclass(frozen=True)
class ApiTable:
    entries: Mapping[str, int] = field(default_factory=dict)
    id_width: int = ID_WIDTH

    def __post_init__(self):
        object.__setattr__(self, "entries", dict(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, target: str) -> bool:
        return target in self.entries

    def lookup(self, target: str) -> int | None:
        return self.entries.get(target)

    def render(self, target: str) -> str | None:
        value = self.entries.get(target)
        return None if value is None else render_id(value)

    def inverse(self) -> dict[int, str]:
        return {v: k for k, v in self.entries.items()}

    def dumps(self) -> str:
        return "".join(f"{k}\t{render_id(v)}\n" for k, v in sorted(self.entries.items()))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()[:16]


def load_api_table(document: str, source: str | None = None) -> ApiTable:
    """Parse ``<full-path-method>\\t<hex-id>`` lines.

    Duplicate methods, duplicate IDs and IDs wider than five hex digits are
    rejected with the offending line number.
    """
    entries: dict[str, int] = {}
    seen_ids: dict[int, int] = {}
    first_line: dict[str, int] = {}
    for lineno, line in _data_lines(document):
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].strip():
            raise ParseError("expected '<method>\\t<hex-id>'", lineno, source)
        method, hex_id = parts[0].strip(), parts[1].strip()
        try:
            value = parse_id(hex_id)
        except ValueError as exc:
            raise ParseError(str(exc), lineno, source) from None
        if method in entries:
            raise ParseError(
                f"duplicate method {method!r} (first on line {first_line[method]})", lineno, source
            )
        if value in seen_ids:
            raise ParseError(
                f"duplicate id {render_id(value)} (first on line {seen_ids[value]})", lineno, source
            )
        entries[method] = value
        seen_ids[value] = lineno
        first_line[method] = lineno
    return ApiTable(entries)


def lookup(table: ApiTable, target: str) -> int | None:
    return table.lookup(target)


@dataclass(frozen=True)
class PermissionMap:
    entries: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "entries", {k: frozenset(v) for k, v in self.entries.items()})

    def permissions(self, target: str) -> frozenset[str]:
        return self.entries.get(target, frozenset())

    def __len__(self) -> int:
        return len(self.entries)


def load_permission_map(document: str, source: str | None = None) -> PermissionMap:
    entries: dict[str, set[str]] = {}
    for lineno, line in _data_lines(document):
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].strip():
            raise ParseError("expected '<method>\\t<PERM>[,<PERM>...]'", lineno, source)
        perms = [p.strip() for p in parts[1].split(",")]
        if not all(perms):
            raise ParseError("empty permission name", lineno, source)
        entries.setdefault(parts[0].strip(), set()).update(perms)
    return PermissionMap({k: frozenset(v) for k, v in entries.items()})


def load_api_filter(document: str) -> frozenset[str]:
    """One full-path method per line; these are dropped from signature extraction."""
    return frozenset(line.strip() for _, line in _data_lines(document))


def _bundled(name: str) -> str:
    return resources.files("opsig").joinpath("data", name).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def default_api_table() -> ApiTable:
    return load_api_table(_bundled("api_table.tsv"), source="api_table.tsv")


@lru_cache(maxsize=None)
def default_permission_map() -> PermissionMap:
    return load_permission_map(_bundled("permissions.tsv"), source="permissions.tsv")


def read_api_table(path: str | Path) -> ApiTable:
    path = Path(path)
    return load_api_table(path.read_text(encoding="utf-8"), source=str(path))


def read_permission_map(path: str | Path) -> PermissionMap:
    path = Path(path)
    return load_permission_map(path.read_text(encoding="utf-8"), source=str(path))
