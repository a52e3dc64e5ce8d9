"""Append-only signature store.

Layout of a store directory::

    records.jsonl      one SignatureBundle record per line, never rewritten
    labels.jsonl       one scanner verdict per line
    index/lev1.idx     Lev1 digest -> app ids
    index/lev2.idx     Lev2 digest -> app ids

Index files are derived data. Each carries the record count and byte size of
``records.jsonl`` it was built from and is rebuilt on open when those no
longer match. A single writer is assumed; readers see the snapshot taken at
open time.
"""

from __future__ import annotations

import json
import os
import tempfile
import time
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .analytics import merge_labels
from .errors import DuplicateRecordError, ParseError, StoreError
from .signature import SignatureBundle, bundle_from_json, bundle_to_json, with_label

RECORDS = "records.jsonl"
LABELS = "labels.jsonl"
INDEX_DIR = "index"
VALID_LABELS = ("benign", "malicious")


@dataclass
class StoreRecord:
    bundle: SignatureBundle
    label: str = "unknown"
    label_source: str = ""
    ingest_time: float = 0.0


@dataclass
class StoreIndex:
    by_lev1: dict[str, list[str]] = field(default_factory=dict)
    by_lev2: dict[str, list[str]] = field(default_factory=dict)
    by_md5: dict[str, int] = field(default_factory=dict)  # app_id -> record ordinal
    by_package: dict[str, list[str]] = field(default_factory=dict)

    @classmethod
    def build(cls, bundles: list[SignatureBundle]) -> "StoreIndex":
        idx = cls()
        for n, b in enumerate(bundles):
            idx.add(b, n)
        return idx

    def add(self, b: SignatureBundle, ordinal: int) -> None:
        self.by_md5[b.app_id] = ordinal
        _add_sorted(self.by_lev1.setdefault(b.lev1, []), b.app_id)
        _add_sorted(self.by_package.setdefault(b.package_name, []), b.app_id)
        for d in {c.sig.digest for c in b.classes}:
            _add_sorted(self.by_lev2.setdefault(d, []), b.app_id)


def _add_sorted(items: list[str], value: str) -> None:
    if value not in items:
        items.append(value)
        items.sort()


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _append_line(path: Path, line: str) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def parse_label_document(document: str) -> list[tuple[str, str, str]]:
    """Parse ``<app_id>\\t<benign|malicious>\\t<source>`` lines."""
    out = []
    for lineno, raw in enumerate(document.splitlines(), start=1):
        line = raw.strip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3 or not parts[0].strip():
            raise ParseError("expected '<app_id>\\t<benign|malicious>\\t<source>'", lineno, "labels")
        app_id, label, source = (p.strip() for p in parts)
        if label not in VALID_LABELS:
            raise ParseError(f"unknown label {label!r}", lineno, "labels")
        out.append((app_id, label, source))
    return out


class SignatureStore:
    def __init__(self, root: str | Path, create: bool = True):
        self.root = Path(root)
        if not self.root.exists():
            if not create:
                raise StoreError(f"no store at {self.root}")
            self.root.mkdir(parents=True)
        elif not self.root.is_dir():
            raise StoreError(f"{self.root} is not a directory")
        self._records: list[StoreRecord] = []
        self._labels: dict[str, list[tuple[str, str]]] = defaultdict(list)
        self._load()

    # -- loading --------------------------------------------------------------

    @property
    def records_path(self) -> Path:
        return self.root / RECORDS

    def _load(self) -> None:
        path = self.records_path
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    if not line.endswith("\n"):
                        break  # torn tail from an interrupted append; never acknowledged
                    if not line.strip():
                        continue
                    try:
                        doc = json.loads(line)
                        bundle = bundle_from_json(doc["bundle"])
                    except (ValueError, KeyError) as exc:
                        raise StoreError(f"{path}:{lineno}: corrupt record ({exc})") from None
                    self._records.append(
                        StoreRecord(bundle, ingest_time=doc.get("ingest_time", 0.0),
                                    label_source=doc.get("label_source", ""))
                    )
        labels = self.root / LABELS
        if labels.exists():
            for line in labels.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    doc = json.loads(line)
                    self._labels[doc["app_id"]].append((doc["label"], doc.get("source", "")))
        self._by_id = {r.bundle.app_id: r for r in self._records}
        self.index = self._load_index()

    def _stamp(self) -> dict:
        size = self.records_path.stat().st_size if self.records_path.exists() else 0
        return {"records": len(self._records), "size": size}

    def _load_index(self) -> StoreIndex:
        stamp = self._stamp()
        idx = StoreIndex.build([r.bundle for r in self._records])
        try:
            stored = {}
            for name in ("lev1", "lev2"):
                doc = json.loads((self.root / INDEX_DIR / f"{name}.idx").read_text(encoding="utf-8"))
                if doc.get("stamp") != stamp:
                    raise ValueError("stale")
                stored[name] = doc["map"]
            if stored["lev1"] == idx.by_lev1 and stored["lev2"] == idx.by_lev2:
                return idx
        except (OSError, ValueError, KeyError):
            pass
        self._write_index(idx)
        return idx

    def _write_index(self, idx: StoreIndex) -> None:
        stamp = self._stamp()
        for name, mapping in (("lev1", idx.by_lev1), ("lev2", idx.by_lev2)):
            _atomic_write(
                self.root / INDEX_DIR / f"{name}.idx",
                json.dumps({"stamp": stamp, "map": mapping}, sort_keys=True) + "\n",
            )

    def rebuild_index(self) -> StoreIndex:
        return StoreIndex.build([r.bundle for r in self._records])

    # -- writes ---------------------------------------------------------------

    def insert(self, bundle: SignatureBundle, label: str | None = None, label_source: str = "") -> str:
        existing = self._by_id.get(bundle.app_id)
        if existing is not None:
            raise DuplicateRecordError(bundle.app_id, bundle_to_json(existing.bundle))
        bundle = with_label(bundle, None)
        record = StoreRecord(bundle, label_source=label_source, ingest_time=time.time())
        line = json.dumps(
            {
                "app_id": bundle.app_id,
                "bundle": bundle_to_json(bundle),
                "label_source": label_source,
                "ingest_time": record.ingest_time,
            },
            sort_keys=True,
        )
        _append_line(self.records_path, line)
        self._records.append(record)
        self._by_id[bundle.app_id] = record
        self.index.add(bundle, len(self._records) - 1)
        self._write_index(self.index)
        if label is not None:
            self._add_labels([(bundle.app_id, label, label_source)])
        return bundle.app_id

    def _add_labels(self, rows) -> None:
        text = "".join(
            json.dumps({"app_id": a, "label": lab, "source": src}, sort_keys=True) + "\n"
            for a, lab, src in rows
        )
        if text:
            with open(self.root / LABELS, "a", encoding="utf-8") as fh:
                fh.write(text)
                fh.flush()
                os.fsync(fh.fileno())
        for a, lab, src in rows:
            self._labels[a].append((lab, src))

    def import_labels(self, document: str) -> tuple[int, list[str]]:
        """Apply a label file. Returns (labels applied, app ids not in the store)."""
        rows = parse_label_document(document)
        known = [r for r in rows if r[0] in self._by_id]
        unknown = sorted({r[0] for r in rows if r[0] not in self._by_id})
        self._add_labels(known)
        return len(known), unknown

    # -- reads ----------------------------------------------------------------

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, app_id: str) -> bool:
        return app_id in self._by_id

    def app_ids(self) -> list[str]:
        return sorted(self._by_id)

    def label(self, app_id: str) -> str:
        return merge_labels(lab for lab, _ in self._labels.get(app_id, ()))

    def label_sources(self, app_id: str) -> list[str]:
        return sorted({src for _, src in self._labels.get(app_id, ())})

    def get(self, app_id: str) -> SignatureBundle:
        try:
            rec = self._by_id[app_id]
        except KeyError:
            raise StoreError(f"app {app_id} is not in the store") from None
        label = self.label(app_id)
        return with_label(rec.bundle, None if label == "unknown" else label)

    def get_record(self, app_id: str) -> StoreRecord:
        rec = self._by_id[app_id]
        return StoreRecord(self.get(app_id), self.label(app_id),
                           ",".join(self.label_sources(app_id)) or rec.label_source,
                           rec.ingest_time)

    def bundles(self) -> Iterator[SignatureBundle]:
        for app_id in self.app_ids():
            yield self.get(app_id)

    def apps_with_class(self, digest: str) -> list[str]:
        return list(self.index.by_lev2.get(digest, ()))

    def apps_with_lev1(self, digest: str) -> list[str]:
        return list(self.index.by_lev1.get(digest, ()))

    def apps_with_package(self, package: str) -> list[str]:
        return list(self.index.by_package.get(package, ()))

    def query_lev1_frequency(self) -> list[tuple[str, int]]:
        counts = Counter({d: len(ids) for d, ids in self.index.by_lev1.items()})
        return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))

    def labels_map(self) -> dict[str, str]:
        return {a: self.label(a) for a in self.app_ids()}


def query_lev1_frequency(store: SignatureStore) -> list[tuple[str, int]]:
    return store.query_lev1_frequency()
