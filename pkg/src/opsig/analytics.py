"""Similarity scoring, permission recursion and class association."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping

from .apitable import PermissionMap
from .callgraph import compute_reachability
from .errors import TableMismatchError
from .ir import AppIR, method_ref, rebind
from .signature import SignatureBundle

LABELS = ("benign", "malicious", "unknown")
_LABEL_RANK = {"unknown": 0, "benign": 1, "malicious": 2}


def merge_labels(labels: Iterable[str]) -> str:
    """Combine verdicts from several sources: malicious > benign > unknown."""
    best = "unknown"
    for label in labels:
        if _LABEL_RANK[label] > _LABEL_RANK[best]:
            best = label
    return best


@dataclass(frozen=True)
class ClassSigSet:
    """Distinct Lev2 digests of one app mapped to their API-call counts."""

    entries: Mapping[str, int] = field(default_factory=dict)

    @classmethod
    def of(cls, bundle: SignatureBundle, whitelist: Iterable[str] = ()) -> "ClassSigSet":
        wl = frozenset(whitelist)
        return cls({c.sig.digest: c.sig.api_count for c in bundle.classes if c.sig.digest not in wl})

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, d: str) -> bool:
        return d in self.entries

    def __and__(self, other: "ClassSigSet") -> "ClassSigSet":
        return ClassSigSet({d: n for d, n in self.entries.items() if d in other.entries})

    def __or__(self, other: "ClassSigSet") -> "ClassSigSet":
        merged = dict(other.entries)
        merged.update(self.entries)
        return ClassSigSet(merged)

    def __sub__(self, other: "ClassSigSet") -> "ClassSigSet":
        return ClassSigSet({d: n for d, n in self.entries.items() if d not in other.entries})


def S(x: ClassSigSet) -> int:
    """Total API calls in a class-signature set."""
    return sum(x.entries.values())


def filter_whitelist(x: ClassSigSet, whitelist: Iterable[str]) -> ClassSigSet:
    wl = frozenset(whitelist)
    return ClassSigSet({d: n for d, n in x.entries.items() if d not in wl})


@dataclass(frozen=True)
class SimilarityReport:
    score: Fraction
    numerator: int
    denominator: int
    common: tuple[str, ...]
    only_a: tuple[str, ...]
    only_b: tuple[str, ...]
    degenerate: bool = False

    @property
    def score_float(self) -> float:
        return float(self.score)

    def to_json(self) -> dict:
        return {
            "score": self.score_float,
            "ratio": f"{self.numerator}/{self.denominator}",
            "numerator": self.numerator,
            "denominator": self.denominator,
            "common": list(self.common),
            "only_a": list(self.only_a),
            "only_b": list(self.only_b),
            "degenerate": self.degenerate,
        }


def check_comparable(a: SignatureBundle, b: SignatureBundle) -> None:
    if a.table_fingerprint != b.table_fingerprint:
        raise TableMismatchError(
            f"{a.app_id} and {b.app_id} were signed with different API tables "
            f"({a.table_fingerprint} vs {b.table_fingerprint})"
        )


def set_similarity(fa: ClassSigSet, fb: ClassSigSet) -> SimilarityReport:
    common, union = fa & fb, fa | fb
    num, den = S(common), S(union)
    if den == 0:
        # nothing with API mass on either side; identical empty apps score 1
        score, degenerate = Fraction(1 if set(fa) == set(fb) else 0), True
    else:
        score, degenerate = Fraction(num, den), False
    return SimilarityReport(
        score=score,
        numerator=num,
        denominator=den,
        common=tuple(sorted(common)),
        only_a=tuple(sorted(fa - fb)),
        only_b=tuple(sorted(fb - fa)),
        degenerate=degenerate,
    )


def jaccard_similarity(
    a: SignatureBundle, b: SignatureBundle, whitelist: Iterable[str] = ()
) -> SimilarityReport:
    check_comparable(a, b)
    return set_similarity(ClassSigSet.of(a, whitelist), ClassSigSet.of(b, whitelist))


def top_similar(
    target: SignatureBundle, bundles: Iterable[SignatureBundle], p: float = 20
) -> list[tuple[SignatureBundle, SimilarityReport]]:
    pool = list(bundles)
    scored = [(b, jaccard_similarity(target, b)) for b in pool]
    scored.sort(key=lambda item: (-item[1].score, item[0].app_id != target.app_id, item[0].app_id))
    k = math.ceil(p * len(pool) / 100)
    return scored[:k]


# -- permission recursion -----------------------------------------------------

@dataclass(frozen=True)
class PermissionAnnotation:
    method_perms: Mapping[str, frozenset[str]]
    class_perms: Mapping[str, frozenset[str]]
    app_perms: frozenset[str]


def _method_perms(method, pmap: PermissionMap) -> frozenset[str]:
    perms: set[str] = set()
    for cs in method.instructions:
        if cs.kind == "api":
            perms |= pmap.permissions(cs.target)
    return frozenset(perms)


def annotate_permissions(
    bundle: SignatureBundle | None, app: AppIR, pmap: PermissionMap, table=None
) -> PermissionAnnotation:
    """Tag each live method with the permissions of its API calls and roll them up.

    Method keys are ``cls;->name(desc)``; payload classes are prefixed with
    ``<payload path>!``. Pass ``table`` to recompute call kinds first.
    """
    if table is not None:
        app = rebind(app, table)
    live = compute_reachability(app)
    method_perms: dict[str, frozenset[str]] = {}
    class_perms: dict[str, frozenset[str]] = {}

    def visit(cls_name, methods):
        acc: set[str] = set()
        for m in methods:
            perms = _method_perms(m, pmap)
            method_perms[method_ref(cls_name, m.name, m.descriptor)] = perms
            acc |= perms
        class_perms[cls_name] = frozenset(acc)

    for c in app.classes:
        if c.name in live.live_classes:
            visit(c.name, [m for m in c.methods if live.is_live(c.name, m.name, m.descriptor)])
    for p in app.payloads:
        for c in p.embedded_classes or ():
            visit(f"{p.path}!{c.name}", c.methods)
    app_perms = frozenset().union(*class_perms.values()) if class_perms else frozenset()
    return PermissionAnnotation(method_perms, class_perms, app_perms)


def apply_permissions(bundle: SignatureBundle, ann: PermissionAnnotation) -> SignatureBundle:
    classes = []
    for c in bundle.classes:
        methods = tuple(
            replace(m, permissions=ann.method_perms.get(method_ref(c.name, m.name, m.descriptor), frozenset()))
            for m in c.methods
        )
        classes.append(replace(c, methods=methods, permissions=ann.class_perms.get(c.name, frozenset())))
    return replace(bundle, classes=tuple(classes), permissions=ann.app_perms)


# -- class association --------------------------------------------------------

@dataclass(frozen=True)
class AssociationRecord:
    class_digest: str
    api_count: int = 0
    permissions: frozenset[str] = frozenset()
    benign_count: int = 0
    malicious_count: int = 0
    unknown_count: int = 0
    app_refs: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "class_digest": self.class_digest,
            "api_count": self.api_count,
            "permissions": sorted(self.permissions),
            "benign": self.benign_count,
            "malicious": self.malicious_count,
            "unknown": self.unknown_count,
            "apps": list(self.app_refs),
        }


def class_association(class_digest: str, store) -> AssociationRecord:
    """Count distinct stored apps per label that contain ``class_digest``."""
    app_ids = sorted(set(store.apps_with_class(class_digest)))
    if not app_ids:
        return AssociationRecord(class_digest)
    counts = {label: 0 for label in LABELS}
    perms: set[str] = set()
    api_count = 0
    for app_id in app_ids:
        counts[store.label(app_id)] += 1
        for c in store.get(app_id).classes:
            if c.sig.digest == class_digest:
                perms |= c.permissions
                api_count = c.sig.api_count
    return AssociationRecord(
        class_digest,
        api_count,
        frozenset(perms),
        counts["benign"],
        counts["malicious"],
        counts["unknown"],
        tuple(app_ids),
    )
