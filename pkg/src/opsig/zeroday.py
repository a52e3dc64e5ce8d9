"""Cluster-based discovery of repackaged families that scanners miss.

Pipeline: drop whitelisted classes, score every app pair by the API mass of
the classes they share, merge clusters by average linkage while the best
inter-cluster score stays at or above ``T``, then flag clusters that are
large (more than ``n`` members) yet mostly not labeled malicious (fraction at
most ``f``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .analytics import ClassSigSet, S, check_comparable, filter_whitelist
from .errors import ValidationError
from .signature import SignatureBundle


@dataclass(frozen=True)
class ZeroDayConfig:
    T: float = 100
    n: int = 10
    f: float = 0.2
    whitelist: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.T < 0:
            raise ValueError("T must be >= 0")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not 0 <= self.f <= 1:
            raise ValueError("f must lie in [0, 1]")
        object.__setattr__(self, "whitelist", frozenset(self.whitelist))


@dataclass(frozen=True)
class Merge:
    left: tuple[str, ...]
    right: tuple[str, ...]
    score: Fraction

    def to_json(self) -> dict:
        return {
            "left": list(self.left),
            "right": list(self.right),
            "score": float(self.score),
            "ratio": f"{self.score.numerator}/{self.score.denominator}",
        }


@dataclass(frozen=True)
class ClusterVerdict:
    members: tuple[str, ...]
    suspicious: bool
    malicious_count: int
    malicious_fraction: Fraction
    common_classes: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "members": list(self.members),
            "size": len(self.members),
            "suspicious": self.suspicious,
            "malicious": self.malicious_count,
            "malicious_fraction": float(self.malicious_fraction),
            "common_classes": list(self.common_classes),
        }


@dataclass(frozen=True)
class ClusterRun:
    clusters: tuple[tuple[str, ...], ...]
    merge_log: tuple[Merge, ...]
    config: ZeroDayConfig
    verdicts: tuple[ClusterVerdict, ...] = ()
    class_sets: Mapping[str, ClassSigSet] = field(default_factory=dict, compare=False, repr=False)

    def suspicious(self) -> list[ClusterVerdict]:
        return [v for v in self.verdicts if v.suspicious]

    def to_json(self) -> dict:
        return {
            "config": {
                "T": self.config.T,
                "n": self.config.n,
                "f": self.config.f,
                "whitelist": sorted(self.config.whitelist),
            },
            "clusters": [list(c) for c in self.clusters],
            "merge_log": [m.to_json() for m in self.merge_log],
            "verdicts": [v.to_json() for v in self.verdicts],
        }


def common_api_score(a: SignatureBundle, b: SignatureBundle, whitelist: Iterable[str] = ()) -> int:
    """API-call mass of the non-whitelisted classes shared by ``a`` and ``b``."""
    check_comparable(a, b)
    wl = frozenset(whitelist)
    return S(ClassSigSet.of(a, wl) & ClassSigSet.of(b, wl))


def score_matrix(sets: Sequence[ClassSigSet]) -> list[list[int]]:
    n = len(sets)
    m = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            m[i][j] = m[j][i] = S(sets[i] & sets[j])
    return m


def cluster(corpus: Sequence[SignatureBundle], cfg: ZeroDayConfig) -> ClusterRun:
    """Average-linkage agglomeration over the shared-API-mass score.

    Corpus order does not matter: apps are processed in app_id order and ties
    go to the pair whose smallest member ids sort first.
    """
    bundles = sorted(corpus, key=lambda b: b.app_id)
    ids = [b.app_id for b in bundles]
    if len(set(ids)) != len(ids):
        raise ValidationError("corpus contains duplicate app ids")
    for b in bundles[1:]:
        check_comparable(bundles[0], b)
    sets = [filter_whitelist(ClassSigSet.of(b), cfg.whitelist) for b in bundles]
    pair = score_matrix(sets)

    # members are index lists; index order equals app_id order
    members: dict[int, list[int]] = {i: [i] for i in range(len(ids))}
    sums: dict[int, dict[int, int]] = {
        i: {j: pair[i][j] for j in range(len(ids)) if j != i} for i in range(len(ids))
    }
    next_id = len(ids)
    log: list[Merge] = []
    while len(members) > 1:
        best = None
        for a in members:
            for b in members:
                if members[a][0] >= members[b][0]:
                    continue
                avg = Fraction(sums[a][b], len(members[a]) * len(members[b]))
                key = (-avg, members[a][0], members[b][0])
                if best is None or key < best[0]:
                    best = (key, a, b, avg)
        _, a, b, avg = best
        if avg < cfg.T:
            break
        log.append(Merge(tuple(ids[i] for i in members[a]), tuple(ids[i] for i in members[b]), avg))
        merged = sorted(members.pop(a) + members.pop(b))
        row_a, row_b = sums.pop(a), sums.pop(b)
        new_row = {}
        for c in members:
            new_row[c] = row_a[c] + row_b[c]
            del sums[c][a], sums[c][b]
            sums[c][next_id] = new_row[c]
        members[next_id] = merged
        sums[next_id] = new_row
        next_id += 1

    clusters = tuple(sorted(tuple(ids[i] for i in m) for m in members.values()))
    return ClusterRun(
        clusters=clusters,
        merge_log=tuple(log),
        config=cfg,
        class_sets={ids[i]: sets[i] for i in range(len(ids))},
    )


def flag_suspicious(run: ClusterRun, labels: Mapping[str, str], cfg: ZeroDayConfig | None = None) -> ClusterRun:
    cfg = cfg or run.config
    verdicts = []
    for members in run.clusters:
        malicious = sum(1 for a in members if labels.get(a, "unknown") == "malicious")
        fraction = Fraction(malicious, len(members))
        common = None
        for a in members:
            digests = set(run.class_sets.get(a, ClassSigSet()))
            common = digests if common is None else common & digests
        common_classes = tuple(sorted((common or set()) - cfg.whitelist))
        verdicts.append(ClusterVerdict(
            members=members,
            suspicious=len(members) > cfg.n and fraction <= Fraction(cfg.f).limit_denominator(10**9),
            malicious_count=malicious,
            malicious_fraction=fraction,
            common_classes=common_classes,
        ))
    return ClusterRun(run.clusters, run.merge_log, run.config, tuple(verdicts), run.class_sets)


def detect_zero_day(
    corpus: Sequence[SignatureBundle], labels: Mapping[str, str], cfg: ZeroDayConfig
) -> ClusterRun:
    return flag_suspicious(cluster(corpus, cfg), labels, cfg)
