"""Internal call graph and the live (reachable) method set used for signing."""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass

from .ir import AppIR, method_ref, split_target

MethodKey = tuple[str, str, str]  # class, name, descriptor


@dataclass(frozen=True)
class ReachabilitySet:
    live_methods: frozenset[MethodKey]
    live_classes: frozenset[str]

    def is_live(self, cls: str, name: str, descriptor: str) -> bool:
        return (cls, name, descriptor) in self.live_methods


def call_edges(app: AppIR) -> dict[MethodKey, set[MethodKey]]:
    """Edges from each method to the in-app methods its internal calls name.

    Targets carry no descriptor, so a call edge reaches every overload with
    that class and name. Unresolved targets produce no edge.
    """
    by_name: dict[tuple[str, str], list[MethodKey]] = defaultdict(list)
    for c, m in app.iter_methods():
        by_name[(c.name, m.name)].append((c.name, m.name, m.descriptor))
    edges: dict[MethodKey, set[MethodKey]] = {}
    for c, m in app.iter_methods():
        out: set[MethodKey] = set()
        for cs in m.instructions:
            if cs.kind != "internal":
                continue
            try:
                out.update(by_name.get(split_target(cs.target), ()))
            except ValueError:
                continue
        edges[(c.name, m.name, m.descriptor)] = out
    return edges


def compute_reachability(app: AppIR, keep_dead: bool = False) -> ReachabilitySet:
    all_methods = [(c.name, m.name, m.descriptor) for c, m in app.iter_methods()]
    if keep_dead or not app.entry_points:
        # no declared roots: treat the whole fragment as live
        return ReachabilitySet(frozenset(all_methods), frozenset(c.name for c in app.classes))

    roots = [k for k in all_methods if method_ref(*k) in app.entry_points]
    edges = call_edges(app)
    live = set(roots)
    queue = deque(roots)
    while queue:
        for nxt in edges[queue.popleft()]:
            if nxt not in live:
                live.add(nxt)
                queue.append(nxt)
    classes = {k[0] for k in live}
    return ReachabilitySet(frozenset(live), frozenset(classes))
