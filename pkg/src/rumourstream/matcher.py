"""Incremental pattern matching triggered by each accepted stream element.

For every pattern edge whose endpoint modalities equal the element's
second-order modality, the new edge is pinned to that pattern edge and the
remaining variables are expanded breadth-first over the pattern skeleton.
Candidates come from modality-bucketed adjacency and are pruned by the
P-index before any further expansion.

Match semantics: injective, modality-preserving, and every pattern edge must
be present in the graph (non-induced subgraph isomorphism).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from .model import PatternMatch, RumourPattern, SocialGraph, StreamElement, StreamError
from .pindex import PIndex, requirements


@dataclass(frozen=True)
class _Step:
    var: str
    modality: int
    link: str  # already-assigned variable we expand from
    outgoing: bool  # True: pattern edge link -> var
    checks: tuple[tuple[str, bool], ...]  # (other, var_is_source)
    need_out: tuple[int, ...]
    need_in: tuple[int, ...]


@dataclass(frozen=True)
class AnchorPlan:
    pattern: RumourPattern
    edge_index: int
    source: str
    target: str
    reverse_check: bool  # pattern also has target -> source
    source_need: tuple[tuple[int, ...], tuple[int, ...]]
    target_need: tuple[tuple[int, ...], tuple[int, ...]]
    steps: tuple[_Step, ...]

    @property
    def anchor(self) -> tuple[str, str]:
        """The relation variable this plan starts from."""
        return (self.source, self.target)


def _plan(pattern: RumourPattern, edge_index: int, n_modalities: int) -> AnchorPlan:
    a, b = pattern.edges[edge_index]
    mod = pattern.modality_of
    edge_set = set(pattern.edges)
    undirected: dict[str, list[tuple[str, bool]]] = {v: [] for v, _ in pattern.variables}
    for x, y in pattern.edges:
        undirected[x].append((y, True))
        undirected[y].append((x, False))
    for v in undirected:
        undirected[v].sort()

    order = [a, b]
    placed = {a, b}
    steps = []
    queue = deque([a, b])
    while queue:
        w = queue.popleft()
        for v, outgoing in undirected[w]:
            if v in placed:
                continue
            checks = []
            for other in order:
                if other == w:
                    # the link edge is implied by candidate generation; a
                    # reciprocal edge still needs checking
                    if outgoing and (v, w) in edge_set:
                        checks.append((w, True))
                    if not outgoing and (w, v) in edge_set:
                        checks.append((w, False))
                    continue
                if (v, other) in edge_set:
                    checks.append((other, True))
                if (other, v) in edge_set:
                    checks.append((other, False))
            need_out, need_in = requirements(pattern, v, n_modalities)
            steps.append(_Step(v, mod[v], w, outgoing, tuple(checks), need_out, need_in))
            order.append(v)
            placed.add(v)
            queue.append(v)
    return AnchorPlan(
        pattern=pattern,
        edge_index=edge_index,
        source=a,
        target=b,
        reverse_check=(b, a) in edge_set,
        source_need=requirements(pattern, a, n_modalities),
        target_need=requirements(pattern, b, n_modalities),
        steps=tuple(steps),
    )


@dataclass
class PatternSet:
    patterns: list[RumourPattern]
    n_modalities: int
    trigger_table: dict[tuple[int, int], list[AnchorPlan]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = [p.id for p in self.patterns]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate pattern id")
        self.by_id = {p.id: p for p in self.patterns}
        for p in self.patterns:
            mod = p.modality_of
            for j, (a, b) in enumerate(p.edges):
                plan = _plan(p, j, self.n_modalities)
                self.trigger_table.setdefault((mod[a], mod[b]), []).append(plan)

    @property
    def p_max(self) -> int:
        return max((p.size for p in self.patterns), default=0)

    def __len__(self) -> int:
        return len(self.patterns)


def triggers_for(ps: PatternSet, m: int, m_prime: int) -> list[AnchorPlan]:
    return ps.trigger_table.get((m, m_prime), [])


def bfs_match(graph: SocialGraph, index: PIndex, plan: AnchorPlan, s: StreamElement) -> list[PatternMatch]:
    """All matches of ``plan.pattern`` that map the anchor edge onto ``s``."""
    u, v = s.u, s.u_prime
    if not index.satisfies(u, *plan.source_need) or not index.satisfies(v, *plan.target_need):
        return []
    if plan.reverse_check and not graph.has_edge(v, u):
        return []

    lam = {plan.source: u, plan.target: v}
    used = {u, v}
    steps = plan.steps
    n_steps = len(steps)
    found: list[PatternMatch] = []
    edges = graph.edges

    def expand(depth: int) -> None:
        if depth == n_steps:
            found.append(PatternMatch(plan.pattern.id, tuple(sorted(lam.items())), s.t))
            return
        st = steps[depth]
        anchor_entity = lam[st.link]
        if st.outgoing:
            candidates = graph.out_adj[anchor_entity][st.modality]
        else:
            candidates = graph.in_adj[anchor_entity][st.modality]
        for c in sorted(candidates):
            if c in used:
                continue
            if not index.satisfies(c, st.need_out, st.need_in):
                continue
            ok = True
            for other, var_is_source in st.checks:
                e = (c, lam[other]) if var_is_source else (lam[other], c)
                if e not in edges:
                    ok = False
                    break
            if not ok:
                continue
            lam[st.var] = c
            used.add(c)
            expand(depth + 1)
            used.discard(c)
            del lam[st.var]

    expand(0)
    return found


def process_element(graph: SocialGraph, index: PIndex, ps: PatternSet, s: StreamElement) -> list[PatternMatch]:
    """Apply ``s`` to graph and index, then return the matches it completes.

    Raises the model's ``StreamError`` subclasses for rejected elements; the
    graph and index are left untouched in that case.
    """
    graph.apply(s)
    index.update(s)
    out: list[PatternMatch] = []
    seen = set()
    for plan in triggers_for(ps, s.m, s.m_prime):
        for match in bfs_match(graph, index, plan, s):
            if match.key not in seen:
                seen.add(match.key)
                out.append(match)
    return out


class IncrementalMatcher:
    """Graph + P-index + pattern set, fed one element at a time."""

    def __init__(self, patterns: PatternSet) -> None:
        self.patterns = patterns
        self.graph = SocialGraph(patterns.n_modalities)
        self.index = PIndex(patterns.n_modalities)
        self.n_matches = 0

    def process(self, s: StreamElement) -> list[PatternMatch]:
        matches = process_element(self.graph, self.index, self.patterns, s)
        self.n_matches += len(matches)
        return matches

    def run(self, stream: Iterable[StreamElement]) -> list[PatternMatch]:
        out = []
        for s in stream:
            try:
                out.extend(self.process(s))
            except StreamError:
                continue
        return out
