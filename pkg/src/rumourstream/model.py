"""Core domain types: modalities, stream elements, the evolving social graph,
rumour patterns, matches and count-based windows.

Entities and modalities are plain ints on the hot path. ``ModalityRegistry``
and ``EntityInterner`` translate to and from the human-readable keys used in
files.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional


class StreamError(Exception):
    """Base class for element-level rejections."""


class ModalityConflict(StreamError):
    pass


class DuplicateEdge(StreamError):
    pass


class SelfLoop(StreamError):
    pass


class OutOfOrder(StreamError):
    pass


class Modality(NamedTuple):
    id: int
    name: str


class ModalityRegistry:
    """Dense ``0..|M|-1`` ids for modality names."""

    def __init__(self, names: Iterable[str] = ()) -> None:
        self._names: list[str] = []
        self._ids: dict[str, int] = {}
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        if name in self._ids:
            raise ValueError(f"duplicate modality {name!r}")
        self._ids[name] = len(self._names)
        self._names.append(name)
        return self._ids[name]

    def id(self, name: str) -> int:
        return self._ids[name]

    def name(self, mid: int) -> str:
        return self._names[mid]

    def __contains__(self, name: object) -> bool:
        return name in self._ids

    def __len__(self) -> int:
        return len(self._names)

    def __iter__(self):
        return (Modality(i, n) for i, n in enumerate(self._names))

    @property
    def names(self) -> list[str]:
        return list(self._names)

    @property
    def n_pairs(self) -> int:
        return len(self._names) ** 2

    def pair_index(self, m: int, m_prime: int) -> int:
        return m * len(self._names) + m_prime


class EntityInterner:
    """Maps external entity keys to stable, never reused integer ids."""

    def __init__(self) -> None:
        self._ids: dict[str, int] = {}
        self._keys: list[str] = []

    def intern(self, key: str) -> int:
        eid = self._ids.get(key)
        if eid is None:
            eid = len(self._keys)
            self._ids[key] = eid
            self._keys.append(key)
        return eid

    def key(self, eid: int) -> str:
        return self._keys[eid]

    def __len__(self) -> int:
        return len(self._keys)


@dataclass(frozen=True, slots=True)
class StreamElement:
    u: int
    u_prime: int
    m: int
    m_prime: int
    t: int
    rumour_label: Optional[bool] = None
    # arrival time in ms for the latency simulation; None = not simulated
    arrival_ms: Optional[float] = None
    # explicit window id for variable-size windows
    window: Optional[int] = None

    @property
    def edge(self) -> tuple[int, int]:
        return (self.u, self.u_prime)


class MutationSummary(NamedTuple):
    u_new: bool
    u_prime_new: bool
    edge_added: bool


class SocialGraph:
    """Append-only multi-modal directed graph.

    Adjacency is bucketed by neighbour modality so that candidate generation
    during matching only touches neighbours of the right type.
    """

    def __init__(self, n_modalities: int) -> None:
        self.n_modalities = n_modalities
        self.modality: dict[int, int] = {}
        self.out_adj: dict[int, list[list[int]]] = {}
        self.in_adj: dict[int, list[list[int]]] = {}
        self.edges: dict[tuple[int, int], int] = {}  # edge -> tick
        self.t_now = 0
        self.rejected = {"duplicate": 0, "modality": 0, "self_loop": 0, "order": 0}

    def _add_vertex(self, v: int, m: int) -> bool:
        known = self.modality.get(v)
        if known is None:
            self.modality[v] = m
            self.out_adj[v] = [[] for _ in range(self.n_modalities)]
            self.in_adj[v] = [[] for _ in range(self.n_modalities)]
            return True
        return False

    def check(self, s: StreamElement) -> None:
        """Raise the error ``apply`` would raise, without mutating."""
        if s.u == s.u_prime:
            raise SelfLoop(f"self-loop on entity {s.u}")
        if s.t < self.t_now:
            raise OutOfOrder(f"tick {s.t} < current {self.t_now}")
        for v, m in ((s.u, s.m), (s.u_prime, s.m_prime)):
            known = self.modality.get(v)
            if known is not None and known != m:
                raise ModalityConflict(f"entity {v} has modality {known}, element says {m}")
        if (s.u, s.u_prime) in self.edges:
            raise DuplicateEdge(f"edge {s.u}->{s.u_prime} already present")

    def apply(self, s: StreamElement) -> MutationSummary:
        try:
            self.check(s)
        except SelfLoop:
            self.rejected["self_loop"] += 1
            raise
        except OutOfOrder:
            self.rejected["order"] += 1
            raise
        except ModalityConflict:
            self.rejected["modality"] += 1
            raise
        except DuplicateEdge:
            self.rejected["duplicate"] += 1
            raise
        u_new = self._add_vertex(s.u, s.m)
        v_new = self._add_vertex(s.u_prime, s.m_prime)
        self.edges[(s.u, s.u_prime)] = s.t
        self.out_adj[s.u][s.m_prime].append(s.u_prime)
        self.in_adj[s.u_prime][s.m].append(s.u)
        self.t_now = s.t
        return MutationSummary(u_new, v_new, True)

    def has_edge(self, u: int, v: int) -> bool:
        return (u, v) in self.edges

    def out_neighbours(self, v: int, m: int) -> list[int]:
        return self.out_adj[v][m]

    def in_neighbours(self, v: int, m: int) -> list[int]:
        return self.in_adj[v][m]

    def out_degree(self, v: int) -> int:
        return sum(len(b) for b in self.out_adj.get(v, ()))

    def in_degree(self, v: int) -> int:
        return sum(len(b) for b in self.in_adj.get(v, ()))

    def max_degree(self) -> int:
        return max((self.out_degree(v) for v in self.out_adj), default=0)

    @property
    def n_vertices(self) -> int:
        return len(self.modality)

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def apply_stream_element(graph: SocialGraph, s: StreamElement) -> MutationSummary:
    return graph.apply(s)


@dataclass(frozen=True)
class RumourPattern:
    """A small query graph over modalities.

    ``variables`` maps variable name -> modality id; ``edges`` are
    (source, target) variable pairs.
    """

    id: str
    variables: tuple[tuple[str, int], ...]
    edges: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        names = [v for v, _ in self.variables]
        if len(set(names)) != len(names):
            raise ValueError(f"pattern {self.id}: duplicate variable id")
        if len(names) < 2:
            raise ValueError(f"pattern {self.id}: needs at least two variables")
        known = set(names)
        seen = set()
        for a, b in self.edges:
            if a not in known or b not in known:
                raise ValueError(f"pattern {self.id}: edge ({a},{b}) uses unknown variable")
            if a == b:
                raise ValueError(f"pattern {self.id}: self-loop on {a}")
            if (a, b) in seen:
                raise ValueError(f"pattern {self.id}: duplicate edge ({a},{b})")
            seen.add((a, b))
        if not _weakly_connected(names, self.edges):
            raise ValueError(f"pattern {self.id}: not weakly connected")

    @property
    def modality_of(self) -> dict[str, int]:
        return dict(self.variables)

    @property
    def size(self) -> int:
        return len(self.variables)


def _weakly_connected(names: list[str], edges) -> bool:
    adj: dict[str, set[str]] = {n: set() for n in names}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen = {names[0]}
    stack = [names[0]]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen) == len(names)


@dataclass(frozen=True)
class PatternMatch:
    pattern: str
    mapping: tuple[tuple[str, int], ...]  # sorted (variable, entity) pairs
    matched_at: int

    @property
    def key(self) -> tuple[str, tuple[tuple[str, int], ...]]:
        return (self.pattern, self.mapping)

    @property
    def lam(self) -> dict[str, int]:
        return dict(self.mapping)

    def graph_edges(self, pattern: RumourPattern) -> list[tuple[int, int]]:
        lam = self.lam
        return [(lam[a], lam[b]) for a, b in pattern.edges]


@dataclass
class WindowState:
    """The current count-based window.

    ``estimated_size`` is the running estimate of window size used when
    windows are delimited by explicit ids instead of a fixed count.
    """

    capacity: int = 100
    elements: list[StreamElement] = field(default_factory=list)
    estimated_size: int = 0
    _ticks: list[int] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        if self.estimated_size <= 0:
            self.estimated_size = self.capacity

    def append(self, s: StreamElement) -> int:
        self.elements.append(s)
        bisect.insort_right(self._ticks, s.t)
        return window_position(self, s)

    def reset(self) -> None:
        self.elements.clear()
        self._ticks.clear()

    @property
    def full(self) -> bool:
        return len(self.elements) >= self.capacity

    def __len__(self) -> int:
        return len(self.elements)


def window_position(window: WindowState, s: StreamElement) -> int:
    """1-based rank of ``s``: elements already in the window with tick <= s.t."""
    return bisect.bisect_right(window._ticks, s.t)
