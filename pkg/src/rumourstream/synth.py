"""Synthetic multi-modal streams with planted rumour instances.

Background relations are drawn from a modality-pair mix over a pool of
entities. Each window then receives planted instances of the rumour patterns,
built from fresh entities and labelled as ground truth. The window positions
of planted relations follow a configurable distribution, which is the signal
the coefficient model has to learn. ``drift_at`` switches that distribution
mid-stream.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .model import RumourPattern

RATE_PROFILES = ("constant", "bursty", "skewed")
POSITION_DISTS = ("normal", "skewed")

DEFAULT_PAIR_MIX = {
    "user>tweet": 0.30,
    "tweet>user": 0.15,
    "tweet>hashtag": 0.15,
    "tweet>link": 0.10,
    "user>user": 0.20,
    "tweet>tweet": 0.10,
}


@dataclass
class SyntheticStreamSpec:
    length: int = 10_000
    n_entities: int = 2_000  # background pool per modality
    entity_lifetime: Optional[int] = None  # slide the pool every so many elements (bounded degree)
    rate_profile: str = "constant"
    base_rate: float = 1000.0  # elements per second
    burst_factor: float = 3.0
    burst_period: int = 500  # elements per calm/burst phase
    window_size: int = 100
    planted: tuple[str, ...] = ("p1", "p2", "p3")
    rumours_per_window: float = 2.0
    coefficient_dist: str = "normal"
    position_centre: float = 0.3  # fraction of the window
    position_spread: float = 0.08
    drift_at: Optional[int] = None  # element index where the position distribution moves
    drift_centre: float = 0.75
    pair_mix: dict = field(default_factory=lambda: dict(DEFAULT_PAIR_MIX))
    seed: int = 0

    def __post_init__(self) -> None:
        if self.length < 0:
            raise ValueError("length must be non-negative")
        if self.rate_profile not in RATE_PROFILES:
            raise ValueError(f"unknown rate profile {self.rate_profile!r}")
        if self.coefficient_dist not in POSITION_DISTS:
            raise ValueError(f"unknown coefficient distribution {self.coefficient_dist!r}")
        if self.base_rate <= 0 or self.burst_factor < 1:
            raise ValueError("base_rate must be positive and burst_factor >= 1")
        if self.window_size < 1 or self.n_entities < 2 or self.burst_period < 1:
            raise ValueError("window_size, burst_period >= 1 and n_entities >= 2 required")
        if self.rumours_per_window < 0:
            raise ValueError("rumours_per_window must be non-negative")
        for key in self.pair_mix:
            if key.count(">") != 1:
                raise ValueError(f"pair mix key {key!r} must look like 'src>dst'")
        self.planted = tuple(self.planted)

    def to_dict(self) -> dict:
        return asdict(self)


def arrival_gaps(spec: SyntheticStreamSpec, rng: np.random.Generator) -> np.ndarray:
    """Inter-arrival gaps in ms; element ``i`` is in a burst phase iff ``(i // burst_period)`` is odd."""
    n = spec.length
    mean = 1000.0 / spec.base_rate
    if spec.rate_profile == "constant":
        return np.full(n, mean)
    if spec.rate_profile == "bursty":
        burst = (np.arange(n) // spec.burst_period) % 2 == 1
        scale = np.where(burst, mean / spec.burst_factor, mean)
        return rng.exponential(scale)
    sigma = 1.0
    return rng.lognormal(math.log(mean) - sigma * sigma / 2, sigma, size=n)


def in_burst(spec: SyntheticStreamSpec, index: int) -> bool:
    return spec.rate_profile == "bursty" and (index // spec.burst_period) % 2 == 1


class _Positions:
    def __init__(self, spec: SyntheticStreamSpec, rng: np.random.Generator) -> None:
        self.spec = spec
        self.rng = rng

    def draw(self, w: int, drifted: bool) -> int:
        spec = self.spec
        if spec.coefficient_dist == "normal":
            centre = spec.drift_centre if drifted else spec.position_centre
            x = self.rng.normal(centre, spec.position_spread)
        else:
            x = self.rng.beta(1.5, 6.0)
            if drifted:
                x = 1.0 - x
        return int(min(max(math.floor(x * w), 0), w - 1))


def _free_slot(taken: set[int], want: int, w: int) -> Optional[int]:
    for d in range(w):
        for cand in (want + d, want - d):
            if 0 <= cand < w and cand not in taken:
                return cand
    return None


def generate(spec: SyntheticStreamSpec, patterns: list[RumourPattern], modality_names: list[str]) -> list[dict]:
    """Stream records (see ``streamio``) with ``label`` and ``at`` set."""
    rng = np.random.default_rng(spec.seed)
    by_id = {p.id: p for p in patterns}
    missing = [pid for pid in spec.planted if pid not in by_id]
    if missing:
        raise ValueError(f"planted patterns not in the pattern set: {missing}")
    mix_keys = list(spec.pair_mix)
    for key in mix_keys:
        a, b = key.split(">")
        if a not in modality_names or b not in modality_names:
            raise ValueError(f"pair mix {key!r} names an unknown modality")
    mix_p = np.asarray([spec.pair_mix[k] for k in mix_keys], dtype=float)
    if mix_keys:
        mix_p = mix_p / mix_p.sum()
    positions = _Positions(spec, rng)
    gaps = arrival_gaps(spec, rng)
    w = spec.window_size
    n = spec.length
    slots: list[Optional[tuple]] = [None] * n
    instance = 0

    # planted instances, window by window
    for start in range(0, n, w):
        size = min(w, n - start)
        drifted = spec.drift_at is not None and start >= spec.drift_at
        count = rng.poisson(spec.rumours_per_window) if spec.planted else 0
        taken: set[int] = set()
        for _ in range(count):
            pattern = by_id[spec.planted[int(rng.integers(len(spec.planted)))]]
            wanted = sorted(positions.draw(w, drifted) for _ in pattern.edges)
            chosen = []
            for want in wanted:
                slot = _free_slot(taken, min(want, size - 1), size)
                if slot is None:
                    break
                taken.add(slot)
                chosen.append(slot)
            if len(chosen) < len(pattern.edges):
                taken.difference_update(chosen)
                continue
            order = rng.permutation(len(pattern.edges))
            mods = pattern.modality_of
            for slot, ei in zip(sorted(chosen), order):
                a, b = pattern.edges[ei]
                slots[start + slot] = (
                    f"r{instance}.{a}", f"r{instance}.{b}",
                    modality_names[mods[a]], modality_names[mods[b]],
                )
            instance += 1

    # background fill
    seen: set[tuple[str, str]] = set()
    out: list[dict] = []
    at = 0.0
    pool = spec.n_entities
    for i in range(n):
        at += float(gaps[i]) if i else 0.0
        planted = slots[i]
        if planted is not None:
            u, v, mu, mv = planted
            label = 1
        else:
            if not mix_keys:
                raise ValueError("background needed but the pair mix is empty")
            base = (i * pool) // spec.entity_lifetime if spec.entity_lifetime else 0
            for _ in range(100):
                mu, mv = mix_keys[int(rng.choice(len(mix_keys), p=mix_p))].split(">")
                iu = base + int(rng.integers(pool))
                iv = base + int(rng.integers(pool))
                u, v = f"{mu}{iu}", f"{mv}{iv}"
                if u != v and (u, v) not in seen:
                    break
            else:
                raise RuntimeError("could not draw a fresh background relation; enlarge n_entities")
            label = 0
        seen.add((u, v))
        out.append({"u": u, "v": v, "mu": mu, "mv": mv, "t": i, "label": label, "at": round(at, 6)})
    return out


# -- small random instances for oracle checks ---------------------------------------


def random_pattern(rng: np.random.Generator, n_vars: int, n_modalities: int, pid: str, extra_edges: int = 1) -> RumourPattern:
    """Weakly connected random pattern: a random tree plus a few extra edges."""
    names = [f"x{i}" for i in range(n_vars)]
    variables = tuple((n, int(rng.integers(n_modalities))) for n in names)
    edges: list[tuple[str, str]] = []
    for i in range(1, n_vars):
        j = int(rng.integers(i))
        edges.append((names[i], names[j]) if rng.random() < 0.5 else (names[j], names[i]))
    for _ in range(extra_edges):
        a, b = rng.choice(n_vars, size=2, replace=False)
        e = (names[int(a)], names[int(b)])
        if e not in edges:
            edges.append(e)
    return RumourPattern(pid, variables, tuple(edges))


def random_stream_records(
    rng: np.random.Generator, n_edges: int, n_vertices: int, modality_names: list[str]
) -> list[dict]:
    """Random simple digraph streamed edge by edge; each vertex has a fixed modality."""
    n_mod = len(modality_names)
    mods = rng.integers(n_mod, size=n_vertices)
    possible = n_vertices * (n_vertices - 1)
    n_edges = min(n_edges, possible)
    seen: set[tuple[int, int]] = set()
    out = []
    while len(out) < n_edges:
        u, v = (int(x) for x in rng.integers(n_vertices, size=2))
        if u == v or (u, v) in seen:
            continue
        seen.add((u, v))
        out.append({"u": f"n{u}", "v": f"n{v}", "mu": modality_names[mods[u]], "mv": modality_names[mods[v]],
                    "t": len(out)})
    return out
