"""Streaming anomaly scores for graph elements.

Per feature of an element, a two-class chi-square statistic compares the value
at the element's current observation against the running mean of all its
observations. Sums come from count-min sketches (or exact maps in exact
mode). The statistic goes through the chi-square(1) tail to give a p-value.
The element score is the rank of the current minimum p-value among the
element's earlier minima.

An element's clock is its own observation count. Each time a stream element
touches an entity counts as one tick for that entity.
"""

from __future__ import annotations

import math
import random
from bisect import bisect_right, insort
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Optional

_MERSENNE = (1 << 61) - 1
_MASK64 = (1 << 64) - 1


class UndefinedStatistic(ValueError):
    """Chi-square statistic needs at least two ticks and a positive sum."""


class ColdStart(ValueError):
    pass


class CountMinSketch:
    """Count-min sketch over hashable int/tuple keys with non-negative updates.

    ``width = ceil(e / eps)``, ``depth = ceil(ln(1 / delta))``. Row hashes are
    ``((a * x + b) mod (2^61 - 1)) mod width`` with per-row random ``a, b``
    drawn from ``seed``. ``sparse=True`` stores only touched cells, which
    suits the many small per-element sketches.
    """

    def __init__(self, width: int, depth: int, seed: int = 0, sparse: bool = False) -> None:
        if width < 1 or depth < 1:
            raise ValueError(f"width and depth must be positive, got {width}, {depth}")
        self.width = width
        self.depth = depth
        rng = random.Random(seed)
        self._a = [rng.randrange(1, _MERSENNE) for _ in range(depth)]
        self._b = [rng.randrange(0, _MERSENNE) for _ in range(depth)]
        self.sparse = sparse
        self.cells = self._empty()
        self.total = 0

    def _empty(self):
        if self.sparse:
            return [dict() for _ in range(self.depth)]
        return [[0] * self.width for _ in range(self.depth)]

    @classmethod
    def from_error(cls, eps: float, delta: float, seed: int = 0, sparse: bool = False) -> "CountMinSketch":
        if not 0 < eps < 1 or not 0 < delta < 1:
            raise ValueError("eps and delta must lie in (0, 1)")
        sk = cls(math.ceil(math.e / eps), math.ceil(math.log(1.0 / delta)), seed, sparse)
        sk.eps, sk.delta = eps, delta
        return sk

    def _cols(self, key: Hashable) -> list[int]:
        x = hash(key) & _MASK64
        w = self.width
        return [((a * x + b) % _MERSENNE) % w for a, b in zip(self._a, self._b)]

    def update(self, key: Hashable, delta: int = 1) -> None:
        if delta < 0:
            raise ValueError("count-min sketch only supports non-negative updates")
        if self.sparse:
            for row, col in zip(self.cells, self._cols(key)):
                row[col] = row.get(col, 0) + delta
        else:
            for row, col in zip(self.cells, self._cols(key)):
                row[col] += delta
        self.total += delta

    def estimate(self, key: Hashable) -> int:
        if self.sparse:
            return min(row.get(col, 0) for row, col in zip(self.cells, self._cols(key)))
        return min(row[col] for row, col in zip(self.cells, self._cols(key)))

    def clear(self) -> None:
        self.cells = self._empty()
        self.total = 0


def sketch_update(sk: CountMinSketch, key: Hashable, delta: int) -> None:
    sk.update(key, delta)


class ExactCounter:
    """Drop-in for ``CountMinSketch`` backed by a dict."""

    def __init__(self) -> None:
        self.counts: dict[Hashable, int] = {}
        self.total = 0

    def update(self, key: Hashable, delta: int = 1) -> None:
        if delta < 0:
            raise ValueError("negative update")
        self.counts[key] = self.counts.get(key, 0) + delta
        self.total += delta

    def estimate(self, key: Hashable) -> int:
        return self.counts.get(key, 0)

    def clear(self) -> None:
        self.counts.clear()
        self.total = 0


def feature_chi_square(f_hat: float, s_hat: float, t: int) -> float:
    """(f - s/t)^2 * t^2 / (s (t-1)): current tick vs. all earlier ticks."""
    if t < 2 or s_hat <= 0:
        raise UndefinedStatistic(f"t={t}, s_hat={s_hat}")
    d = f_hat - s_hat / t
    return d * d * t * t / (s_hat * (t - 1))


def feature_pvalue(x2: float) -> float:
    """Upper tail of chi-square with one degree of freedom."""
    if x2 < 0:
        raise ValueError("chi-square statistic must be non-negative")
    return math.erfc(math.sqrt(x2 / 2.0))


class FeatureSketchPair:
    """Cumulative sum and current-tick value per (element, feature) key.

    The current-tick store is swapped out (cleared) whenever the global tick
    advances, since sketches cannot be decremented.
    """

    def __init__(self, eps: float = 0.01, delta: float = 0.01, exact: bool = False, seed: int = 0) -> None:
        self.exact = exact
        if exact:
            self.cumulative = ExactCounter()
            self.current = ExactCounter()
        else:
            self.cumulative = CountMinSketch.from_error(eps, delta, seed)
            self.current = CountMinSketch.from_error(eps, delta, seed + 1)
        self.tick: Optional[int] = None

    def advance(self, tick: int) -> None:
        if self.tick is not None and tick < self.tick:
            raise ValueError("tick must be monotone")
        if tick != self.tick:
            if self.current.total:
                self.current.clear()
            self.tick = tick

    def add(self, key: Hashable, value: int) -> None:
        self.cumulative.update(key, value)
        self.current.update(key, value)

    def s_hat(self, key: Hashable) -> int:
        return self.cumulative.estimate(key)

    def f_hat(self, key: Hashable) -> int:
        return self.current.estimate(key)


class _DyadicRank:
    """Prefix counts over ``n_buckets`` quantised values via dyadic CMS keys."""

    def __init__(self, sketch, n_buckets: int) -> None:
        self.sketch = sketch
        self.n_buckets = n_buckets
        self.levels = max(1, math.ceil(math.log2(n_buckets)))

    def add(self, owner: Hashable, bucket: int) -> None:
        for lvl in range(self.levels + 1):
            self.sketch.update((owner, lvl, bucket >> lvl), 1)

    def prefix(self, owner: Hashable, bucket: int) -> int:
        """Estimated count of values in buckets ``0..bucket``."""
        n = bucket + 1
        start = 0
        acc = 0
        for lvl in range(self.levels, -1, -1):
            if n & (1 << lvl):
                acc += self.sketch.estimate((owner, lvl, start >> lvl))
                start += 1 << lvl
        return acc


LOG_FLOOR_DECADES = 320  # down to the smallest positive double


def pvalue_scale(p: float) -> float:
    """Monotone map of [0, 1] onto itself used to bucket p-values.

    Half linear, half logarithmic down to 1e-320, so both p near 1 and the
    tiny p-values of strong anomalies keep enough resolution to be ranked.
    """
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        return 1.0
    log_part = 1.0 - min(-math.log10(p) / LOG_FLOOR_DECADES, 1.0)
    return 0.5 * p + 0.5 * log_part


class ElementScoreState:
    """History of one element's minimum p-values.

    With ``rank_sketch`` set, the history lives in a shared sketch as
    quantised buckets. Otherwise it is kept exactly as a sorted list.
    """

    def __init__(self, key: Hashable = 0, rank_sketch: Optional[_DyadicRank] = None) -> None:
        self.key = key
        self.rank_sketch = rank_sketch
        self.count = 0
        self._history: list[float] = []

    def bucket(self, p: float) -> int:
        n = self.rank_sketch.n_buckets
        return min(int(pvalue_scale(p) * n), n - 1)

    def fraction_le(self, p: float) -> float:
        if self.count == 0:
            raise ColdStart("no history")
        if self.rank_sketch is None:
            hits = bisect_right(self._history, p)
        else:
            hits = self.rank_sketch.prefix(self.key, self.bucket(p))
        return min(1.0, hits / self.count)

    def add(self, p: float) -> None:
        if self.rank_sketch is None:
            insort(self._history, p)
        else:
            self.rank_sketch.add(self.key, self.bucket(p))
        self.count += 1


def element_score(state: ElementScoreState, pmin_now: float) -> float:
    """Fraction of earlier minimum p-values that are <= the current one.

    Returns 1.0 (non-anomalous) on the first observation. The state absorbs
    ``pmin_now`` afterwards.
    """
    try:
        score = state.fraction_le(pmin_now)
    except ColdStart:
        score = 1.0
    state.add(pmin_now)
    return score


@dataclass
class SignificanceConfig:
    alpha_sig: float = 0.05
    confidence_threshold: float = 0.95

    def __post_init__(self) -> None:
        if not 0 < self.alpha_sig < 1:
            raise ValueError("alpha_sig must lie in (0, 1)")
        if not 0 <= self.confidence_threshold <= 1:
            raise ValueError("confidence_threshold must lie in [0, 1]")


@dataclass(frozen=True)
class SubgraphScore:
    score: float
    is_rumour: bool


def subgraph_score(
    elements: list[Hashable],
    scores: dict[Hashable, float],
    cfg: SignificanceConfig,
    adjacency: Optional[dict[Hashable, list[Hashable]]] = None,
) -> SubgraphScore:
    """Fraction of significant elements, counting an insignificant element as
    admitted when at least two of its neighbours are significant.

    Elements missing from ``scores`` count as cold (score 1.0).
    """
    if not elements:
        return SubgraphScore(0.0, False)
    adjacency = adjacency or {}
    sig = {e for e in elements if scores.get(e, 1.0) < cfg.alpha_sig}
    admitted = 0
    for e in elements:
        if e in sig:
            continue
        if sum(1 for n in adjacency.get(e, ()) if n in sig) >= 2:
            admitted += 1
    score = (len(sig) + admitted) / len(elements)
    return SubgraphScore(score, score >= cfg.confidence_threshold)


def match_elements(lam: dict[str, int], pattern_edges) -> tuple[list, dict]:
    """Entities and relations of a match plus their incidence adjacency.

    Entities are keyed ``("v", id)``, relations ``("e", u, v)``.
    """
    elements: list = []
    adjacency: dict = {}
    for ent in sorted(set(lam.values())):
        key = ("v", ent)
        elements.append(key)
        adjacency[key] = []
    for a, b in pattern_edges:
        u, v = lam[a], lam[b]
        ekey = ("e", u, v)
        elements.append(ekey)
        adjacency[ekey] = [("v", u), ("v", v)]
        adjacency[("v", u)].append(ekey)
        adjacency[("v", v)].append(ekey)
    return elements, adjacency


# -- features ---------------------------------------------------------------


@dataclass(frozen=True)
class Observation:
    entity: int
    modality: int
    tick: int
    is_source: bool
    last_tick: Optional[int]
    n_obs: int  # including this one


@dataclass(frozen=True)
class Feature:
    name: str
    fn: Callable[[Observation], float]
    integral: bool = True


def default_features() -> list[Feature]:
    return [
        Feature("in_degree_delta", lambda o: 0 if o.is_source else 1),
        Feature("out_degree_delta", lambda o: 1 if o.is_source else 0),
        Feature("inter_arrival_gap", lambda o: 0 if o.last_tick is None else o.tick - o.last_tick),
    ]


@dataclass
class AnomalyConfig:
    eps: float = 0.01
    delta: float = 0.01
    alpha_sig: float = 0.05
    confidence_threshold: float = 0.95
    value_resolution: int = 100
    exact: bool = False
    pmin_buckets: int = 1000
    rank_eps: float = 0.001  # a prefix query sums ~log2(pmin_buckets) node estimates; rows are sparse
    min_history: int = 20  # earlier observations needed before an entity can be significant
    seed: int = 0

    @property
    def significance(self) -> SignificanceConfig:
        return SignificanceConfig(self.alpha_sig, self.confidence_threshold)


def quantise(value: float, feature: Feature, resolution: int) -> int:
    if feature.integral:
        v = int(value)
    else:
        v = int(round(value * resolution))
    if v < 0:
        raise ValueError(f"feature {feature.name} produced a negative value")
    return v


class AnomalyDetector:
    """Element-level scoring on arrival plus subgraph verdicts for matches.

    A relation is scored once, on arrival, as the lower of its two endpoint
    scores at that tick. Entity scores are refreshed on every observation.
    """

    def __init__(
        self,
        cfg: AnomalyConfig | None = None,
        features_by_modality: Optional[dict[int, list[Feature]]] = None,
    ) -> None:
        self.cfg = cfg or AnomalyConfig()
        self.sig = self.cfg.significance
        self.pairs = FeatureSketchPair(self.cfg.eps, self.cfg.delta, self.cfg.exact, self.cfg.seed)
        self._features_by_modality = features_by_modality or {}
        self._default = default_features()
        self.states: dict[int, ElementScoreState] = {}
        self.last_tick: dict[int, int] = {}
        self.entity_score: dict[int, float] = {}
        self.relation_score: dict[tuple[int, int], float] = {}

    def _new_rank_sketch(self) -> Optional[_DyadicRank]:
        if self.cfg.exact:
            return None
        sk = CountMinSketch.from_error(self.cfg.rank_eps, self.cfg.delta, self.cfg.seed + 2, sparse=True)
        return _DyadicRank(sk, self.cfg.pmin_buckets)

    def features_for(self, modality: int) -> list[Feature]:
        return self._features_by_modality.get(modality, self._default)

    def _observe_entity(self, entity: int, modality: int, tick: int, is_source: bool) -> float:
        state = self.states.get(entity)
        if state is None:
            state = self.states[entity] = ElementScoreState(entity, self._new_rank_sketch())
        n = state.count + 1
        obs = Observation(entity, modality, tick, is_source, self.last_tick.get(entity), n)
        pmin = 1.0
        for fid, feat in enumerate(self.features_for(modality)):
            key = (entity, fid)
            self.pairs.add(key, quantise(feat.fn(obs), feat, self.cfg.value_resolution))
            try:
                x2 = feature_chi_square(self.pairs.f_hat(key), self.pairs.s_hat(key), n)
            except UndefinedStatistic:
                continue
            p = feature_pvalue(x2)
            if p < pmin:
                pmin = p
        score = element_score(state, pmin)
        if n <= self.cfg.min_history:
            score = 1.0  # burn-in: too few earlier minima to rank against
        self.last_tick[entity] = tick
        self.entity_score[entity] = score
        return score

    def observe(self, s) -> tuple[float, float, float]:
        self.pairs.advance(s.t)
        su = self._observe_entity(s.u, s.m, s.t, True)
        sv = self._observe_entity(s.u_prime, s.m_prime, s.t, False)
        rel = min(su, sv)
        self.relation_score[(s.u, s.u_prime)] = rel
        return su, sv, rel

    def scores_for(self, elements: Iterable) -> dict:
        out = {}
        for key in elements:
            if key[0] == "v":
                out[key] = self.entity_score.get(key[1], 1.0)
            else:
                out[key] = self.relation_score.get((key[1], key[2]), 1.0)
        return out

    def judge(self, lam: dict[str, int], pattern_edges) -> SubgraphScore:
        elements, adjacency = match_elements(lam, pattern_edges)
        return subgraph_score(elements, self.scores_for(elements), self.sig, adjacency)
