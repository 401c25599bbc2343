"""Static reference implementations used by tests and ``rumourstream oracle``.

Each routine recomputes a streaming result from scratch by a different route:
subgraph enumeration on the final graph, nested loops over the coefficient
matrix, the two-cell Pearson form of the feature statistic, and anomaly
scores rebuilt from each entity's raw observation history.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Optional

import networkx as nx
from networkx.algorithms import isomorphism

from .anomaly import AnomalyConfig, Feature, Observation, default_features
from .model import RumourPattern, StreamElement, StreamError, SocialGraph


# -- matching -------------------------------------------------------------------


def accepted_elements(stream: Iterable[StreamElement], n_modalities: int) -> list[StreamElement]:
    """Elements that the graph accepts, in order (rejections dropped)."""
    g = SocialGraph(n_modalities)
    out = []
    for s in stream:
        try:
            g.apply(s)
        except StreamError:
            continue
        out.append(s)
    return out


def _pattern_graph(p: RumourPattern) -> nx.DiGraph:
    pg = nx.DiGraph()
    for var, mod in p.variables:
        pg.add_node(var, modality=mod)
    pg.add_edges_from(p.edges)
    return pg


def static_matches(accepted: list[StreamElement], patterns: list[RumourPattern]) -> set[tuple]:
    """All (pattern, sorted mapping, completion tick) on the final graph.

    A match completes when its last relation arrives.
    """
    g = nx.DiGraph()
    arrival: dict[tuple[int, int], int] = {}
    for idx, s in enumerate(accepted):
        g.add_node(s.u, modality=s.m)
        g.add_node(s.u_prime, modality=s.m_prime)
        g.add_edge(s.u, s.u_prime)
        arrival[(s.u, s.u_prime)] = idx
    out = set()
    same = isomorphism.categorical_node_match("modality", None)
    for p in patterns:
        gm = isomorphism.DiGraphMatcher(g, _pattern_graph(p), node_match=same)
        for mono in gm.subgraph_monomorphisms_iter():
            lam = {var: ent for ent, var in mono.items()}
            last = max(arrival[(lam[a], lam[b])] for a, b in p.edges)
            out.add((p.id, tuple(sorted(lam.items())), accepted[last].t))
    return out


def brute_force_matches(accepted: list[StreamElement], patterns: list[RumourPattern]) -> set[tuple]:
    """Same result as ``static_matches`` by trying every assignment.

    Each variable ranges over all vertices of its modality; injectivity and
    edge presence are checked afterwards. Exponential in the pattern size.
    """
    modality: dict[int, int] = {}
    arrival: dict[tuple[int, int], int] = {}
    for idx, s in enumerate(accepted):
        modality[s.u] = s.m
        modality[s.u_prime] = s.m_prime
        arrival[(s.u, s.u_prime)] = idx
    by_modality: dict[int, list[int]] = {}
    for v in sorted(modality):
        by_modality.setdefault(modality[v], []).append(v)
    out = set()
    for p in patterns:
        names = [v for v, _ in p.variables]
        pools = [by_modality.get(m, []) for _, m in p.variables]
        for combo in itertools.product(*pools):
            if len(set(combo)) != len(combo):
                continue
            lam = dict(zip(names, combo))
            if all((lam[a], lam[b]) in arrival for a, b in p.edges):
                last = max(arrival[(lam[a], lam[b])] for a, b in p.edges)
                out.add((p.id, tuple(sorted(lam.items())), accepted[last].t))
    return out


# -- coefficient occurrences -----------------------------------------------------------


def cco_oracle(coeffs, n_pairs: int) -> list[float]:
    """Cumulative occurrence by explicit loops over every value and cell."""
    rows = [list(map(int, row)) for row in coeffs]
    omega = []
    for pi in range(101):
        hits = 0
        for row in rows:
            for value in row:
                if value <= pi:
                    hits += 1
        omega.append(hits / n_pairs)
    return omega


def invert_oracle(omega: list[float], k: float) -> tuple[int, bool]:
    for pi, value in enumerate(omega):
        if value >= k:
            return pi, False
    return len(omega) - 1, True


# -- feature statistic ------------------------------------------------------------


def chi_square_pearson(f: float, s: float, t: int) -> float:
    """Two-cell Pearson statistic: current tick against the other t-1 ticks."""
    expected_now = s / t
    expected_rest = s * (t - 1) / t
    rest = s - f
    return (f - expected_now) ** 2 / expected_now + (rest - expected_rest) ** 2 / expected_rest


def chi_square_scaled(f: float, s: float, t: int) -> float:
    """Deviation form: (t f - s)^2 / (s (t - 1))."""
    return (t * f - s) ** 2 / (s * (t - 1))


def rank_score_literal(history: list[float], current: float) -> float:
    """Fraction of the earlier minimum p-values that are <= the current one."""
    if not history:
        return 1.0
    return sum(1 for p in history if p <= current) / len(history)


# -- end-to-end static detection ------------------------------------------------------


@dataclass
class _EntityHistory:
    ticks: list
    values: list  # per observation, one value per feature
    pmins: list


def _pvalue(x2: float) -> float:
    from scipy.stats import chi2

    return float(chi2.sf(x2, 1))


class _HistoryScorer:
    """Anomaly scores recomputed from each entity's raw observation history."""

    def __init__(self, features: Optional[list[Feature]] = None, resolution: int = 100, min_history: int = 0) -> None:
        self.features = features or default_features()
        self.resolution = resolution
        self.min_history = min_history
        self.hist: dict[int, _EntityHistory] = {}
        self.entity_score: dict[int, float] = {}
        self.relation_score: dict[tuple[int, int], float] = {}

    def _observe(self, entity: int, modality: int, tick: int, is_source: bool) -> float:
        h = self.hist.setdefault(entity, _EntityHistory([], [], []))
        last = h.ticks[-1] if h.ticks else None
        n = len(h.ticks) + 1
        obs = Observation(entity, modality, tick, is_source, last, n)
        row = []
        for feat in self.features:
            raw = feat.fn(obs)
            row.append(int(raw) if feat.integral else int(round(raw * self.resolution)))
        h.ticks.append(tick)
        h.values.append(row)
        pmin = 1.0
        for fi in range(len(self.features)):
            s = sum(r[fi] for r in h.values)
            f = sum(r[fi] for r, tk in zip(h.values, h.ticks) if tk == tick)
            if n < 2 or s <= 0:
                continue
            pmin = min(pmin, _pvalue(chi_square_pearson(f, s, n)))
        score = rank_score_literal(h.pmins, pmin) if len(h.pmins) >= self.min_history else 1.0
        h.pmins.append(pmin)
        self.entity_score[entity] = score
        return score

    def observe(self, s: StreamElement) -> None:
        su = self._observe(s.u, s.m, s.t, True)
        sv = self._observe(s.u_prime, s.m_prime, s.t, False)
        self.relation_score[(s.u, s.u_prime)] = min(su, sv)


def _subgraph_verdict(lam: dict, edges, ent_scores: dict, rel_scores: dict, alpha: float, confidence: float) -> bool:
    ents = sorted(set(lam.values()))
    rels = [(lam[a], lam[b]) for a, b in edges]
    score = {("v", e): ent_scores.get(e, 1.0) for e in ents}
    score.update({("e",) + r: rel_scores.get(r, 1.0) for r in rels})
    sig = {k for k, v in score.items() if v < alpha}
    neighbours: dict = {("v", e): [] for e in ents}
    for r in rels:
        neighbours[("e",) + r] = [("v", r[0]), ("v", r[1])]
        neighbours[("v", r[0])].append(("e",) + r)
        neighbours[("v", r[1])].append(("e",) + r)
    good = 0
    for k in score:
        if k in sig or sum(1 for n in neighbours[k] if n in sig) >= 2:
            good += 1
    return good / len(score) >= confidence


def static_rumours(
    stream: list[StreamElement],
    patterns: list[RumourPattern],
    n_modalities: int,
    detector: str = "anomaly",
    anomaly: Optional[AnomalyConfig] = None,
) -> set[tuple[str, tuple]]:
    """Rumour set of a no-shed run, recomputed statically.

    Every match is found on the final graph. It is judged with the scores
    that held right after its completing relation arrived.
    """
    anomaly = anomaly or AnomalyConfig(exact=True)
    accepted = accepted_elements(stream, n_modalities)
    by_id = {p.id: p for p in patterns}
    pos = {(s.u, s.u_prime): i for i, s in enumerate(accepted)}
    labels = {(s.u, s.u_prime): bool(s.rumour_label) for s in accepted}
    completing: dict[int, list] = {}
    for pid, mapping, _ in static_matches(accepted, patterns):
        lam = dict(mapping)
        last = max(pos[(lam[a], lam[b])] for a, b in by_id[pid].edges)
        completing.setdefault(last, []).append((pid, mapping))
    out = set()
    if detector == "ground":
        for found in completing.values():
            for pid, mapping in found:
                lam = dict(mapping)
                if all(labels[(lam[a], lam[b])] for a, b in by_id[pid].edges):
                    out.add((pid, mapping))
        return out
    scorer = _HistoryScorer(resolution=anomaly.value_resolution, min_history=anomaly.min_history)
    for i, s in enumerate(accepted):
        scorer.observe(s)
        for pid, mapping in completing.get(i, ()):
            if _subgraph_verdict(dict(mapping), by_id[pid].edges, scorer.entity_score, scorer.relation_score,
                                 anomaly.alpha_sig, anomaly.confidence_threshold):
                out.add((pid, mapping))
    return out
