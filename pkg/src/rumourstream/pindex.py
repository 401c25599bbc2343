"""Per-entity, per-modality in/out degree counters (the P-index)."""

from __future__ import annotations

from typing import Literal

from .model import StreamElement


class PIndex:
    def __init__(self, n_modalities: int) -> None:
        self.n_modalities = n_modalities
        self.in_counts: dict[int, list[int]] = {}
        self.out_counts: dict[int, list[int]] = {}

    def _row(self, table: dict[int, list[int]], v: int) -> list[int]:
        row = table.get(v)
        if row is None:
            row = table[v] = [0] * self.n_modalities
        return row

    def update(self, s: StreamElement) -> None:
        self._row(self.out_counts, s.u)[s.m_prime] += 1
        self._row(self.in_counts, s.u_prime)[s.m] += 1

    def degree(self, v: int, m: int, direction: Literal["in", "out"]) -> int:
        table = self.in_counts if direction == "in" else self.out_counts
        row = table.get(v)
        return row[m] if row is not None else 0

    def satisfies(self, v: int, need_out: tuple[int, ...], need_in: tuple[int, ...]) -> bool:
        """Check precomputed per-modality requirements (see ``PatternSet``)."""
        out_row = self.out_counts.get(v)
        in_row = self.in_counts.get(v)
        for m, need in enumerate(need_out):
            if need and (out_row is None or out_row[m] < need):
                return False
        for m, need in enumerate(need_in):
            if need and (in_row is None or in_row[m] < need):
                return False
        return True


def update_index(index: PIndex, s: StreamElement) -> None:
    index.update(s)


def degree(index: PIndex, v: int, m: int, direction: Literal["in", "out"]) -> int:
    return index.degree(v, m, direction)


def requirements(pattern, var: str, n_modalities: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Per-modality out/in degree a graph vertex needs to host ``var``."""
    mod = pattern.modality_of
    need_out = [0] * n_modalities
    need_in = [0] * n_modalities
    for a, b in pattern.edges:
        if a == var:
            need_out[mod[b]] += 1
        if b == var:
            need_in[mod[a]] += 1
    return tuple(need_out), tuple(need_in)


def satisfies_necessary(index: PIndex, v: int, pattern, var: str) -> bool:
    """False means no match of ``pattern`` can map ``var`` to ``v`` right now."""
    need_out, need_in = requirements(pattern, var, index.n_modalities)
    return index.satisfies(v, need_out, need_in)
