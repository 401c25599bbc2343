"""Coefficient model for load shedding.

``CoefficientMatrix`` counts how often each (second-order modality, window
position) cell contributed to a detected rumour. Coefficients are the counts
max-normalised to integers in [0, 100]. The cumulative coefficient occurrence
(CCO) ``omega[pi]`` is the expected number of window positions whose
coefficient is <= pi, with each position's weight shared equally among the
|M^2| second-order modalities. Its inverse turns "drop k elements" into a
coefficient threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

N_LEVELS = 101  # coefficient values 0..100


class PositionOutOfRange(ValueError):
    pass


class CoefficientMatrix:
    def __init__(self, n_pairs: int, w_bar: int, decay: float = 1.0) -> None:
        if n_pairs < 1 or w_bar < 1:
            raise ValueError("matrix needs at least one row and one column")
        if not 0 < decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        self.n_pairs = n_pairs
        self.decay = decay
        self.counts = np.zeros((n_pairs, w_bar), dtype=float)
        self._coeffs: np.ndarray | None = None

    @property
    def w_bar(self) -> int:
        return self.counts.shape[1]

    def grow(self, w_bar: int) -> None:
        """Widen to ``w_bar`` columns (variable window sizes, max-seen mode)."""
        if w_bar > self.w_bar:
            wider = np.zeros((self.n_pairs, w_bar), dtype=float)
            wider[:, : self.w_bar] = self.counts
            self.counts = wider
            self._coeffs = None

    def record(self, pair: int, position: int, amount: float = 1.0) -> None:
        if not 1 <= position <= self.w_bar:
            raise PositionOutOfRange(f"position {position} outside 1..{self.w_bar}")
        self.counts[pair, position - 1] += amount
        self._coeffs = None

    def age(self) -> None:
        """Apply one step of exponential forgetting (called per window)."""
        if self.decay < 1.0:
            self.counts *= self.decay
            self._coeffs = None

    @property
    def coeffs(self) -> np.ndarray:
        if self._coeffs is None:
            top = self.counts.max()
            if top <= 0:
                self._coeffs = np.zeros(self.counts.shape, dtype=np.int64)
            else:
                self._coeffs = np.floor(self.counts * (100.0 / top) + 1e-9).astype(np.int64)
                np.clip(self._coeffs, 0, 100, out=self._coeffs)
        return self._coeffs

    @property
    def empty(self) -> bool:
        return not self.counts.any()

    def coefficient(self, pair: int, position: int) -> int:
        return int(self.coeffs[pair, min(max(position, 1), self.w_bar) - 1])


def record_outcome(cm: CoefficientMatrix, contributions: Iterable[tuple[int, int]]) -> None:
    for pair, position in contributions:
        cm.record(pair, position)


@dataclass
class CCO:
    omega: np.ndarray  # cumulative, length 101
    occurrences: np.ndarray  # per-value share, length 101
    snapshot_of: np.ndarray  # coefficient matrix the CCO was built from
    counts_snapshot: np.ndarray = field(repr=False, default=None)

    @property
    def total(self) -> float:
        return float(self.omega[-1])

    def coefficient(self, pair: int, position: int) -> int:
        w = self.snapshot_of.shape[1]
        return int(self.snapshot_of[pair, min(max(position, 1), w) - 1])


def build_cco(cm: CoefficientMatrix) -> CCO:
    coeffs = cm.coeffs.copy()
    # occurrences counted as integers, divided once, so omega[100] == w_bar exactly
    hits = np.bincount(coeffs.ravel(), minlength=N_LEVELS)[:N_LEVELS]
    occurrences = hits / cm.n_pairs
    omega = np.cumsum(hits) / cm.n_pairs
    return CCO(omega=omega, occurrences=occurrences, snapshot_of=coeffs, counts_snapshot=cm.counts.copy())


class Threshold(NamedTuple):
    pi_min: int
    saturated: bool


def invert_cco(cco: CCO | np.ndarray, k: float) -> Threshold:
    """Smallest coefficient pi with omega[pi] >= k; 100 (saturated) if none."""
    if k < 0:
        raise ValueError("k must be non-negative")
    omega = cco.omega if isinstance(cco, CCO) else np.asarray(cco, dtype=float)
    if k > omega[-1]:
        return Threshold(len(omega) - 1, True)
    return Threshold(int(np.searchsorted(omega, k, side="left")), False)


def mean_relative_error(current: np.ndarray, snapshot: np.ndarray) -> float:
    """Mean of |cur - snap| / snap over cells where the snapshot is positive."""
    current = np.asarray(current, dtype=float)
    snapshot = np.asarray(snapshot, dtype=float)
    if current.shape != snapshot.shape:
        padded = np.zeros(current.shape)
        padded[:, : snapshot.shape[1]] = snapshot
        snapshot = padded
    mask = snapshot > 0
    if not mask.any():
        return 0.0
    return float(np.mean(np.abs(current[mask] - snapshot[mask]) / snapshot[mask]))


@dataclass
class DriftMonitor:
    """Compares the live counts against the counts the current CCO came from."""

    threshold: float = 0.10
    mre: float = 0.0
    snapshot: np.ndarray | None = None
    fired: int = 0

    def rebase(self, cm: CoefficientMatrix) -> None:
        self.snapshot = cm.counts.copy()
        self.mre = 0.0


def drift_check(dm: DriftMonitor, cm: CoefficientMatrix) -> bool:
    if dm.snapshot is None:
        raise ValueError("drift check needs a snapshot; build a CCO first")
    dm.mre = mean_relative_error(cm.counts, dm.snapshot)
    hit = dm.mre > dm.threshold
    if hit:
        dm.fired += 1
    return hit


class CoefficientModel:
    """Live matrix + the immutable CCO snapshot the shedder reads.

    ``refresh`` is called at window boundaries: it ages the counts, builds the
    first CCO as soon as any rumour has been recorded, and rebuilds it when
    the drift monitor fires.
    """

    def __init__(self, n_pairs: int, w_bar: int, drift_threshold: float = 0.10, decay: float = 1.0) -> None:
        self.matrix = CoefficientMatrix(n_pairs, w_bar, decay)
        self.monitor = DriftMonitor(drift_threshold)
        self.cco: CCO | None = None
        self.retrains = 0

    def refresh(self) -> bool:
        """Returns True when a (re)build happened."""
        self.matrix.age()
        if self.cco is None:
            if self.matrix.empty:
                return False
        elif not drift_check(self.monitor, self.matrix):
            return False
        self.cco = build_cco(self.matrix)
        self.monitor.rebase(self.matrix)
        self.retrains += 1
        return True

    def coefficient(self, pair: int, position: int) -> int:
        if self.cco is None:
            return 0
        return self.cco.coefficient(pair, position)


def scale_position(position: int, window_size: int, w_bar: int) -> int:
    """Map a position in a window of ``window_size`` onto ``w_bar`` columns."""
    if window_size <= 0 or window_size == w_bar:
        return min(max(position, 1), w_bar)
    return min(max(math.ceil(position * w_bar / window_size), 1), w_bar)
