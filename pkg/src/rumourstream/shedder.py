"""Load shedding: when to shed, how much, and what.

The coefficient strategy decides per element on arrival. An element is dropped
while shedding is active if its coefficient is <= ``pi_min``. Shedding is
switched on or off at window (or part) boundaries from the buffer occupancy.
Baselines react when the buffer reaches the latency bound and then drop ``k``
elements from the buffer by uniform, weighted or sorted selection.

Every shedding strategy also has a latency guard. An element may not enter
the buffer if its projected latency ``(b + 1) * t_match`` would exceed
``theta``. Each strategy then evicts a victim by its own rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .coeff import CoefficientModel, invert_cco

STRATEGIES = ("coefficient", "random", "weighted", "sort", "none")
INTERVAL_MODES = ("whole-window", "variable-parts")


@dataclass
class SheddingConfig:
    theta_ms: float = 1000.0
    b_max: int = 1000
    t_match_ms: float = 1.0  # initial estimate; refined online from service times
    window_size: int = 100
    strategy: str = "coefficient"
    interval_mode: str = "whole-window"
    measure_interval_ms: float = 1000.0
    seed: int = 0
    rate_smoothing: float = 0.5  # EWMA weight of the newest interval

    def __post_init__(self) -> None:
        if self.theta_ms <= 0:
            raise ValueError("theta must be positive")
        if self.b_max < self.window_size:
            raise ValueError("b_max must be at least the window size")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.interval_mode not in INTERVAL_MODES:
            raise ValueError(f"unknown interval mode {self.interval_mode!r}")
        if self.t_match_ms <= 0:
            raise ValueError("t_match must be positive")


@dataclass
class SheddingState:
    shedding: bool = False
    pi_min: int = 0
    k: float = 0.0
    alpha: float = 0.0
    r: float = 0.0
    r_match: float = 0.0
    z: float = 0.0
    v: int = 0
    saturated: bool = False


def compute_k(r: float, r_match: float, w_size: int, b: int, b_max: int) -> float:
    """Elements to drop from a window of ``w_size`` (unclamped)."""
    overload = (r - r_match) / r * w_size if r > 0 else -math.inf
    return max(overload, b - b_max + w_size)


def clamp_k(k: float, w_size: int) -> float:
    return min(max(k, 0.0), float(w_size))


def should_shed(b: int, alpha: float, theta: float, t_match: float) -> bool:
    return b > alpha * theta / t_match


def decide(position: int, pair: int, state: SheddingState, model) -> bool:
    """True = keep. Drops iff shedding is active and coefficient <= pi_min."""
    if not state.shedding:
        return True
    return model.coefficient(pair, position) > state.pi_min


def run_window_boundary(state: SheddingState, cco, b: int, theta: float, t_match: float, k_scale: float = 1.0) -> SheddingState:
    """Re-evaluate the shedding flag; on activation set ``pi_min`` from the CCO.

    ``k_scale`` converts a per-part ``k`` into whole-window units of the CCO.
    With ``k == 0`` there is nothing to shed; the inverse would still pick
    threshold 0 and drop every zero-coefficient element.
    """
    if cco is not None and state.k > 0 and should_shed(b, state.alpha, theta, t_match):
        thr = invert_cco(cco, state.k * k_scale)
        state.pi_min = thr.pi_min
        state.saturated = thr.saturated
        state.shedding = True
    else:
        state.shedding = False
    return state


def variable_parts(state: SheddingState, theta: float, t_match: float, w_current: int) -> int:
    """Part size for variable shedding intervals; ``w_current`` if no split is needed."""
    cap = theta / t_match
    state.z = cap - state.alpha * cap
    if w_current <= state.z:
        state.v = w_current
    else:
        state.v = max(1, math.floor(state.z))
    return state.v


def baseline_shed(
    strategy: str,
    window: Sequence,
    k: int,
    coefficients: Sequence[int],
    rng: np.random.Generator,
) -> set[int]:
    """Indices into ``window`` to drop."""
    n = len(window)
    k = int(min(max(k, 0), n))
    if k == 0:
        return set()
    if k == n:
        return set(range(n))
    if strategy == "random":
        return {int(i) for i in rng.choice(n, size=k, replace=False)}
    if strategy == "weighted":
        w = 101.0 - np.asarray(coefficients, dtype=float)
        return {int(i) for i in rng.choice(n, size=k, replace=False, p=w / w.sum())}
    if strategy in ("sort", "coefficient"):
        order = sorted(range(n), key=lambda i: (coefficients[i], i))
        return set(order[:k])
    raise ValueError(f"no baseline named {strategy!r}")


@dataclass
class Pending:
    """An admitted element waiting in the buffer."""

    element: object
    seq: int
    arrival_ms: float
    pair: int
    position: int
    coefficient: int
    window: int


@dataclass
class Admission:
    keep: bool
    position: int
    coefficient: int
    reason: Optional[str] = None


class Shedder:
    """Ingestion-side executor of the shedding procedure."""

    def __init__(self, cfg: SheddingConfig, model: CoefficientModel) -> None:
        self.cfg = cfg
        self.model = model
        self.state = SheddingState()
        self.rng = np.random.default_rng(cfg.seed)
        self.t_match = cfg.t_match_ms
        self.state.r_match = 1000.0 / self.t_match
        self._next_measure: Optional[float] = None
        self._interval_start = 0.0
        self._arrivals = 0
        self._rate_seen = False
        self.starvation = 0
        self.in_part = 0
        self.part_size = cfg.window_size

    # -- measurement ------------------------------------------------------

    def observe_service(self, service_ms: float) -> None:
        a = self.cfg.rate_smoothing
        self.t_match = a * service_ms + (1 - a) * self.t_match
        self.state.r_match = 1000.0 / self.t_match

    def measure(self, now_ms: float, b: int) -> bool:
        """Count an arrival; on an elapsed interval, refresh r, k and alpha."""
        if self._next_measure is None:
            self._interval_start = now_ms
            self._next_measure = now_ms + self.cfg.measure_interval_ms
        self._arrivals += 1
        if now_ms < self._next_measure:
            return False
        elapsed = (now_ms - self._interval_start) / 1000.0
        rate = self._arrivals / elapsed if elapsed > 0 else 0.0
        a = self.cfg.rate_smoothing
        st = self.state
        st.r = rate if not self._rate_seen else a * rate + (1 - a) * st.r
        self._rate_seen = True
        self._arrivals = 0
        self._interval_start = now_ms
        self._next_measure = now_ms + self.cfg.measure_interval_ms
        size = self.part_size
        raw = compute_k(st.r, st.r_match, size, b, self.cfg.b_max)
        if raw > size:
            self.starvation += 1
        st.k = clamp_k(raw, size)
        st.alpha = st.k / size
        return True

    # -- per element ------------------------------------------------------

    @property
    def model_ready(self) -> bool:
        return self.model.cco is not None

    def admit(self, pair: int, position: int) -> Admission:
        coef = self.model.coefficient(pair, position)
        strategy = self.cfg.strategy
        if strategy == "coefficient" and self.model_ready:
            if not decide(position, pair, self.state, self.model):
                return Admission(False, position, coef, "threshold")
        return Admission(True, position, coef)

    def over_bound(self, b: int) -> bool:
        """Would one more element in the system break the latency bound?"""
        if self.cfg.strategy == "none":
            return False
        return (b + 1) * self.t_match > self.cfg.theta_ms

    def victims(self, candidates: Sequence[Pending]) -> list[int]:
        """Indices of ``candidates`` to evict once the bound is reached."""
        strategy = self.cfg.strategy
        coefs = [c.coefficient for c in candidates]
        if strategy == "coefficient" and self.model_ready:
            i = min(range(len(candidates)), key=lambda j: (coefs[j], candidates[j].seq))
            return [i]
        if strategy == "coefficient":
            strategy = "random"  # cold start
        k = max(1, int(round(self.state.k)))
        return sorted(baseline_shed(strategy, candidates, k, coefs, self.rng))

    # -- boundaries -------------------------------------------------------

    def start_window(self, window_size: int) -> None:
        self.in_part = 0
        if self.cfg.interval_mode == "variable-parts":
            self.part_size = variable_parts(self.state, self.cfg.theta_ms, self.t_match, window_size)
        else:
            self.part_size = window_size

    def after_element(self, b: int, window_done: bool) -> bool:
        """Boundary bookkeeping; True when a boundary was evaluated."""
        self.in_part += 1
        if not window_done and self.in_part < self.part_size:
            return False
        self.in_part = 0
        if self.cfg.strategy == "coefficient":
            scale = self.model.matrix.w_bar / self.part_size
            run_window_boundary(self.state, self.model.cco, b, self.cfg.theta_ms, self.t_match, scale)
        return True
