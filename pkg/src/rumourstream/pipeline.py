"""End-to-end pipeline: ingest -> shed -> bounded buffer -> match -> detect,
with detected rumours fed back into the coefficient model.

The default driver is a deterministic discrete-event simulation. Elements
arrive at their ``arrival_ms`` and a single server processes the buffer in
FIFO order. Each element costs a fixed service time, or the measured wall
time of matching and detection in ``service="measured"`` mode. The
two-thread driver in ``run_threaded`` does the same work on real threads.

All metrics are computed from the event log alone (``compute_metrics``).
Reloading a persisted log reproduces the report exactly.
"""

from __future__ import annotations

import json
import logging
import math
import queue
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

from .anomaly import AnomalyConfig, AnomalyDetector, SubgraphScore
from .coeff import CoefficientModel, scale_position
from .matcher import IncrementalMatcher, PatternSet
from .model import EntityInterner, ModalityRegistry, PatternMatch, RumourPattern, StreamElement, StreamError, WindowState
from .shedder import Pending, Shedder, SheddingConfig

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class CoeffConfig:
    drift_threshold: float = 0.10
    w_bar_mode: str = "max-seen"
    decay: float = 0.98
    feedback: str = "rumour"  # rumour | all

    def __post_init__(self) -> None:
        if self.w_bar_mode not in ("max-seen", "fixed"):
            raise ConfigError(f"unknown w_bar_mode {self.w_bar_mode!r}")
        if self.feedback not in ("rumour", "all"):
            raise ConfigError(f"unknown feedback mode {self.feedback!r}")


@dataclass
class PipelineConfig:
    shed: SheddingConfig = field(default_factory=SheddingConfig)
    anomaly: AnomalyConfig = field(default_factory=AnomalyConfig)
    coeff: CoeffConfig = field(default_factory=CoeffConfig)
    detector: str = "ground"  # ground | anomaly
    service: str = "fixed"  # fixed | measured
    service_ms: Optional[float] = None  # fixed service time; defaults to shed.t_match_ms
    warmup_fraction: float = 0.1
    threads: int = 1
    patterns_path: Optional[str] = None
    stream_path: Optional[str] = None
    metrics_path: Optional[str] = None
    events_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.detector not in ("ground", "anomaly"):
            raise ConfigError(f"unknown detector {self.detector!r}")
        if self.service not in ("fixed", "measured"):
            raise ConfigError(f"unknown service model {self.service!r}")
        if not 0 <= self.warmup_fraction < 1:
            raise ConfigError("warmup_fraction must lie in [0, 1)")
        if self.threads not in (1, 2):
            raise ConfigError("threads must be 1 or 2")

    @property
    def fixed_service_ms(self) -> float:
        return self.service_ms if self.service_ms is not None else self.shed.t_match_ms

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        doc = _undot(doc)
        kwargs: dict[str, Any] = {}
        sections = {"shed": SheddingConfig, "anomaly": AnomalyConfig, "coeff": CoeffConfig}
        known = {f.name for f in fields(cls)}
        for key, value in doc.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if key in sections:
                if not isinstance(value, dict):
                    raise ConfigError(f"section {key!r} must be a mapping")
                sub_known = {f.name for f in fields(sections[key])}
                bad = set(value) - sub_known
                if bad:
                    raise ConfigError(f"unknown key(s) in {key}: {sorted(bad)}")
                try:
                    kwargs[key] = sections[key](**value)
                except ValueError as exc:
                    raise ConfigError(f"{key}: {exc}") from None
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def with_overrides(self, **dotted: Any) -> "PipelineConfig":
        doc = self.to_dict()
        for key, value in dotted.items():
            section, _, name = key.partition("__") if "__" in key else key.partition(".")
            if name:
                doc[section][name] = value
            else:
                doc[section] = value
        return PipelineConfig.from_dict(doc)


def _undot(doc: dict) -> dict:
    out: dict[str, Any] = {}
    for key, value in doc.items():
        if "." in key:
            head, tail = key.split(".", 1)
            out.setdefault(head, {})
            out[head] = {**out[head], **_undot({tail: value})}
        elif isinstance(value, dict) and key in out:
            out[key] = {**out[key], **value}
        else:
            out[key] = value
    return out


def load_config(path: str | Path) -> PipelineConfig:
    import yaml

    text = Path(path).read_text(encoding="utf-8")
    doc = yaml.safe_load(text) or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return PipelineConfig.from_dict(doc)


# -- metrics ------------------------------------------------------------------


def f_beta(tp: int, fp: int, fn: int, beta: float) -> float:
    if tp + fp + fn <= 0:
        raise ValueError("f_beta needs at least one positive or prediction")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision == 0.0 and recall == 0.0:
        return 0.0
    b2 = beta * beta
    return (1 + b2) * precision * recall / (b2 * precision + recall)


def match_key(pattern: str, lam: dict) -> str:
    return pattern + "|" + ",".join(f"{k}={lam[k]}" for k in sorted(lam))


def _pct(values: list[float], q: float) -> Optional[float]:
    if not values:
        return None
    return float(np.percentile(np.asarray(values, dtype=float), q))


def compute_metrics(events: list[dict]) -> dict:
    """Metrics report from an event log (the only input)."""
    header = next((e for e in events if e["action"] == "header"), {})
    cfg = header.get("config", {})
    reference = header.get("reference")
    theta = cfg.get("shed", {}).get("theta_ms")
    warmup_windows = header.get("warmup_windows", 0)

    accepted = [e for e in events if e["action"] == "accept"]
    dropped = [e for e in events if e["action"] == "drop"]
    rumours = [e for e in events if e["action"] == "rumour"]
    matches = [e for e in events if e["action"] == "match"]
    windows = [e for e in events if e["action"] == "window"]
    total = len(accepted) + len(dropped)

    labelled_total = sum(1 for e in accepted + dropped if e.get("label"))
    labelled_dropped = sum(1 for e in dropped if e.get("label"))
    late = [e for e in accepted + dropped if e.get("win", 0) >= warmup_windows]
    late_labelled = sum(1 for e in late if e.get("label"))
    late_dropped = sum(1 for e in late if e.get("label") and e["action"] == "drop")

    rumour_keys = sorted({e["key"] for e in rumours})
    predicted = {tuple(edge) for e in rumours for edge in e["edges"]}
    tp = fp = fn = 0
    for e in accepted + dropped:
        pos = bool(e.get("label"))
        pred = (e["u"], e["v"]) in predicted and e["action"] == "accept"
        if pred and pos:
            tp += 1
        elif pred:
            fp += 1
        elif pos:
            fn += 1
    beta = labelled_total / total if total else 0.0
    fb = f_beta(tp, fp, fn, beta) if labelled_total and tp + fp + fn else None

    lat = [e["finish_ms"] - e["arrival_ms"] for e in accepted if e.get("finish_ms") is not None]
    span_ms = (
        max(e["finish_ms"] for e in accepted) - min(e["arrival_ms"] for e in accepted)
        if accepted and lat
        else 0.0
    )

    report: dict[str, Any] = {
        "elements": total,
        "processed": len(accepted),
        "dropped": len(dropped),
        "rejected": sum(1 for e in accepted if e.get("status", "ok") != "ok"),
        "shedding_ratio": len(dropped) / total if total else 0.0,
        "drop_reasons": _count(e.get("reason") for e in dropped),
        "match_count": len(matches),
        "detection_count": len(rumour_keys),
        "rumour_elements": labelled_total,
        "error_rate": labelled_dropped / labelled_total if labelled_total else None,
        "error_rate_post_warmup": late_dropped / late_labelled if late_labelled else None,
        "f_beta": fb,
        "beta": beta,
        "confusion": {"tp": tp, "fp": fp, "fn": fn},
        "latency_ms": {
            "p50": _pct(lat, 50),
            "p95": _pct(lat, 95),
            "max": max(lat) if lat else None,
            "mean": float(sum(lat) / len(lat)) if lat else None,
        },
        "latency_violations": sum(1 for x in lat if theta is not None and x > theta),
        "throughput_per_s": len(accepted) / (span_ms / 1000.0) if span_ms > 0 else None,
        "windows": len(windows),
        "retrains": sum(1 for w in windows if w.get("retrained")),
        "starvation": windows[-1].get("starvation", 0) if windows else 0,
    }
    if reference is not None:
        f_ref = reference["count"]
        ref_keys = set(reference["keys"])
        report["reference_detection_count"] = f_ref
        if f_ref > 0:
            report["shedding_coefficient"] = len(ref_keys & set(rumour_keys)) / f_ref
            report["coefficient_loss"] = (f_ref - len(rumour_keys)) / f_ref
        else:
            report["shedding_coefficient"] = None
            report["coefficient_loss"] = None
    else:
        report["reference_detection_count"] = None
        report["shedding_coefficient"] = None
        report["coefficient_loss"] = None
    report["config"] = cfg
    return report


def _count(items: Iterable) -> dict:
    out: dict = {}
    for x in items:
        out[x] = out.get(x, 0) + 1
    return dict(sorted(out.items(), key=lambda kv: str(kv[0])))


def read_events(path: str | Path) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_events(path: str | Path, events: list[dict]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for e in events:
            fh.write(json.dumps(e, separators=(",", ":")))
            fh.write("\n")


def metrics_from_log(path: str | Path) -> dict:
    return compute_metrics(read_events(path))


# -- detectors ----------------------------------------------------------------


class GroundDetector:
    """A match is a rumour iff every one of its relations carries a rumour label."""

    def __init__(self) -> None:
        self.labels: dict[tuple[int, int], bool] = {}

    def observe(self, s: StreamElement) -> None:
        self.labels[(s.u, s.u_prime)] = bool(s.rumour_label)

    def judge(self, lam: dict, pattern_edges) -> SubgraphScore:
        edges = [(lam[a], lam[b]) for a, b in pattern_edges]
        hits = sum(1 for e in edges if self.labels.get(e, False))
        return SubgraphScore(hits / len(edges), hits == len(edges))


class _AnomalyAdapter:
    def __init__(self, cfg: AnomalyConfig) -> None:
        self.inner = AnomalyDetector(cfg)

    def observe(self, s: StreamElement) -> None:
        self.inner.observe(s)

    def judge(self, lam: dict, pattern_edges) -> SubgraphScore:
        return self.inner.judge(lam, pattern_edges)


def make_detector(cfg: PipelineConfig):
    if cfg.detector == "ground":
        return GroundDetector()
    return _AnomalyAdapter(cfg.anomaly)


# -- the detector stage ---------------------------------------------------------


@dataclass
class _ElementInfo:
    pair: int
    position: int
    window: int


class DetectionStage:
    """Matcher + detector + coefficient feedback; consumes admitted elements."""

    def __init__(self, cfg: PipelineConfig, patterns: PatternSet, registry: ModalityRegistry, model: CoefficientModel,
                 events: list, interner: Optional[EntityInterner] = None) -> None:
        self.cfg = cfg
        self.patterns = patterns
        self.registry = registry
        self.matcher = IncrementalMatcher(patterns)
        self.detector = make_detector(cfg)
        self.model = model
        self.events = events
        self.interner = interner
        self.info: dict[tuple[int, int], _ElementInfo] = {}
        self.window_sizes: dict[int, int] = {}
        self.rumour_keys: list[str] = []

    def _name(self, eid: int):
        return self.interner.key(eid) if self.interner is not None else eid

    def process(self, item: Pending) -> str:
        """Returns the element status ('ok' or a rejection reason)."""
        s: StreamElement = item.element
        try:
            matches = self.matcher.process(s)
        except StreamError as exc:
            return type(exc).__name__
        self.detector.observe(s)
        self.info[(s.u, s.u_prime)] = _ElementInfo(item.pair, item.position, item.window)
        for m in matches:
            self._handle_match(m)
        return "ok"

    def _handle_match(self, m: PatternMatch) -> None:
        pattern: RumourPattern = self.patterns.by_id[m.pattern]
        lam = m.lam
        named = {k: self._name(v) for k, v in lam.items()}
        key = match_key(m.pattern, named)
        self.events.append({"action": "match", "t": m.matched_at, "pattern": m.pattern, "key": key})
        verdict = self.detector.judge(lam, pattern.edges)
        edges = m.graph_edges(pattern)
        if verdict.is_rumour:
            self.rumour_keys.append(key)
            self.events.append({
                "action": "rumour", "t": m.matched_at, "pattern": m.pattern, "key": key,
                "score": verdict.score,
                "edges": [[self._name(u), self._name(v)] for u, v in edges],
            })
        if verdict.is_rumour or self.cfg.coeff.feedback == "all":
            self._feedback(edges)

    def _feedback(self, edges) -> None:
        cm = self.model.matrix
        for e in edges:
            info = self.info.get(e)
            if info is None:
                continue
            size = self.window_sizes.get(info.window, 0)
            pos = scale_position(info.position, size, cm.w_bar) if size else min(info.position, cm.w_bar)
            cm.record(info.pair, pos)


# -- simulation driver ----------------------------------------------------------


@dataclass
class PipelineResult:
    report: dict
    events: list[dict]
    rumour_keys: list[str]
    stage: DetectionStage
    shedder: Shedder
    model: CoefficientModel

    @property
    def rumour_set(self) -> set[str]:
        return set(self.rumour_keys)


def _arrival_times(stream: list[StreamElement], spacing_ms: float) -> list[float]:
    if all(s.arrival_ms is not None for s in stream):
        return [float(s.arrival_ms) for s in stream]
    if any(s.arrival_ms is not None for s in stream):
        raise ConfigError("arrival times must be given for all elements or none")
    return [i * spacing_ms for i in range(len(stream))]


def _uses_window_ids(stream: list[StreamElement]) -> bool:
    has = [s.window is not None for s in stream]
    if any(has) and not all(has):
        raise ConfigError("window ids must be given for all elements or none")
    return bool(stream) and all(has)


def _header(cfg: PipelineConfig, reference: Optional["ReferenceResult"], n_windows_total: int) -> dict:
    return {
        "action": "header",
        "config": cfg.to_dict(),
        "reference": None if reference is None else {"count": reference.count, "keys": sorted(reference.keys)},
        "warmup_windows": int(math.floor(cfg.warmup_fraction * n_windows_total)),
    }


def run(
    cfg: PipelineConfig,
    stream: list[StreamElement],
    registry: ModalityRegistry,
    patterns: list[RumourPattern],
    reference: Optional["ReferenceResult"] = None,
    interner: Optional[EntityInterner] = None,
) -> PipelineResult:
    """Process the whole stream and return the metrics report and event log."""
    if cfg.threads == 2:
        return run_threaded(cfg, stream, registry, patterns, reference, interner)
    stream = list(stream)
    shed_cfg = cfg.shed
    variable = _uses_window_ids(stream)
    w = shed_cfg.window_size
    n_windows_total = len({s.window for s in stream}) if variable else math.ceil(len(stream) / w)

    events: list[dict] = [_header(cfg, reference, n_windows_total)]
    model = CoefficientModel(len(registry) ** 2, w, cfg.coeff.drift_threshold, cfg.coeff.decay)
    pset = PatternSet(patterns, len(registry))
    stage = DetectionStage(cfg, pset, registry, model, events, interner)
    shedder = Shedder(shed_cfg, model)
    svc_fixed = cfg.fixed_service_ms
    measured = cfg.service == "measured"
    arrivals = _arrival_times(stream, svc_fixed)
    name = stage._name

    buf: deque[Pending] = deque()
    busy_until = -math.inf

    def elem_fields(p: Pending) -> dict:
        s = p.element
        return {"t": s.t, "seq": p.seq, "u": name(s.u), "v": name(s.u_prime), "pair": p.pair,
                "pos": p.position, "win": p.window, "label": bool(s.rumour_label)}

    def drain(until: float) -> None:
        nonlocal busy_until
        while buf and max(busy_until, buf[0].arrival_ms) <= until:
            item = buf.popleft()
            start = max(busy_until, item.arrival_ms)
            t0 = time.perf_counter()
            status = stage.process(item)
            svc = (time.perf_counter() - t0) * 1000.0 if measured else svc_fixed
            shedder.observe_service(svc)
            busy_until = start + svc
            ev = elem_fields(item)
            ev.update(action="accept", status=status, arrival_ms=item.arrival_ms, start_ms=start, finish_ms=busy_until)
            events.append(ev)

    def occupancy(now: float) -> int:
        return len(buf) + (1 if busy_until > now else 0)

    window = WindowState(capacity=w)
    win_index = 0
    current_win_id = stream[0].window if variable and stream else None
    shedder.start_window(w)

    def close_window(b: int) -> None:
        nonlocal win_index
        size = len(window)
        stage.window_sizes[win_index] = size
        if variable and cfg.coeff.w_bar_mode == "max-seen" and size > model.matrix.w_bar:
            model.matrix.grow(size)
        retrained = model.refresh()
        shedder.after_element(b, window_done=True)
        st = shedder.state
        events.append({
            "action": "window", "index": win_index, "size": size, "b": b,
            "mre": model.monitor.mre, "retrained": retrained, "shedding": st.shedding,
            "pi_min": st.pi_min, "k": st.k, "alpha": st.alpha, "r": st.r, "r_match": st.r_match,
            "saturated": st.saturated, "starvation": shedder.starvation,
        })
        window.reset()
        win_index += 1
        shedder.start_window(model.matrix.w_bar if variable else w)

    for seq, (s, at) in enumerate(zip(stream, arrivals)):
        drain(at)
        if variable and s.window != current_win_id:
            close_window(occupancy(at))
            current_win_id = s.window
        b = occupancy(at)
        shedder.measure(at, b)
        position = window.append(s)
        col = min(position, model.matrix.w_bar)
        pair = registry.pair_index(s.m, s.m_prime)
        adm = shedder.admit(pair, col)
        item = Pending(s, seq, at, pair, position, adm.coefficient, win_index)
        if not adm.keep:
            ev = elem_fields(item)
            ev.update(action="drop", reason=adm.reason, at_ms=at)
            events.append(ev)
        else:
            admitted = True
            while shedder.over_bound(b):
                candidates = list(buf) + [item]
                victims = shedder.victims(candidates)
                if not victims:
                    break
                for i in victims:
                    victim = candidates[i]
                    ev = elem_fields(victim)
                    ev.update(action="drop", reason="guard", at_ms=at)
                    events.append(ev)
                keep_ids = set(range(len(candidates))) - set(victims)
                if len(candidates) - 1 in victims:
                    admitted = False
                buf = deque(candidates[i] for i in sorted(keep_ids) if candidates[i] is not item)
                b = occupancy(at)
                if not admitted:
                    break
            if admitted:
                buf.append(item)
        if not variable and len(window) >= w:
            close_window(occupancy(at))
        elif not variable:
            shedder.after_element(occupancy(at), window_done=False)
    drain(math.inf)
    if len(window):
        close_window(occupancy(math.inf))

    report = compute_metrics(events)
    _persist(cfg, events, report)
    return PipelineResult(report, events, stage.rumour_keys, stage, shedder, model)


def _persist(cfg: PipelineConfig, events: list[dict], report: dict) -> None:
    if cfg.events_path:
        write_events(cfg.events_path, events)
    if cfg.metrics_path:
        Path(cfg.metrics_path).write_text(json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")


# -- reference run ---------------------------------------------------------------


@dataclass
class ReferenceResult:
    count: int
    keys: set[str]


def reference_run(
    cfg: PipelineConfig,
    stream: list[StreamElement],
    registry: ModalityRegistry,
    patterns: list[RumourPattern],
    interner: Optional[EntityInterner] = None,
) -> ReferenceResult:
    """Same pipeline without shedding or latency bound."""
    doc = cfg.to_dict()
    doc["shed"]["strategy"] = "none"
    doc["threads"] = 1
    doc["events_path"] = None
    doc["metrics_path"] = None
    ref_cfg = PipelineConfig.from_dict(doc)
    res = run(ref_cfg, stream, registry, patterns, None, interner)
    return ReferenceResult(len(res.rumour_set), res.rumour_set)


# -- threaded driver --------------------------------------------------------------


def run_threaded(
    cfg: PipelineConfig,
    stream: list[StreamElement],
    registry: ModalityRegistry,
    patterns: list[RumourPattern],
    reference: Optional[ReferenceResult] = None,
    interner: Optional[EntityInterner] = None,
    time_scale: float = 1.0,
) -> PipelineResult:
    """Two real stages joined by a bounded queue.

    The ingest thread paces arrivals by ``arrival_ms`` scaled by
    ``time_scale``. The guard can only refuse the arriving element, because
    items cannot be pulled back out of the queue. Results depend on real
    scheduling, so tests that need determinism use ``run``.
    """
    stream = list(stream)
    shed_cfg = cfg.shed
    w = shed_cfg.window_size
    if _uses_window_ids(stream):
        raise ConfigError("the threaded driver supports fixed-size windows only")
    events: list[dict] = [_header(cfg, reference, math.ceil(len(stream) / w))]
    lock = threading.Lock()
    model = CoefficientModel(len(registry) ** 2, w, cfg.coeff.drift_threshold, cfg.coeff.decay)
    pset = PatternSet(patterns, len(registry))
    stage_events: list[dict] = []
    stage = DetectionStage(cfg, pset, registry, model, stage_events, interner)
    shedder = Shedder(shed_cfg, model)
    arrivals = _arrival_times(stream, cfg.fixed_service_ms)
    name = stage._name
    buf: queue.Queue = queue.Queue(maxsize=shed_cfg.b_max)
    in_system = [0]  # occupancy counter shared by both stages
    done = object()
    t_origin = time.monotonic()

    def now_ms() -> float:
        return (time.monotonic() - t_origin) * 1000.0 / time_scale

    def consumer() -> None:
        while True:
            item = buf.get()
            if item is done:
                return
            start = now_ms()
            t0 = time.perf_counter()
            with lock:
                stage_events.clear()
                status = stage.process(item)
                produced = list(stage_events)
            svc = (time.perf_counter() - t0) * 1000.0 / time_scale
            finish = now_ms()
            s = item.element
            with lock:
                shedder.observe_service(svc)
                in_system[0] -= 1
                events.append({"action": "accept", "t": s.t, "seq": item.seq, "u": name(s.u), "v": name(s.u_prime),
                               "pair": item.pair, "pos": item.position, "win": item.window,
                               "label": bool(s.rumour_label), "status": status,
                               "arrival_ms": item.arrival_ms, "start_ms": start, "finish_ms": finish})
                events.extend(produced)

    worker = threading.Thread(target=consumer, daemon=True)
    worker.start()
    window = WindowState(capacity=w)
    win_index = 0
    shedder.start_window(w)
    for seq, (s, at) in enumerate(zip(stream, arrivals)):
        delay = at - now_ms()
        if delay > 0:
            time.sleep(delay * time_scale / 1000.0)
        arrived = max(at, now_ms())
        with lock:
            b = in_system[0]
            shedder.measure(arrived, b)
            position = window.append(s)
            pair = registry.pair_index(s.m, s.m_prime)
            adm = shedder.admit(pair, min(position, model.matrix.w_bar))
            keep = adm.keep and not shedder.over_bound(b) and b < shed_cfg.b_max
            item = Pending(s, seq, arrived, pair, position, adm.coefficient, win_index)
            if keep:
                in_system[0] += 1
            else:
                events.append({"action": "drop", "t": s.t, "seq": seq, "u": name(s.u), "v": name(s.u_prime),
                               "pair": pair, "pos": position, "win": win_index, "label": bool(s.rumour_label),
                               "reason": adm.reason or "guard", "at_ms": arrived})
        if keep:
            buf.put(item)
        with lock:
            if len(window) >= w:
                stage.window_sizes[win_index] = len(window)
                retrained = model.refresh()
                shedder.after_element(in_system[0], window_done=True)
                st = shedder.state
                events.append({"action": "window", "index": win_index, "size": len(window), "b": in_system[0],
                               "mre": model.monitor.mre, "retrained": retrained, "shedding": st.shedding,
                               "pi_min": st.pi_min, "k": st.k, "alpha": st.alpha, "r": st.r,
                               "r_match": st.r_match, "saturated": st.saturated,
                               "starvation": shedder.starvation})
                window.reset()
                win_index += 1
                shedder.start_window(w)
            else:
                shedder.after_element(in_system[0], window_done=False)
    buf.put(done)
    worker.join()
    report = compute_metrics(events)
    _persist(cfg, events, report)
    return PipelineResult(report, events, stage.rumour_keys, stage, shedder, model)
