"""Command line: ``rumourstream run | gen | oracle | table``.

Exit codes: 0 ok, 1 runtime error (bad stream, pattern or config file,
oracle mismatch), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .anomaly import AnomalyConfig, AnomalyDetector
from .coeff import CoefficientMatrix, build_cco, invert_cco
from .matcher import IncrementalMatcher, PatternSet
from .model import EntityInterner, ModalityRegistry
from .oracles import accepted_elements, cco_oracle, static_matches, static_rumours
from .patterns import PatternFileError, builtin_patterns, load_patterns
from .pipeline import ConfigError, PipelineConfig, load_config, match_key, reference_run, run
from .shedder import INTERVAL_MODES, STRATEGIES
from .streamio import StreamFormatError, read_stream, records_to_elements, write_stream
from .synth import POSITION_DISTS, RATE_PROFILES, SyntheticStreamSpec, generate, random_stream_records

log = logging.getLogger("rumourstream")

BUILTIN = "builtin"
TABLE_COLUMNS = (
    "strategy", "theta_ms", "window_size", "seed", "elements", "detection_count", "reference_detection_count",
    "shedding_coefficient", "coefficient_loss", "f_beta", "error_rate", "error_rate_post_warmup",
    "shedding_ratio", "latency_p50", "latency_p95", "latency_max", "throughput_per_s", "retrains",
)


class UsageError(Exception):
    pass


def _patterns(path: str) -> tuple[ModalityRegistry, list]:
    if path == BUILTIN:
        return builtin_patterns()
    return load_patterns(path)


# -- run ------------------------------------------------------------------------


def _resolve_config(args) -> PipelineConfig:
    base = load_config(args.config) if args.config else PipelineConfig()
    doc = base.to_dict()
    shed, anomaly = doc["shed"], doc["anomaly"]
    for flag, section, key in (
        ("theta_ms", shed, "theta_ms"), ("window_size", shed, "window_size"), ("buffer_max", shed, "b_max"),
        ("shedder", shed, "strategy"), ("interval_mode", shed, "interval_mode"),
        ("measure_interval_ms", shed, "measure_interval_ms"), ("t_match_ms", shed, "t_match_ms"),
        ("seed", shed, "seed"), ("detector", doc, "detector"), ("service", doc, "service"),
        ("service_ms", doc, "service_ms"), ("threads", doc, "threads"),
    ):
        value = getattr(args, flag)
        if value is not None:
            section[key] = value
    if args.seed is not None:
        anomaly["seed"] = args.seed
    if args.exact:
        anomaly["exact"] = True
    doc["patterns_path"] = args.patterns
    doc["stream_path"] = args.stream
    doc["metrics_path"] = args.metrics_out
    doc["events_path"] = args.event_log
    try:
        return PipelineConfig.from_dict(doc)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    registry, patterns = _patterns(args.patterns)
    interner = EntityInterner()
    stream = read_stream(args.stream, registry, interner)
    log.info("loaded %d patterns and %d elements", len(patterns), len(stream))
    ref = reference_run(cfg, stream, registry, patterns, interner) if args.reference else None
    result = run(cfg, stream, registry, patterns, ref, interner)
    report = result.report
    if not cfg.metrics_path:
        json.dump(report, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        log.info("metrics written to %s", cfg.metrics_path)
    if args.table_out:
        write_table(args.table_out, [report])
    return 0


# -- gen ------------------------------------------------------------------------


def cmd_gen(args) -> int:
    registry, patterns = _patterns(args.patterns)
    try:
        spec = SyntheticStreamSpec(
            length=args.length, n_entities=args.entities, entity_lifetime=args.lifetime,
            rate_profile=args.profile, base_rate=args.rate, burst_factor=args.burst_factor,
            burst_period=args.burst_period, window_size=args.window_size,
            planted=tuple(p for p in args.planted.split(",") if p) if args.planted else (),
            rumours_per_window=args.rumours_per_window, coefficient_dist=args.coefficient_dist,
            position_centre=args.centre, position_spread=args.spread, drift_at=args.drift_at,
            drift_centre=args.drift_centre, seed=args.seed,
        )
        records = generate(spec, patterns, registry.names)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    n = write_stream(args.out, records)
    log.info("wrote %d elements to %s", n, args.out)
    return 0


# -- oracle ---------------------------------------------------------------------


def _oracle_matcher(args, registry, patterns) -> dict:
    if args.stream:
        interner = EntityInterner()
        stream = read_stream(args.stream, registry, interner)
    else:
        rng = np.random.default_rng(args.seed)
        recs = random_stream_records(rng, args.edges, args.vertices, registry.names)
        stream = records_to_elements(recs, registry)
    streaming = {(m.pattern, m.mapping, m.matched_at)
                 for m in IncrementalMatcher(PatternSet(patterns, len(registry))).run(stream)}
    static = static_matches(accepted_elements(stream, len(registry)), patterns)
    return {"oracle": "matcher", "equal": streaming == static, "streaming": len(streaming), "static": len(static),
            "missing": len(static - streaming), "extra": len(streaming - static)}


def _oracle_cco(args, registry, patterns) -> dict:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    minimal = True
    for _ in range(args.trials):
        rows, cols = int(rng.integers(1, 21)), int(rng.integers(1, 201))
        cm = CoefficientMatrix(rows, cols)
        cm.counts[:] = rng.integers(0, 50, size=(rows, cols)) * (rng.random((rows, cols)) < 0.6)
        cco = build_cco(cm)
        ref = cco_oracle(cm.coeffs, rows)
        worst = max(worst, float(np.max(np.abs(cco.omega - np.asarray(ref)))))
        for k in np.linspace(0, cco.total, 25):
            pi = invert_cco(cco, float(k)).pi_min
            if cco.omega[pi] < k or (pi > 0 and cco.omega[pi - 1] >= k):
                minimal = False
    return {"oracle": "cco", "max_deviation": worst, "equal": worst <= 1e-9 and minimal, "inversion_minimal": minimal}


def _oracle_anomaly(args, registry, patterns) -> dict:
    stream = _oracle_stream(args, registry, patterns)
    accepted = accepted_elements(stream, len(registry))
    exact = AnomalyDetector(AnomalyConfig(exact=True, seed=args.seed))
    sketch = AnomalyDetector(AnomalyConfig(exact=False, seed=args.seed))
    alpha = exact.sig.alpha_sig
    disagree = 0
    for s in accepted:
        a = exact.observe(s)
        b = sketch.observe(s)
        disagree += sum(1 for x, y in zip(a, b) if (x < alpha) != (y < alpha))
    total = 3 * len(accepted)
    rate = disagree / total if total else 0.0
    return {"oracle": "anomaly", "flag_disagreement": rate, "equal": rate <= 0.01, "flags_compared": total}


def _oracle_stream(args, registry, patterns):
    interner = EntityInterner()
    if args.stream:
        return read_stream(args.stream, registry, interner)
    spec = SyntheticStreamSpec(length=args.length, seed=args.seed, n_entities=200)
    return records_to_elements(generate(spec, patterns, registry.names), registry, interner)


def _oracle_pipeline(args, registry, patterns) -> dict:
    stream = _oracle_stream(args, registry, patterns)
    cfg = PipelineConfig.from_dict({"shed": {"strategy": "none"}, "detector": args.detector,
                                    "anomaly": {"exact": True}})
    res = run(cfg, stream, registry, patterns)
    static = {match_key(pid, dict(mapping))
              for pid, mapping in static_rumours(stream, patterns, len(registry), args.detector, cfg.anomaly)}
    return {"oracle": "pipeline", "equal": res.rumour_set == static, "streaming": len(res.rumour_set),
            "static": len(static)}


ORACLES = {"matcher": _oracle_matcher, "cco": _oracle_cco, "anomaly": _oracle_anomaly, "pipeline": _oracle_pipeline}


def cmd_oracle(args) -> int:
    registry, patterns = _patterns(args.patterns)
    names = list(ORACLES) if args.which == "all" else [args.which]
    results = [ORACLES[name](args, registry, patterns) for name in names]
    json.dump(results, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0 if all(r["equal"] for r in results) else 1


# -- table ----------------------------------------------------------------------


def table_row(report: dict) -> dict:
    cfg = report.get("config", {})
    shed = cfg.get("shed", {})
    lat = report.get("latency_ms", {})
    row = {
        "strategy": shed.get("strategy"), "theta_ms": shed.get("theta_ms"), "window_size": shed.get("window_size"),
        "seed": shed.get("seed"), "latency_p50": lat.get("p50"), "latency_p95": lat.get("p95"),
        "latency_max": lat.get("max"),
    }
    for col in TABLE_COLUMNS:
        row.setdefault(col, report.get(col))
    return row


def write_table(path: str, reports: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS)
        writer.writeheader()
        for rep in reports:
            writer.writerow(table_row(rep))


def cmd_table(args) -> int:
    reports = [json.loads(Path(p).read_text(encoding="utf-8")) for p in args.metrics]
    if args.out:
        write_table(args.out, reports)
    else:
        writer = csv.DictWriter(sys.stdout, fieldnames=TABLE_COLUMNS)
        writer.writeheader()
        for rep in reports:
            writer.writerow(table_row(rep))
    return 0


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rumourstream", description="Streaming rumour detection with load shedding.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the pipeline over a stream file")
    p.add_argument("--patterns", required=True, help=f"pattern YAML file, or '{BUILTIN}'")
    p.add_argument("--stream", required=True, help="stream file (JSON lines)")
    p.add_argument("--config", help="YAML config file; flags override it")
    p.add_argument("--theta-ms", type=float)
    p.add_argument("--window-size", type=int, help="elements per window (default 100)")
    p.add_argument("--buffer-max", type=int)
    p.add_argument("--shedder", choices=STRATEGIES)
    p.add_argument("--interval-mode", choices=INTERVAL_MODES)
    p.add_argument("--measure-interval-ms", type=float)
    p.add_argument("--t-match-ms", type=float, help="initial per-element matching time estimate")
    p.add_argument("--detector", choices=("ground", "anomaly"))
    p.add_argument("--service", choices=("fixed", "measured"))
    p.add_argument("--service-ms", type=float, help="simulated service time per element")
    p.add_argument("--exact", action="store_true", help="exact counters instead of sketches")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, choices=(1, 2))
    p.add_argument("--metrics-out")
    p.add_argument("--event-log")
    p.add_argument("--table-out", help="also write a one-row CSV table")
    p.add_argument("--reference", action="store_true", help="run without shedding first for the loss metrics")
    p.set_defaults(func=cmd_run)

    g = sub.add_parser("gen", help="generate a synthetic stream")
    g.add_argument("--out", required=True)
    g.add_argument("--patterns", default=BUILTIN)
    g.add_argument("--length", type=int, default=10_000)
    g.add_argument("--entities", type=int, default=2_000)
    g.add_argument("--lifetime", type=int)
    g.add_argument("--profile", choices=RATE_PROFILES, default="constant")
    g.add_argument("--rate", type=float, default=1000.0, help="base arrival rate, elements/s")
    g.add_argument("--burst-factor", type=float, default=3.0)
    g.add_argument("--burst-period", type=int, default=500)
    g.add_argument("--window-size", type=int, default=100)
    g.add_argument("--planted", default="p1,p2,p3", help="comma-separated pattern ids")
    g.add_argument("--rumours-per-window", type=float, default=2.0)
    g.add_argument("--coefficient-dist", choices=POSITION_DISTS, default="normal")
    g.add_argument("--centre", type=float, default=0.3)
    g.add_argument("--spread", type=float, default=0.08)
    g.add_argument("--drift-at", type=int)
    g.add_argument("--drift-centre", type=float, default=0.75)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen)

    o = sub.add_parser("oracle", help="compare streaming components with static oracles")
    o.add_argument("--which", choices=(*ORACLES, "all"), default="all")
    o.add_argument("--patterns", default=BUILTIN)
    o.add_argument("--stream")
    o.add_argument("--edges", type=int, default=200)
    o.add_argument("--vertices", type=int, default=40)
    o.add_argument("--length", type=int, default=2_000)
    o.add_argument("--trials", type=int, default=20)
    o.add_argument("--detector", choices=("ground", "anomaly"), default="ground")
    o.add_argument("--seed", type=int, default=0)
    o.set_defaults(func=cmd_oracle)

    t = sub.add_parser("table", help="collect metrics reports into a CSV table")
    t.add_argument("metrics", nargs="+")
    t.add_argument("--out")
    t.set_defaults(func=cmd_table)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("RUMOURSTREAM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"rumourstream: error: {exc}", file=sys.stderr)
        return 2
    except (StreamFormatError, PatternFileError, ConfigError, OSError) as exc:
        print(f"rumourstream: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
