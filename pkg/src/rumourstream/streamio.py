"""Stream files: one JSON object per line.

Required fields: ``u``, ``v`` (entity keys), ``mu``, ``mv`` (modality
names), ``t`` (integer tick). Optional: ``label`` (0/1 ground truth),
``at`` (arrival time in ms for the latency simulation), ``w`` (window id,
for variable-size windows).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

from .model import EntityInterner, ModalityRegistry, StreamElement


class StreamFormatError(ValueError):
    def __init__(self, message: str, line: int, source: str = "<stream>") -> None:
        self.line = line
        super().__init__(f"{source}:{line}: {message}")


def _field(rec: dict, name: str, line: int, source: str):
    if name not in rec:
        raise StreamFormatError(f"missing field {name!r}", line, source)
    return rec[name]


def parse_record(rec: dict, registry: ModalityRegistry, interner: EntityInterner, line: int, source: str = "<stream>") -> StreamElement:
    if not isinstance(rec, dict):
        raise StreamFormatError("record must be a JSON object", line, source)
    u = _field(rec, "u", line, source)
    v = _field(rec, "v", line, source)
    mu = _field(rec, "mu", line, source)
    mv = _field(rec, "mv", line, source)
    t = _field(rec, "t", line, source)
    for name, mod in (("mu", mu), ("mv", mv)):
        if mod not in registry:
            raise StreamFormatError(f"unknown modality {mod!r} in {name}", line, source)
    if isinstance(t, bool) or not isinstance(t, int) or t < 0:
        raise StreamFormatError(f"tick must be a non-negative integer, got {t!r}", line, source)
    label = rec.get("label")
    if label is not None:
        if label not in (0, 1, True, False):
            raise StreamFormatError(f"label must be 0 or 1, got {label!r}", line, source)
        label = bool(label)
    at = rec.get("at")
    if at is not None and (isinstance(at, bool) or not isinstance(at, (int, float))):
        raise StreamFormatError(f"arrival time must be a number, got {at!r}", line, source)
    win = rec.get("w")
    if win is not None and (isinstance(win, bool) or not isinstance(win, int)):
        raise StreamFormatError(f"window id must be an integer, got {win!r}", line, source)
    return StreamElement(
        interner.intern(str(u)),
        interner.intern(str(v)),
        registry.id(mu),
        registry.id(mv),
        t,
        label,
        None if at is None else float(at),
        win,
    )


def iter_stream(
    lines: Iterable[str],
    registry: ModalityRegistry,
    interner: EntityInterner,
    source: str = "<stream>",
) -> Iterator[StreamElement]:
    last_t = None
    for lineno, raw in enumerate(lines, 1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise StreamFormatError(f"invalid JSON ({exc.msg})", lineno, source) from None
        s = parse_record(rec, registry, interner, lineno, source)
        if last_t is not None and s.t < last_t:
            raise StreamFormatError(f"tick {s.t} decreases (previous {last_t})", lineno, source)
        last_t = s.t
        yield s


def read_stream(path: str | Path, registry: ModalityRegistry, interner: EntityInterner | None = None) -> list[StreamElement]:
    interner = interner if interner is not None else EntityInterner()
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return list(iter_stream(fh, registry, interner, str(path)))


def records_to_elements(records: Iterable[dict], registry: ModalityRegistry, interner: EntityInterner | None = None) -> list[StreamElement]:
    interner = interner if interner is not None else EntityInterner()
    return list(iter_stream((json.dumps(r) for r in records), registry, interner))


def write_stream(path: str | Path, records: Iterable[dict]) -> int:
    n = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")))
            fh.write("\n")
            n += 1
    return n
