"""Pattern files.

A pattern file is YAML (JSON is accepted too)::

    modalities: [user, tweet, hashtag, link]
    patterns:
      - id: p2
        variables: [{id: a, modality: user}, {id: ta, modality: tweet}]
        edges: [[a, ta]]

Every structural problem is reported with the line it occurs on.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .model import ModalityRegistry, RumourPattern


class PatternFileError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<patterns>") -> None:
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    mapping = yaml.SafeLoader.construct_mapping(loader, node, deep=True)
    mapping["__line__"] = node.start_mark.line + 1
    return mapping


def _construct_sequence(loader, node, deep=False):
    return _LineList(yaml.SafeLoader.construct_sequence(loader, node, deep=True), node.start_mark.line + 1)


class _LineList(list):
    def __init__(self, items, line):
        super().__init__(items)
        self.line = line


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)
_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_SEQUENCE_TAG, _construct_sequence)


def _line(obj: Any, default: int | None) -> int | None:
    if isinstance(obj, dict):
        return obj.get("__line__", default)
    return getattr(obj, "line", default)


def parse_patterns(text: str, source: str = "<patterns>") -> tuple[ModalityRegistry, list[RumourPattern]]:
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise PatternFileError(str(getattr(exc, "problem", exc)), mark.line + 1 if mark else None, source) from None

    if not isinstance(doc, dict):
        raise PatternFileError("top level must be a mapping", 1, source)
    top = _line(doc, 1)
    mods = doc.get("modalities")
    if not isinstance(mods, list) or not mods:
        raise PatternFileError("missing 'modalities' header", top, source)
    registry = ModalityRegistry()
    for name in mods:
        if not isinstance(name, str):
            raise PatternFileError(f"modality name must be a string, got {name!r}", _line(mods, top), source)
        try:
            registry.add(name)
        except ValueError as exc:
            raise PatternFileError(str(exc), _line(mods, top), source) from None

    entries = doc.get("patterns")
    if not isinstance(entries, list) or not entries:
        raise PatternFileError("missing or empty 'patterns' list", top, source)

    patterns = []
    for entry in entries:
        line = _line(entry, _line(entries, top))
        if not isinstance(entry, dict):
            raise PatternFileError("pattern must be a mapping", line, source)
        pid = entry.get("id")
        if pid is None:
            raise PatternFileError("pattern without 'id'", line, source)
        variables = entry.get("variables")
        if not isinstance(variables, list):
            raise PatternFileError(f"pattern {pid}: 'variables' must be a list", line, source)
        parsed_vars = []
        for var in variables:
            vline = _line(var, line)
            if not isinstance(var, dict) or "id" not in var or "modality" not in var:
                raise PatternFileError(f"pattern {pid}: variable needs 'id' and 'modality'", vline, source)
            if var["modality"] not in registry:
                raise PatternFileError(f"pattern {pid}: unknown modality {var['modality']!r}", vline, source)
            parsed_vars.append((str(var["id"]), registry.id(var["modality"])))
        edges = entry.get("edges")
        if not isinstance(edges, list):
            raise PatternFileError(f"pattern {pid}: 'edges' must be a list", line, source)
        parsed_edges = []
        for e in edges:
            eline = _line(e, _line(edges, line))
            if not isinstance(e, list) or len(e) != 2:
                raise PatternFileError(f"pattern {pid}: edge must be a [from, to] pair", eline, source)
            parsed_edges.append((str(e[0]), str(e[1])))
        try:
            patterns.append(RumourPattern(str(pid), tuple(parsed_vars), tuple(parsed_edges)))
        except ValueError as exc:
            raise PatternFileError(str(exc), line, source) from None
    ids = [p.id for p in patterns]
    dup = {i for i in ids if ids.count(i) > 1}
    if dup:
        raise PatternFileError(f"duplicate pattern id(s) {sorted(dup)}", top, source)
    return registry, patterns


def load_patterns(path: str | Path) -> tuple[ModalityRegistry, list[RumourPattern]]:
    path = Path(path)
    return parse_patterns(path.read_text(encoding="utf-8"), str(path))


def builtin_patterns_text() -> str:
    return resources.files("rumourstream.data").joinpath("twitter_patterns.yaml").read_text(encoding="utf-8")


def builtin_patterns() -> tuple[ModalityRegistry, list[RumourPattern]]:
    return parse_patterns(builtin_patterns_text(), "twitter_patterns.yaml")


def dump_patterns(registry: ModalityRegistry, patterns: list[RumourPattern]) -> str:
    doc = {
        "modalities": registry.names,
        "patterns": [
            {
                "id": p.id,
                "variables": [{"id": v, "modality": registry.name(m)} for v, m in p.variables],
                "edges": [[a, b] for a, b in p.edges],
            }
            for p in patterns
        ],
    }
    return yaml.safe_dump(doc, sort_keys=False)
