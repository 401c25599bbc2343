from __future__ import annotations

import pytest

from rumourstream.model import EntityInterner, StreamElement
from rumourstream.patterns import builtin_patterns

# Small reference network: seven entities, six relations.
SAMPLE_EDGES = [
    # (name, u, v, mu, mv, tick)
    ("e1", "v1", "v2", "user", "tweet", 1),
    ("e2", "v1", "v3", "user", "tweet", 2),
    ("e3", "v3", "v4", "tweet", "hashtag", 3),
    ("e4", "v3", "v5", "tweet", "link", 3),
    ("e5", "v3", "v6", "tweet", "user", 4),
    ("e6", "v6", "v7", "user", "tweet", 5),
]


class SampleNet:
    def __init__(self) -> None:
        self.registry, self.patterns = builtin_patterns()
        self.by_id = {p.id: p for p in self.patterns}
        self.interner = EntityInterner()
        self.elements: dict[str, StreamElement] = {}
        for name, u, v, mu, mv, t in SAMPLE_EDGES:
            self.elements[name] = StreamElement(
                self.interner.intern(u), self.interner.intern(v), self.registry.id(mu), self.registry.id(mv), t
            )

    def ent(self, name: str) -> int:
        return self.interner.intern(name)

    def mod(self, name: str) -> int:
        return self.registry.id(name)

    def stream(self, upto: str = "e6") -> list[StreamElement]:
        names = [e[0] for e in SAMPLE_EDGES]
        return [self.elements[n] for n in names[: names.index(upto) + 1]]


@pytest.fixture
def net() -> SampleNet:
    return SampleNet()


# -- acceptance report ----------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
