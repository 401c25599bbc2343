from __future__ import annotations

import pytest

from rumourstream.patterns import PatternFileError, builtin_patterns, dump_patterns, load_patterns, parse_patterns

GOOD = """\
modalities: [user, tweet]
patterns:
  - id: cascade
    variables:
      - {id: a, modality: user}
      - {id: t, modality: tweet}
    edges: [[a, t]]
"""


def test_builtin_set_loads():
    reg, pats = builtin_patterns()
    assert reg.names == ["user", "tweet", "hashtag", "link"]
    assert [p.id for p in pats] == ["p1", "p2", "p3"]
    assert max(p.size for p in pats) == 4


def test_round_trip_through_dump():
    reg, pats = builtin_patterns()
    reg2, pats2 = parse_patterns(dump_patterns(reg, pats))
    assert reg2.names == reg.names
    assert pats2 == pats


def test_load_from_file(tmp_path):
    path = tmp_path / "p.yaml"
    path.write_text(GOOD)
    reg, pats = load_patterns(path)
    assert pats[0].edges == (("a", "t"),)
    assert pats[0].modality_of == {"a": reg.id("user"), "t": reg.id("tweet")}


@pytest.mark.parametrize(
    "text, line, fragment",
    [
        (GOOD.replace("modality: tweet", "modality: video"), 6, "unknown modality"),
        (GOOD.replace("[[a, t]]", "[[a, t, a]]"), 7, "edge must be"),
        (GOOD.replace("[[a, t]]", "[[a, a]]"), 3, "self-loop"),
        (GOOD.replace("modalities: [user, tweet]\n", ""), 1, "modalities"),
        ("modalities: [user\n", 2, ""),
    ],
)
def test_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(PatternFileError) as info:
        parse_patterns(text, "x.yaml")
    assert info.value.line == line
    assert fragment in str(info.value)
    assert str(info.value).startswith(f"x.yaml:{line}:")
