from hypothesis import given, strategies as st

from qualcode.parsing import parse_response
from qualcode.taxonomy import UNPARSED, Unparsed


def test_label_line(scheme):
    label, rationale = parse_response("The statute targets voting.\nLabel: Civil Rights", scheme)
    assert label.name == "Civil Rights"
    assert rationale == "The statute targets voting."


def test_inline_label_with_trailing_period(scheme):
    label, rationale = parse_response("This concerns energy regulation. Label: Energy.", scheme)
    assert label.name == "Energy"
    assert rationale == "This concerns energy regulation."


def test_last_label_wins(scheme):
    label, _ = parse_response("Label: Health\nOn reflection...\nlabel: Housing", scheme)
    assert label.name == "Housing"


def test_markdown_label(scheme):
    label, rationale = parse_response("Reasoning here.\n**Label:** Defense", scheme)
    assert label.name == "Defense" and rationale == "Reasoning here."


def test_no_label_line(scheme):
    label, _ = parse_response("The court addressed commerce and labor.", scheme)
    assert isinstance(label, Unparsed)
    label, _ = parse_response("A dispute over immigration detention.", scheme)
    assert label.name == "Immigration"


def test_word_inside_identifier_is_not_a_key(scheme):
    label, _ = parse_response("Relabel: nothing here", scheme)
    assert isinstance(label, Unparsed)


@given(st.text(max_size=80))
def test_parse_never_raises(reply):
    from qualcode.taxonomy import default_scheme
    s = default_scheme()
    label, rationale = parse_response(reply, s)
    assert label.name == UNPARSED or label.name in s.major_names
    assert isinstance(rationale, str)
