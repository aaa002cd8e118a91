import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowdep.conllu import (ConlluParseError, Token, Treebank, TreeValidationError, format_feats,
                           parse_conllu, protocol_split, serialize, validate_tree)
from lowdep.synthetic import generate_treebank

from conftest import make_sentence

TWO = "1\tHe\t_\tPRON\t_\t_\t2\tnsubj\t_\t_\n2\truns\t_\tVERB\t_\t_\t0\troot\t_\t_\n"

MWT = """# sent_id = mwt-1
# text = vámonos al mar
1-2\tvámonos\t_\t_\t_\t_\t_\t_\t_\t_
1\tvamos\tir\tVERB\t_\tMood=Imp|Number=Plur|Person=1\t0\troot\t_\t_
2\tnos\tnosotros\tPRON\t_\tCase=Acc|Number=Plur|Person=1\t1\tobj\t_\t_
3-4\tal\t_\t_\t_\t_\t_\t_\t_\t_
3\ta\ta\tADP\t_\t_\t5\tcase\t_\t_
4\tel\tel\tDET\t_\tDefinite=Def\t5\tdet\t_\t_
4.1\tva\tir\tVERB\t_\t_\t_\t_\t1:conj\t_
5\tmar\tmar\tNOUN\t_\t_\t1\tobl\t_\tSpaceAfter=No

"""


def test_empty_input():
    assert len(parse_conllu("")) == 0
    assert serialize(Treebank()) == b""


def test_two_token_block():
    tb = parse_conllu(TWO)
    s = tb[0]
    assert len(s) == 2
    assert s.heads == [2, 0]
    assert s.tokens[1].deprel == "root"


def test_two_cycle_rejected():
    text = "1\ta\t_\tX\t_\t_\t2\tdep\t_\t_\n2\tb\t_\tX\t_\t_\t1\tdep\t_\t_\n"
    with pytest.raises(TreeValidationError, match="cycle"):
        parse_conllu(text)


def test_column_count_error_has_line_number():
    with pytest.raises(ConlluParseError, match="line 2"):
        parse_conllu("1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n2\tb\t_\n")


def test_non_integer_head():
    with pytest.raises(ConlluParseError, match="non-integer head"):
        parse_conllu("1\ta\t_\tX\t_\t_\tx\troot\t_\t_\n")


def test_out_of_range_head_names_sentence():
    text = "# sent_id = bad-7\n1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n2\tb\t_\tX\t_\t_\t9\tdep\t_\t_\n"
    with pytest.raises(TreeValidationError) as info:
        parse_conllu(text)
    assert info.value.sent_id == "bad-7"


def test_invalid_utf8_is_an_error():
    with pytest.raises(ConlluParseError, match="UTF-8"):
        parse_conllu(b"1\t\xff\t_\tX\t_\t_\t0\troot\t_\t_\n")


def test_feats_serialization_sorted():
    tok = Token(1, "x", feats={"Number": "Sing", "Case": "Nom"}, head=0, deprel="root")
    assert tok.to_line().split("\t")[5] == "Case=Nom|Number=Sing"
    assert format_feats({}) == "_"


def test_multiword_and_empty_nodes_round_trip():
    tb = parse_conllu(MWT)
    s = tb[0]
    assert [t.form for t in s.tokens] == ["vamos", "nos", "a", "el", "mar"]
    assert len(s.extra_lines) == 3
    assert s.sent_id == "mwt-1"
    assert serialize(tb).decode("utf-8") == MWT


def test_serialize_refuses_invalid_tree():
    bad = make_sentence([0, 0, 1], sent_id="two-roots")
    with pytest.raises(TreeValidationError, match="two-roots"):
        serialize(Treebank((bad,)))


def test_non_ascii_round_trip():
    text = "# sent_id = san-1\n1\tवाचस्पते\t_\tNOUN\t_\tCase=Voc\t2\tvocative\t_\t_\n" \
           "2\tपुनरेहि\t_\tVERB\t_\t_\t0\troot\t_\t_\n\n"
    assert serialize(parse_conllu(text.encode("utf-8"))).decode("utf-8") == text


@pytest.mark.parametrize("heads, ok", [
    ([0], True),
    ([2, 0, 2], True),
    ([0, 0, 1], False),
])
def test_validate_tree_examples(heads, ok):
    verdict = validate_tree(make_sentence(heads))
    assert verdict.ok is ok
    if heads == [0, 0, 1]:
        assert "multiple roots" in verdict.violations


def _brute_force_is_tree(heads):
    n = len(heads)
    if sum(1 for h in heads if h == 0) != 1:
        return False
    for d in range(1, n + 1):
        seen, x = set(), d
        while x != 0:
            if x in seen or not 1 <= x <= n or heads[x - 1] == x:
                return False
            seen.add(x)
            x = heads[x - 1]
    return True


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_validate_tree_matches_brute_force_exhaustively(n):
    for heads in itertools.product(range(n + 1), repeat=n):
        assert validate_tree(make_sentence(list(heads))).ok == _brute_force_is_tree(heads), heads


def test_validate_tree_matches_brute_force_random(rng):
    for _ in range(2000):
        n = int(rng.integers(1, 7))
        heads = rng.integers(0, n + 1, size=n).tolist()
        assert validate_tree(make_sentence(heads)).ok == _brute_force_is_tree(heads), heads


@st.composite
def trees(draw):
    n = draw(st.integers(1, 8))
    order = draw(st.permutations(list(range(1, n + 1))))
    heads = [0] * n
    for pos, node in enumerate(order):
        heads[node - 1] = 0 if pos == 0 else order[draw(st.integers(0, pos - 1))]
    word = st.text(alphabet="abcdéšअ", min_size=1, max_size=5)
    forms = [draw(word) for _ in range(n)]
    feats = [draw(st.dictionaries(st.sampled_from(["Case", "Number", "Gender"]),
                                  st.sampled_from(["Nom", "Acc", "Sing", "Fem"]), max_size=2))
             for _ in range(n)]
    return make_sentence(heads, forms=forms, feats=feats, sent_id=draw(st.text("xyz0", min_size=1)))


@settings(max_examples=100, deadline=None)
@given(st.lists(trees(), max_size=4))
def test_round_trip_property(sents):
    tb = Treebank(tuple(sents))
    again = parse_conllu(serialize(tb))
    assert again.sentences == tb.sentences
    assert serialize(again) == serialize(tb)


def test_protocol_split_standard_sizes():
    tb = generate_treebank(1500, seed=5)
    train, unlabeled = protocol_split(tb, seed=11)
    assert len(train) == 500 and len(unlabeled) == 1000
    assert not {s.sent_id for s in train} & {s.sent_id for s in unlabeled}


def test_protocol_split_unlabeled_properties():
    tb = generate_treebank(40, seed=5)
    train, unlabeled = protocol_split(tb, 10, 20, seed=3)
    originals = {s.sent_id: s for s in tb}
    for s in unlabeled:
        assert s.is_unlabeled
        assert all(t.head is None and t.deprel == "_" for t in s.tokens)
        assert not validate_tree(s)
        src = originals[s.sent_id]
        assert [t.feats for t in s.tokens] == [t.feats for t in src.tokens]
        assert [t.upos for t in s.tokens] == [t.upos for t in src.tokens]
    # the flag survives a file round trip
    again = parse_conllu(serialize(unlabeled))
    assert all(s.is_unlabeled for s in again)


def test_protocol_split_deterministic():
    tb = generate_treebank(60, seed=5)
    a = protocol_split(tb, 20, 30, seed=9)
    b = protocol_split(tb, 20, 30, seed=9)
    c = protocol_split(tb, 20, 30, seed=10)
    assert a == b
    assert a != c


def test_protocol_split_insufficient():
    tb = generate_treebank(10, seed=5)
    with pytest.raises(ValueError, match="needs 1500 .* only 10"):
        protocol_split(tb)
