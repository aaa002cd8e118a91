from collections import Counter

import numpy as np
import pytest
from sklearn.base import clone

from lowdep.augment import (AugmentConfig, TreebankAugmenter, augment_treebank, build_lexicon, crop,
                            nonce, rotate)
from lowdep.conllu import Treebank, validate_tree

from conftest import make_sentence, random_tree

RELS = ["nsubj", "obj", "iobj", "obl", "amod", "det", "advmod"]
UPOS = ["NOUN", "VERB", "ADJ", "DET", "ADV"]
FEATS = [{}, {"Case": "Nom"}, {"Case": "Acc", "Number": "Plur"}]


def random_sentence(rng, i):
    n = int(rng.integers(1, 12))
    heads = random_tree(rng, n)
    return make_sentence(
        heads,
        deprels=["root" if h == 0 else RELS[rng.integers(len(RELS))] for h in heads],
        forms=[f"f{rng.integers(30)}" for _ in range(n)],
        upos=[UPOS[rng.integers(len(UPOS))] for _ in range(n)],
        feats=[dict(FEATS[rng.integers(len(FEATS))]) for _ in range(n)],
        sent_id=f"r{i}")


def triples(s):
    forms = ["<root>"] + s.forms
    return Counter((forms[t.head], t.deprel, t.form) for t in s.tokens)


def _example():
    # A(nsubj) verb B(obj) C(amod of B)
    return make_sentence([2, 0, 2, 3], ["nsubj", "root", "obj", "amod"],
                         forms=["A", "verb", "B", "C"], sent_id="ex")


def test_crop_example():
    out = crop(_example(), AugmentConfig("Cropping"))
    assert [s.forms for s in out] == [["A", "verb"], ["verb", "B", "C"]]
    assert out[0].heads == [2, 0]
    assert out[1].heads == [0, 1, 2]
    assert "augmented_from = ex strategy = Cropping relation = obj" in out[1].comments[-1]


def test_crop_single_token():
    assert crop(make_sentence([0]), AugmentConfig("Cropping")) == []


def test_rotate_example():
    s = make_sentence([2, 0, 2], ["nsubj", "root", "obj"], forms=["A", "v", "B"])
    out = []
    rng = np.random.default_rng(0)
    while not out:
        out = rotate(s, AugmentConfig("Rotation"), rng)
    assert out[0].forms == ["B", "v", "A"]
    assert triples(out[0]) == triples(s)


def test_rotate_one_eligible_child():
    s = make_sentence([2, 0, 2], ["nsubj", "root", "advmod"])
    assert rotate(s, AugmentConfig("Rotation"), np.random.default_rng(0)) == []


def test_rotate_identity_dropped():
    s = make_sentence([2, 0, 2], ["nsubj", "root", "obj"], forms=["A", "v", "B"])
    results = [rotate(s, AugmentConfig("Rotation"), np.random.default_rng(k)) for k in range(40)]
    assert any(r == [] for r in results) and any(r for r in results)
    assert all(r == [] or r[0].forms != s.forms for r in results)


def test_nonce_example():
    s = make_sentence([0], forms=["x"], upos=["NOUN"], feats=[{"Case": "Nom", "Number": "Sing"}])
    lex = {("NOUN", "Case=Nom|Number=Sing"): [("x", "x"), ("y", "y")]}
    out = nonce(s, lex, AugmentConfig(nonce_rate=1.0), np.random.default_rng(0))
    assert out.forms == ["y"]
    assert out.heads == s.heads and out.deprels == s.deprels


def test_nonce_trivial():
    s = _example()
    assert nonce(s, {}, AugmentConfig(nonce_rate=1.0), np.random.default_rng(0)) == s
    lex = build_lexicon(Treebank((s, make_sentence([0], forms=["Z"]))))
    assert nonce(s, lex, AugmentConfig(nonce_rate=0.0), np.random.default_rng(0)) == s


def test_validity_over_random_trees():
    rng = np.random.default_rng(7)
    sents = [random_sentence(rng, i) for i in range(500)]
    lex = build_lexicon(Treebank(tuple(sents)))
    counts = Counter()
    for s in sents:
        assert validate_tree(s)
        for c in crop(s, AugmentConfig("Cropping")):
            assert validate_tree(c)
            counts["crop"] += 1
        for r in rotate(s, AugmentConfig("Rotation"), rng):
            assert validate_tree(r) and triples(r) == triples(s)
            counts["rotate"] += 1
        n = nonce(s, lex, AugmentConfig(nonce_rate=0.5), rng)
        assert validate_tree(n) and n.heads == s.heads and n.deprels == s.deprels
        assert [t.upos for t in n.tokens] == [t.upos for t in s.tokens]
        assert [t.feats for t in n.tokens] == [t.feats for t in s.tokens]
        counts["nonce_changed"] += n.forms != s.forms
    assert min(counts.values()) > 20, counts


def test_augment_treebank_counts_and_determinism(synthetic_small):
    cfg = AugmentConfig("Nonce", target_count=300, seed=4)
    a = augment_treebank(synthetic_small, cfg)
    assert len(a) == 300
    assert a == augment_treebank(synthetic_small, cfg)
    assert len({s.sent_id for s in a}) == 300
    assert len({tuple(s.forms) for s in a}) == 300
    assert all(validate_tree(s) for s in a)
    assert len(augment_treebank(synthetic_small, AugmentConfig(target_count=0))) == 0


def test_augment_treebank_caps_at_achievable(synthetic_small):
    crops = sum(len(crop(s, AugmentConfig("Cropping"))) for s in synthetic_small)
    out = augment_treebank(synthetic_small, AugmentConfig("Cropping", target_count=10**6))
    assert len(out) == crops


def test_augment_round_robin_spreads_sources(synthetic_small):
    out = augment_treebank(synthetic_small, AugmentConfig("Nonce", target_count=len(synthetic_small)))
    sources = Counter(s.comments[-1].split()[3] for s in out)
    assert max(sources.values()) <= 2


def test_config_validation():
    with pytest.raises(ValueError):
        AugmentConfig(target_count=-1)
    with pytest.raises(ValueError):
        AugmentConfig(nonce_rate=1.5)
    with pytest.raises(ValueError):
        AugmentConfig("Rotation", rotation_relations=frozenset())
    with pytest.raises(ValueError):
        AugmentConfig("Shuffle")
    assert AugmentConfig("rotate").strategy == "Rotation"


def test_augmenter_estimator(synthetic_small):
    est = TreebankAugmenter(strategy="Rotation", target_count=50, include_source=True)
    assert clone(est).get_params() == est.get_params()
    out = est.fit(synthetic_small).transform(synthetic_small)
    assert len(out) == len(synthetic_small) + 50
    with pytest.raises(Exception):
        TreebankAugmenter().transform(synthetic_small)
