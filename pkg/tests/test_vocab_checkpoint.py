import dataclasses

import pytest
import torch

from lowdep import checkpoint
from lowdep.conllu import Treebank, strip_annotation
from lowdep.model import ModelConfig, ParserModel, TaggerModel
from lowdep.synthetic import generate_treebank
from lowdep.vocab import NO_CASE, PAD, ROOT, UNK, Vocab, task_labels

from conftest import make_sentence

CFG = ModelConfig(word_dim=6, char_dim=4, hidden_dim=5, arc_dim=4, label_dim=3)


@pytest.fixture(scope="module")
def tb():
    return generate_treebank(30, seed=4)


def test_vocab_specials_and_density(tb):
    v = Vocab.build(tb)
    assert v.words.symbols[:3] == [PAD, UNK, ROOT]
    assert v.chars.symbols[:3] == [PAD, UNK, ROOT]
    for index in (v.words, v.chars, v.upos, v.morph, v.case):
        assert [index.id(s) for s in index.symbols] == list(range(len(index)))
        assert index.unk is not None
    assert v.words.id("never-seen") == v.words.id(UNK)
    assert NO_CASE in v.case


def test_vocab_deterministic(tb):
    assert Vocab.build(tb) == Vocab.build(Treebank(tuple(tb.sentences)))
    assert Vocab.from_dict(Vocab.build(tb).to_dict()) == Vocab.build(tb)


def test_deprel_from_labeled_only(tb):
    unl = Treebank((strip_annotation(make_sentence([0], deprels=["weird"])),))
    v = Vocab.build(tb, unl)
    assert "weird" not in v.deprel
    assert "_" not in v.deprel


def test_task_labels():
    s = make_sentence([0, 1], feats=[{"Case": "Nom", "Number": "Sing"}, {}])
    assert task_labels(s, "morph") == ["Case=Nom|Number=Sing", "_"]
    assert task_labels(s, "case") == ["Nom", NO_CASE]
    assert task_labels(s, "deprel") == ["root", "dep"]


def _same_params(a, b):
    sa, sb = a.state_dict(), b.state_dict()
    assert sa.keys() == sb.keys()
    return all(torch.equal(sa[k], sb[k]) for k in sa)


def test_parser_checkpoint_round_trip(tb, tmp_path):
    torch.manual_seed(0)
    m = ParserModel(Vocab.build(tb), dataclasses.replace(CFG, mtl_task="morph"))
    m.attach_auxiliaries([ParserModel(m.vocab, CFG).primary for _ in range(3)])
    checkpoint.save(m, tmp_path / "m.ckpt")
    back = checkpoint.load(tmp_path / "m.ckpt")
    assert back.config == m.config and back.vocab == m.vocab
    assert _same_params(m, back)
    assert checkpoint.dumps(back) == (tmp_path / "m.ckpt").read_bytes()
    parsed = [s.heads for s in back.parse(list(tb)[:5])]
    assert parsed == [s.heads for s in m.parse(list(tb)[:5])]


def test_checkpoint_float64(tb):
    m = ParserModel(Vocab.build(tb), CFG).double()
    back = checkpoint.loads(checkpoint.dumps(m))
    assert back.dtype == torch.float64 and _same_params(m, back)


def test_tagger_checkpoint_and_encoder(tb, tmp_path):
    t = TaggerModel(Vocab.build(tb), CFG, "case")
    checkpoint.save(t, tmp_path / "t.ckpt")
    enc = checkpoint.load_encoder(tmp_path / "t.ckpt")
    assert _same_params(enc, t.encoder)
    checkpoint.save(ParserModel(t.vocab, CFG), tmp_path / "p.ckpt")
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.load_encoder(tmp_path / "p.ckpt")


def test_bad_checkpoint():
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(b"not a checkpoint")
    with pytest.raises(TypeError):
        checkpoint.dumps(torch.nn.Linear(2, 2))
