import dataclasses

import numpy as np
import pytest
import torch

from lowdep.augment import AugmentConfig
from lowdep.conllu import Treebank, protocol_split, strip_annotation, validate_tree
from lowdep.model import ModelConfig, ParserModel
from lowdep.synthetic import generate_treebank
from lowdep.training import (SELF_TRAINED_COMMENT, Hyperparams, SeqTraLScheme, Splits,
                             StrategyConfig, case_labels, derive_seed, integrate_and_finetune,
                             layer_learning_rates, pretrain_lcm, run_ensemble, self_train,
                             train_mtl, train_supervised, unfreeze_epoch)
from lowdep.vocab import Vocab

from conftest import make_sentence

CFG = ModelConfig(word_dim=8, char_dim=4, hidden_dim=6, arc_dim=6, label_dim=4)
HP = Hyperparams(epochs=3, batch_size=8, seed=3)


@pytest.fixture(scope="module")
def corpus():
    tb = generate_treebank(90, seed=21)
    train, unlabeled = protocol_split(tb[:70], 40, 30, seed=1)
    return train, tb[70:], unlabeled


@pytest.fixture(scope="module")
def base_and_encoders(corpus):
    train, dev, unlabeled = corpus
    vocab = Vocab.build(train, unlabeled)
    base = train_supervised(train, dev, HP, CFG, vocab)
    lcm = pretrain_lcm(unlabeled, base.model, dataclasses.replace(HP, epochs=2), CFG)
    return base, lcm


def _history_metrics(result):
    return [(h["epoch"], h["train_loss"], h.get("dev_uas"), h.get("dev_las")) for h in result.history]


def test_defaults():
    hp = Hyperparams()
    assert (hp.batch_size, hp.epochs, hp.dropout, hp.lr) == (16, 100, 0.33, 0.002)
    assert SeqTraLScheme("DL").lr_decay_factor == 2.6
    assert SeqTraLScheme("UF").unfreeze_epochs_per_layer == 1


def test_hyperparam_validation():
    with pytest.raises(ValueError):
        Hyperparams(batch_size=0)
    with pytest.raises(ValueError):
        Hyperparams(dropout=1.0)


def test_scheme_fields_are_kind_specific():
    with pytest.raises(ValueError):
        SeqTraLScheme("FT", lr_decay_factor=2.6)
    with pytest.raises(ValueError):
        SeqTraLScheme("DL", unfreeze_epochs_per_layer=2)
    with pytest.raises(ValueError):
        SeqTraLScheme("XX")


def test_strategy_validation():
    with pytest.raises(ValueError, match="LCM"):
        StrategyConfig(seqtral=SeqTraLScheme("FT"))
    with pytest.raises(ValueError):
        StrategyConfig(mtl_task="pos")
    with pytest.raises(ValueError):
        StrategyConfig(pretraining="bert")
    cfg = StrategyConfig(pretraining="LCM", mtl_task="morph", seqtral=SeqTraLScheme("ft"))
    assert cfg.enabled == ["pretraining", "mtl", "seqtral"]


def test_schedule_arithmetic():
    assert layer_learning_rates(SeqTraLScheme("DL"), 0.002, 2) == [0.002, 0.002 / 2.6]
    assert layer_learning_rates(SeqTraLScheme("FT"), 0.002, 2) == [0.002, 0.002]
    uf = SeqTraLScheme("UF", unfreeze_epochs_per_layer=2)
    assert [unfreeze_epoch(uf, k) for k in range(2)] == [2, 4]


def test_derive_seed_stable():
    assert derive_seed(0, "base") == derive_seed(0, "base")
    assert derive_seed(0, "base") != derive_seed(0, "mtl")
    assert derive_seed(0, "base") != derive_seed(1, "base")


def test_supervised_determinism(corpus):
    train, dev, _ = corpus
    a = train_supervised(train, dev, HP, CFG)
    b = train_supervised(train, dev, HP, CFG)
    assert _history_metrics(a) == _history_metrics(b)
    for (k, x), (_, y) in zip(a.model.state_dict().items(), b.model.state_dict().items()):
        assert torch.equal(x, y), k


def test_zero_epochs_returns_initial_params(corpus):
    train, dev, _ = corpus
    r = train_supervised(train, dev, dataclasses.replace(HP, epochs=0), CFG)
    torch.manual_seed(HP.seed)
    fresh = ParserModel(Vocab.build(train), dataclasses.replace(CFG, dropout=HP.dropout))
    for (k, x), (_, y) in zip(r.model.state_dict().items(), fresh.state_dict().items()):
        assert torch.equal(x, y), k


def test_empty_train_errors():
    with pytest.raises(ValueError, match="empty"):
        train_supervised(Treebank(), None, HP, CFG)


def test_best_dev_checkpoint_selected(corpus):
    train, dev, _ = corpus
    r = train_supervised(train, dev, dataclasses.replace(HP, epochs=4), CFG)
    best = max(h["dev_uas"] for h in r.history)
    assert r.dev_uas == best
    assert r.history[r.best_epoch]["dev_uas"] == best


def test_mtl_lambda_zero_matches_supervised(corpus):
    train, dev, _ = corpus
    sup = train_supervised(train, dev, HP, CFG)
    mtl = train_mtl(train, dev, HP, "morph", 0.0, CFG)
    assert _history_metrics(sup) == _history_metrics(mtl)
    mtl_state = mtl.model.state_dict()
    for k, v in sup.model.state_dict().items():
        assert torch.equal(v, mtl_state[k]), k
    assert "dev_tag_acc" in mtl.metadata and "dev_tag_acc" in mtl.history[0]


def test_mtl_case_without_case_features():
    tb = Treebank(tuple(make_sentence([0, 1], sent_id=str(i)) for i in range(4)))
    with pytest.raises(ValueError, match="Case"):
        train_mtl(tb, None, HP, "case", 1.0, CFG)


def test_case_label_extraction():
    s = make_sentence([0, 1, 1], feats=[{"Case": "Nom"}, {}, {"Case": "Acc"}])
    assert case_labels(s) == ["Nom", "NoCase", "Acc"]


def test_pretrain_lcm_contract(base_and_encoders):
    _, lcm = base_and_encoders
    assert len(lcm.encoders) == 3
    assert [t.task for t in lcm.taggers] == ["morph", "case", "deprel"]
    for task in ("morph", "case", "deprel"):
        assert 0 <= lcm.metadata["tasks"][task]["heldout_accuracy"] <= 100
    assert lcm.metadata["relation_labels"] == "predicted by base parser"


def test_pretrain_lcm_errors(base_and_encoders):
    base, _ = base_and_encoders
    with pytest.raises(ValueError):
        pretrain_lcm(Treebank(), base.model, HP)
    bare = Treebank((strip_annotation(make_sentence([0, 1])),))
    with pytest.raises(ValueError, match="features"):
        pretrain_lcm(bare, base.model, HP)


def _aux_snapshot(model, depth):
    groups = [enc.layer_groups()[depth] for enc in model.auxiliaries]
    return [p.detach().clone() for g in groups for p in g]


def test_fe_leaves_auxiliaries_bitwise_unchanged(corpus, base_and_encoders):
    train, dev, _ = corpus
    base, lcm = base_and_encoders
    r = integrate_and_finetune(base.model, lcm.encoders, SeqTraLScheme("FE"), train, dev, HP)
    for enc, original in zip(r.model.auxiliaries, lcm.encoders):
        for (k, a), (_, b) in zip(enc.state_dict().items(), original.state_dict().items()):
            assert torch.equal(a, b), k
    assert not torch.equal(r.model.biaffine.U_arc, base.model.biaffine.U_arc)


def test_dl_learning_rates_logged(corpus, base_and_encoders):
    train, dev, _ = corpus
    base, lcm = base_and_encoders
    hp = dataclasses.replace(HP, epochs=1)
    r = integrate_and_finetune(base.model, lcm.encoders, SeqTraLScheme("DL", lr_decay_factor=2.6),
                               train, dev, hp)
    assert r.metadata["layer_lrs"] == [0.002, 0.002 / 2.6]
    assert r.metadata["logged_lrs"] == {"shared": 0.002, "aux_depth0": 0.002,
                                        "aux_depth1": 0.002 / 2.6}


def test_uf_unfreezes_top_down_on_schedule(corpus, base_and_encoders):
    train, dev, _ = corpus
    base, lcm = base_and_encoders
    hp = dataclasses.replace(HP, epochs=6, patience=50)
    changes = {0: [], 1: []}
    prev = {}

    def watch(epoch, model):
        for depth in (0, 1):
            now = _aux_snapshot(model, depth)
            if depth in prev:
                changes[depth].append(any(not torch.equal(a, b) for a, b in zip(now, prev[depth])))
            else:
                start = [p.detach().clone() for enc in lcm.encoders for p in enc.layer_groups()[depth]]
                changes[depth].append(any(not torch.equal(a, b) for a, b in zip(now, start)))
            prev[depth] = now

    r = integrate_and_finetune(base.model, lcm.encoders,
                               SeqTraLScheme("UF", unfreeze_epochs_per_layer=2), train, dev, hp,
                               on_epoch_end=watch)
    assert changes[0].index(True) == 2
    assert changes[1].index(True) == 4
    assert r.metadata["unfreeze_epochs"] == [2, 4]
    assert [h["trainable_aux_depths"] for h in r.history] == [[], [], [0], [0], [0, 1], [0, 1]]


def test_integration_requires_encoders(corpus, base_and_encoders):
    train, dev, _ = corpus
    base, _ = base_and_encoders
    with pytest.raises(ValueError):
        integrate_and_finetune(base.model, [], SeqTraLScheme("FT"), train, dev, HP)


def test_self_train_merge(corpus, base_and_encoders):
    train, dev, unlabeled = corpus
    base, _ = base_and_encoders
    r = self_train(base.model, unlabeled, train, dataclasses.replace(HP, epochs=0), dev)
    merged = r.metadata["merged"]
    assert r.metadata["n_merged"] == len(train) + len(unlabeled) == len(merged)
    assert merged.sentences[:len(train)] == train.sentences
    for s in merged.sentences[len(train):]:
        assert validate_tree(s)
        assert SELF_TRAINED_COMMENT in s.comments


def test_self_train_without_unlabeled_is_supervised(corpus, base_and_encoders):
    train, dev, _ = corpus
    base, _ = base_and_encoders
    r = self_train(base.model, Treebank(), train, HP, dev)
    sup = train_supervised(train, dev, HP, dataclasses.replace(base.model.config))
    assert _history_metrics(r) == _history_metrics(sup)


def test_ensemble_all_off_is_supervised(corpus):
    train, dev, _ = corpus
    e = run_ensemble(StrategyConfig(), Splits(train, dev), HP, CFG)
    sup = train_supervised(train, dev, HP, CFG)
    assert len(e.report["stages"]) == 1
    assert e.report["final"]["dev"] == {"uas": sup.dev_uas, "las": sup.dev_las}


def test_ensemble_stage_count_and_order(corpus):
    train, dev, unlabeled = corpus
    cfg = StrategyConfig(augmentation=AugmentConfig("Cropping", target_count=10),
                         pretraining="lcm", mtl_task="morph", seqtral=SeqTraLScheme("FT"),
                         self_training=True)
    hp = dataclasses.replace(HP, epochs=1)
    e = run_ensemble(cfg, Splits(train, dev, unlabeled), hp, CFG)
    stages = [s["stage"] for s in e.report["stages"]]
    assert stages == ["augmentation", "base", "pretraining", "mtl", "seqtral", "self_training"]
    assert len(stages) == len(cfg.enabled) + 1
    assert e.report["stages"][0]["details"]["n_train"] == len(train) + 10
    assert e.report["final"]["dev"]["uas"] == e.report["stages"][-1]["dev_uas"]


def test_ensemble_stage_failure_names_stage(corpus):
    train, dev, _ = corpus
    external = {train[0].sent_id: np.zeros((len(train[0]), 3))}
    with pytest.raises(RuntimeError, match="stage 'pretraining'"):
        run_ensemble(StrategyConfig(pretraining="external"), Splits(train, dev), HP, CFG, external)


def test_ensemble_needs_unlabeled(corpus):
    train, dev, _ = corpus
    with pytest.raises(ValueError, match="unlabeled"):
        run_ensemble(StrategyConfig(self_training=True), Splits(train, dev), HP, CFG)


def test_external_embeddings_pipeline(corpus):
    train, dev, _ = corpus
    rng = np.random.default_rng(0)
    external = {s.sent_id: rng.normal(size=(len(s), 3)) for s in list(train) + list(dev)}
    e = run_ensemble(StrategyConfig(pretraining="external"), Splits(train, dev), HP, CFG, external)
    assert e.model.config.ext_dim == 3
    assert e.report["stages"][1]["details"]["external_dim"] == 3
