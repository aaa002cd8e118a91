"""Training loops for the baseline parser and every low-resource strategy.

All randomness in a run flows from ``Hyperparams.seed``. Pipeline stages
other than the base parser draw their seeds from :func:`derive_seed`, so a
stage's randomness does not depend on which earlier stages were enabled.
"""

from __future__ import annotations

import copy
import dataclasses
import logging
import zlib
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence

import numpy as np
import torch

from .augment import AugmentConfig, augment_treebank
from .conllu import Sentence, Treebank, strip_annotation, validate_tree
from .evaluation import EvalReport, uas_las
from .model import (Encoder, ModelConfig, ParserModel, TaggerModel, _pad_labels, head_loss,
                    make_batch, relation_loss, tagging_loss)
from .validation import check_treebank
from .vocab import NO_CASE, TASKS, Vocab, task_labels

log = logging.getLogger(__name__)

SEQTRAL_KINDS = ("FE", "UF", "DL", "FT")
PRETRAINING = ("none", "lcm", "external")


def derive_seed(seed: int, stage: str) -> int:
    """Stage seed: first word of ``SeedSequence([seed, crc32(stage)])``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(stage.encode("utf-8"))])
    return int(ss.generate_state(1)[0])


@dataclass
class Hyperparams:
    batch_size: int = 16
    epochs: int = 100
    dropout: float = 0.33
    lr: float = 0.002
    seed: int = 0
    clip: float = 5.0
    patience: int = 20
    betas: tuple = (0.9, 0.9)
    #: epoch cap for the LCM tagging encoders; ``None`` means ``epochs``
    pretrain_epochs: Optional[int] = None
    heldout_fraction: float = 0.1

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.batch_size < 1 or self.epochs < 0 or self.lr <= 0 or self.patience < 1:
            raise ValueError("batch_size, lr and patience must be positive; epochs >= 0")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")

    def with_seed(self, seed: int) -> "Hyperparams":
        return dataclasses.replace(self, seed=seed)


@dataclass(frozen=True)
class SeqTraLScheme:
    """How transferred encoder layers are updated during integration.

    FE freezes them, UF unfreezes them one layer at a time from the top, DL
    divides the learning rate by ``lr_decay_factor`` per layer of depth, FT
    trains everything at the base rate.
    """

    kind: str = "FT"
    unfreeze_epochs_per_layer: Optional[int] = None
    lr_decay_factor: Optional[float] = None

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in SEQTRAL_KINDS:
            raise ValueError(f"unknown SeqTraL scheme {self.kind!r}; expected one of {SEQTRAL_KINDS}")
        object.__setattr__(self, "kind", kind)
        if kind != "UF" and self.unfreeze_epochs_per_layer is not None:
            raise ValueError("unfreeze_epochs_per_layer only applies to UF")
        if kind != "DL" and self.lr_decay_factor is not None:
            raise ValueError("lr_decay_factor only applies to DL")
        if kind == "UF" and self.unfreeze_epochs_per_layer is None:
            object.__setattr__(self, "unfreeze_epochs_per_layer", 1)
        if kind == "DL" and self.lr_decay_factor is None:
            object.__setattr__(self, "lr_decay_factor", 2.6)
        if kind == "UF" and self.unfreeze_epochs_per_layer < 1:
            raise ValueError("unfreeze_epochs_per_layer must be positive")
        if kind == "DL" and self.lr_decay_factor <= 0:
            raise ValueError("lr_decay_factor must be positive")


@dataclass(frozen=True)
class StrategyConfig:
    augmentation: Optional[AugmentConfig] = None
    pretraining: str = "none"
    mtl_task: Optional[str] = None
    seqtral: Optional[SeqTraLScheme] = None
    self_training: bool = False
    mtl_weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "pretraining", (self.pretraining or "none").lower())
        self.validate()

    def validate(self) -> None:
        if self.pretraining not in PRETRAINING:
            raise ValueError(f"pretraining must be one of {PRETRAINING}")
        if self.mtl_task is not None and self.mtl_task not in TASKS:
            raise ValueError(f"mtl_task must be one of {TASKS}")
        if self.seqtral is not None and self.pretraining != "lcm":
            raise ValueError("a SeqTraL scheme needs LCM pretraining (no transferred layers otherwise)")
        if self.mtl_weight < 0:
            raise ValueError("mtl_weight must be non-negative")

    @property
    def enabled(self) -> List[str]:
        out = []
        if self.augmentation is not None:
            out.append("augmentation")
        if self.pretraining != "none":
            out.append("pretraining")
        if self.mtl_task is not None:
            out.append("mtl")
        if self.seqtral is not None:
            out.append("seqtral")
        if self.self_training:
            out.append("self_training")
        return out

    def to_dict(self) -> dict:
        aug = None
        if self.augmentation is not None:
            aug = {k: (sorted(v) if isinstance(v, frozenset) else v)
                   for k, v in dataclasses.asdict(self.augmentation).items()}
        return {
            "augmentation": aug,
            "pretraining": self.pretraining,
            "mtl_task": self.mtl_task,
            "seqtral": dataclasses.asdict(self.seqtral) if self.seqtral else None,
            "self_training": self.self_training,
            "mtl_weight": self.mtl_weight,
        }


@dataclass
class TrainResult:
    model: ParserModel
    history: List[dict] = field(default_factory=list)
    best_epoch: int = -1
    dev_report: Optional[EvalReport] = None
    metadata: dict = field(default_factory=dict)

    @property
    def dev_uas(self) -> Optional[float]:
        return None if self.dev_report is None else self.dev_report.uas

    @property
    def dev_las(self) -> Optional[float]:
        return None if self.dev_report is None else self.dev_report.las


# ---------------------------------------------------------------------------
# shared machinery


def evaluate(model: ParserModel, tb: Treebank, external=None, include_punct: bool = True) -> EvalReport:
    pred = Treebank(tuple(model.parse(list(tb), external=external)))
    return uas_las(tb, pred, include_punct=include_punct)


def _snapshot(model) -> Dict[str, torch.Tensor]:
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def _labeled(tb, name: str) -> Treebank:
    tb = check_treebank(tb, labeled=True, name=name)
    return tb


def _dev(tb) -> Optional[Treebank]:
    if tb is None:
        return None
    tb = check_treebank(tb, labeled=True, allow_empty=True, name="dev")
    return tb if len(tb) else None


def _fit(model: ParserModel, train: Treebank, dev: Optional[Treebank], hp: Hyperparams,
         loss_fn: Callable, param_groups: Optional[List[dict]] = None,
         schedule: Optional[Callable[[int], dict]] = None,
         on_epoch_end: Optional[Callable] = None, external=None,
         extra_eval: Optional[Callable] = None) -> TrainResult:
    """Mini-batch Adam loop with best-dev-UAS checkpoint selection."""
    if param_groups is None:
        param_groups = [{"params": list(model.parameters()), "lr": hp.lr, "name": "all"}]
    optimizer = torch.optim.Adam(param_groups, lr=hp.lr, betas=hp.betas)
    rng = np.random.default_rng(hp.seed)
    sentences = list(train)
    history: List[dict] = []
    best_state, best_score, best_epoch = _snapshot(model), -np.inf, -1
    best_report = None
    for epoch in range(hp.epochs):
        record = {"epoch": epoch}
        if schedule is not None:
            record.update(schedule(epoch))
        model.train()
        order = rng.permutation(len(sentences))
        total, n_batches = 0.0, 0
        for start in range(0, len(order), hp.batch_size):
            chunk = [sentences[i] for i in order[start:start + hp.batch_size]]
            batch = model.batch(chunk, external)
            optimizer.zero_grad(set_to_none=True)
            loss = loss_fn(model, batch)
            loss.backward()
            trainable = [p for p in model.parameters() if p.grad is not None]
            if hp.clip and trainable:
                torch.nn.utils.clip_grad_norm_(trainable, hp.clip)
            optimizer.step()
            total += float(loss.detach())
            n_batches += 1
        record["train_loss"] = total / max(n_batches, 1)
        report = None
        if dev is not None:
            report = evaluate(model, dev, external)
            record["dev_uas"] = report.uas
            record["dev_las"] = report.las
            if extra_eval is not None:
                record.update(extra_eval(model))
            score = report.uas
        else:
            score = epoch  # no dev set: keep the latest epoch
        history.append(record)
        if on_epoch_end is not None:
            on_epoch_end(epoch, model)
        if score > best_score:
            best_state, best_score, best_epoch, best_report = _snapshot(model), score, epoch, report
        elif epoch - best_epoch >= hp.patience:
            log.info("early stop at epoch %d (best %d)", epoch, best_epoch)
            break
    model.load_state_dict(best_state)
    model.eval()
    return TrainResult(model, history, best_epoch, best_report)


def _new_parser(vocab: Vocab, config: ModelConfig, hp: Hyperparams) -> ParserModel:
    torch.manual_seed(hp.seed)
    return ParserModel(vocab, config, head_seed=derive_seed(hp.seed, "mtl_head"))


def _base_config(config: Optional[ModelConfig], hp: Hyperparams, **changes) -> ModelConfig:
    config = config or ModelConfig()
    return dataclasses.replace(config, dropout=hp.dropout, n_aux=0, **changes)


def _parse_loss(model, batch):
    S, H = model(batch)
    return head_loss(S, batch) + relation_loss(H, batch, model.biaffine)


def _make_mtl_loss(weight: float):
    def loss_fn(model, batch):
        S, H = model(batch)
        loss = head_loss(S, batch) + relation_loss(H, batch, model.biaffine)
        tag = tagging_loss(model.mtl_head(H), batch, model.config.mtl_task)
        return loss + weight * tag
    return loss_fn


@torch.no_grad()
def mtl_accuracy(model: ParserModel, tb: Treebank, external=None) -> float:
    """Token accuracy of the MTL head on ``tb``."""
    model.eval()
    task = model.config.mtl_task
    correct = total = 0
    sents = list(tb)
    for start in range(0, len(sents), 64):
        batch = model.batch(sents[start:start + 64], external)
        pred = model.mtl_head(model.encode(batch)).argmax(-1)
        gold = batch.tags[task]
        m = batch.token_mask & (gold >= 0)
        correct += int((pred[m] == gold[m]).sum())
        total += int(m.sum())
    return 100.0 * correct / total if total else 0.0


def _check_task_available(tb: Treebank, task: str) -> None:
    if task == "case" and not any("Case" in t.feats for s in tb for t in s.tokens):
        raise ValueError("treebank has no Case features; the case task is unavailable")
    if task == "morph" and not any(t.feats for s in tb for t in s.tokens):
        raise ValueError("treebank has no morphological features; the morph task is unavailable")


# ---------------------------------------------------------------------------
# supervised and multi-task training


def train_supervised(train, dev=None, hp: Optional[Hyperparams] = None,
                     config: Optional[ModelConfig] = None, vocab: Optional[Vocab] = None,
                     external=None, on_epoch_end=None) -> TrainResult:
    """Train the baseline biaffine parser; returns the best-dev checkpoint."""
    hp = hp or Hyperparams()
    train = _labeled(train, "train")
    dev = _dev(dev)
    vocab = vocab or Vocab.build(train)
    model = _new_parser(vocab, _base_config(config, hp, mtl_task=None), hp)
    if hp.epochs == 0:
        model.eval()
        return TrainResult(model)
    return _fit(model, train, dev, hp, _parse_loss, on_epoch_end=on_epoch_end, external=external)


def train_mtl(train, dev=None, hp: Optional[Hyperparams] = None, task: str = "morph",
              weight: float = 1.0, config: Optional[ModelConfig] = None,
              vocab: Optional[Vocab] = None, external=None, on_epoch_end=None) -> TrainResult:
    """Jointly train the parser and a tagging head on a shared encoder."""
    hp = hp or Hyperparams()
    if task not in TASKS:
        raise ValueError(f"unknown MTL task {task!r}; expected one of {TASKS}")
    train = _labeled(train, "train")
    _check_task_available(train, task)
    dev = _dev(dev)
    vocab = vocab or Vocab.build(train)
    model = _new_parser(vocab, _base_config(config, hp, mtl_task=task), hp)
    if hp.epochs == 0:
        model.eval()
        return TrainResult(model)
    extra = None
    if dev is not None:
        extra = lambda m: {"dev_tag_acc": mtl_accuracy(m, dev, external)}  # noqa: E731
    result = _fit(model, train, dev, hp, _make_mtl_loss(weight), on_epoch_end=on_epoch_end,
                  external=external, extra_eval=extra)
    if dev is not None:
        result.metadata["dev_tag_acc"] = mtl_accuracy(result.model, dev, external)
    result.metadata.update({"mtl_task": task, "mtl_weight": weight})
    return result


# ---------------------------------------------------------------------------
# LCM pretraining


class LCMResult(NamedTuple):
    encoders: List[Encoder]
    taggers: List[TaggerModel]
    metadata: dict


def _train_tagger(model: TaggerModel, train: List[Sentence], heldout: List[Sentence],
                  labels_train, labels_heldout, hp: Hyperparams, epochs: int) -> dict:
    optimizer = torch.optim.Adam(model.parameters(), lr=hp.lr, betas=hp.betas)
    rng = np.random.default_rng(hp.seed)
    best_state, best_acc, best_epoch = _snapshot(model), -1.0, -1
    task = model.task
    for epoch in range(epochs):
        model.train()
        order = rng.permutation(len(train))
        for start in range(0, len(order), hp.batch_size):
            idx = order[start:start + hp.batch_size]
            chunk = [train[i] for i in idx]
            batch = make_batch(chunk, model.vocab, (), None, model.config.ext_dim)
            gold = _pad_labels([labels_train[i] for i in idx], batch.words.shape)
            optimizer.zero_grad(set_to_none=True)
            loss = tagging_loss(model(batch), batch, task, labels=gold)
            loss.backward()
            if hp.clip:
                torch.nn.utils.clip_grad_norm_(model.parameters(), hp.clip)
            optimizer.step()
        acc = model.accuracy(heldout or train, labels_heldout if heldout else labels_train)
        if acc > best_acc:
            best_state, best_acc, best_epoch = _snapshot(model), acc, epoch
        elif epoch - best_epoch >= hp.patience:
            break
    model.load_state_dict(best_state)
    model.eval()
    return {"heldout_accuracy": 100.0 * max(best_acc, 0.0), "best_epoch": best_epoch}


def pretrain_lcm(unlabeled, base: ParserModel, hp: Optional[Hyperparams] = None,
                 config: Optional[ModelConfig] = None) -> LCMResult:
    """Pretrain three tagging encoders: morph tag, case value, relation label.

    Relation labels come from ``base``'s own parses of the unlabeled data,
    which has no gold dependencies. The encoders share ``base.vocab`` so they
    can be plugged into ``base`` later.
    """
    hp = hp or Hyperparams()
    tb = check_treebank(unlabeled, allow_empty=True, name="unlabeled")
    if len(tb) == 0:
        raise ValueError("LCM pretraining needs at least one unlabeled sentence")
    if not any(t.feats for s in tb for t in s.tokens):
        raise ValueError("unlabeled data carries no morphological features; "
                         "the morph and case tasks cannot be trained")
    sents = [strip_annotation(s) if not s.is_unlabeled else s for s in tb]
    vocab = base.vocab
    config = dataclasses.replace(config or base.config, dropout=hp.dropout, n_aux=0,
                                 mtl_task=None)
    rng = np.random.default_rng(derive_seed(hp.seed, "lcm_heldout"))
    n_held = int(round(hp.heldout_fraction * len(sents))) if len(sents) >= 10 else 0
    perm = rng.permutation(len(sents))
    held_idx = sorted(perm[:n_held].tolist())
    train_idx = sorted(perm[n_held:].tolist())

    parsed = base.parse(sents)
    label_seqs = {}
    for task in TASKS:
        index = vocab.labels(task)
        src = parsed if task == "deprel" else sents
        label_seqs[task] = [index.ids(task_labels(s, task)) for s in src]

    epochs = hp.pretrain_epochs if hp.pretrain_epochs is not None else hp.epochs
    encoders, taggers, meta = [], [], {"tasks": {}, "relation_labels": "predicted by base parser",
                                       "n_pretrain": len(train_idx), "n_heldout": len(held_idx)}
    for task in TASKS:
        task_hp = hp.with_seed(derive_seed(hp.seed, f"lcm_{task}"))
        torch.manual_seed(task_hp.seed)
        tagger = TaggerModel(vocab, config, task).to(base.dtype)
        labels = label_seqs[task]
        info = _train_tagger(tagger, [sents[i] for i in train_idx], [sents[i] for i in held_idx],
                             [labels[i] for i in train_idx], [labels[i] for i in held_idx],
                             task_hp, epochs)
        meta["tasks"][task] = info
        encoders.append(tagger.encoder)
        taggers.append(tagger)
    return LCMResult(encoders, taggers, meta)


def case_labels(sentence: Sentence) -> List[str]:
    """Case value of every token, ``NoCase`` where the feature is missing."""
    return [t.feats.get("Case", NO_CASE) for t in sentence.tokens]


# ---------------------------------------------------------------------------
# gated integration with SeqTraL schedules


def layer_learning_rates(scheme: SeqTraLScheme, lr: float, n_groups: int) -> List[float]:
    """Learning rate of each transferred layer group, top group first."""
    if scheme.kind == "DL":
        return [lr / scheme.lr_decay_factor ** k for k in range(n_groups)]
    if scheme.kind == "FE":
        return [0.0] * n_groups
    return [lr] * n_groups


def unfreeze_epoch(scheme: SeqTraLScheme, depth: int) -> int:
    """First epoch (0-based) at which the group ``depth`` levels below the top trains under UF."""
    return (depth + 1) * scheme.unfreeze_epochs_per_layer


def integrate_and_finetune(base: ParserModel, encoders: Sequence[Encoder],
                           scheme: Optional[SeqTraLScheme], train, dev=None,
                           hp: Optional[Hyperparams] = None, mtl_task: Optional[str] = None,
                           mtl_weight: float = 1.0, external=None,
                           on_epoch_end=None) -> TrainResult:
    """Gate pretrained encoders into a copy of ``base`` and fine-tune.

    Gates, the primary encoder, the biaffine scorer and the MTL head are
    always trainable; ``scheme`` governs only the transferred encoders.
    """
    hp = hp or Hyperparams()
    scheme = scheme or SeqTraLScheme("FT")
    if not encoders:
        raise ValueError("integration needs pretrained encoders (enable LCM pretraining)")
    train = _labeled(train, "train")
    if mtl_task is not None:
        _check_task_available(train, mtl_task)
    dev = _dev(dev)
    torch.manual_seed(hp.seed)
    model = copy.deepcopy(base)
    model.config = dataclasses.replace(model.config, dropout=hp.dropout)
    model.attach_auxiliaries([copy.deepcopy(e) for e in encoders],
                             seed=derive_seed(hp.seed, "gates"))
    if mtl_task is not None:
        model.set_mtl_task(mtl_task, seed=derive_seed(hp.seed, "mtl_head"))
    for module in model.modules():
        if isinstance(module, torch.nn.Dropout):
            module.p = hp.dropout

    groups_per_encoder = [enc.layer_groups() for enc in model.auxiliaries]
    n_groups = len(groups_per_encoder[0])
    depth_params = [[p for groups in groups_per_encoder for p in groups[k]]
                    for k in range(n_groups)]
    aux_ids = {id(p) for params in depth_params for p in params}
    shared = [p for p in model.parameters() if id(p) not in aux_ids]
    lrs = layer_learning_rates(scheme, hp.lr, n_groups)
    param_groups = [{"params": shared, "lr": hp.lr, "name": "shared"}]
    for k, params in enumerate(depth_params):
        param_groups.append({"params": params, "lr": lrs[k] if scheme.kind == "DL" else hp.lr,
                             "name": f"aux_depth{k}"})

    def set_trainable(k: int, flag: bool):
        for p in depth_params[k]:
            p.requires_grad_(flag)

    def schedule(epoch: int) -> dict:
        trainable = []
        for k in range(n_groups):
            if scheme.kind == "FE":
                on = False
            elif scheme.kind == "UF":
                on = epoch >= unfreeze_epoch(scheme, k)
            else:
                on = True
            set_trainable(k, on)
            if on:
                trainable.append(k)
        return {"trainable_aux_depths": trainable}

    loss_fn = _make_mtl_loss(mtl_weight) if mtl_task else _parse_loss
    extra = None
    if mtl_task is not None and dev is not None:
        extra = lambda m: {"dev_tag_acc": mtl_accuracy(m, dev, external)}  # noqa: E731
    metadata = {"scheme": scheme.kind, "layer_lrs": lrs, "n_aux": len(encoders)}
    if scheme.kind == "UF":
        metadata["unfreeze_epochs"] = [unfreeze_epoch(scheme, k) for k in range(n_groups)]
    if hp.epochs == 0:
        schedule(0)
        model.eval()
        return TrainResult(model, metadata=metadata)
    result = _fit(model, train, dev, hp, loss_fn, param_groups=param_groups, schedule=schedule,
                  on_epoch_end=on_epoch_end, external=external, extra_eval=extra)
    for p in model.parameters():
        p.requires_grad_(True)
    metadata["logged_lrs"] = {g["name"]: g["lr"] for g in param_groups}
    result.metadata.update(metadata)
    if mtl_task is not None and dev is not None:
        result.metadata["dev_tag_acc"] = mtl_accuracy(result.model, dev, external)
    return result


# ---------------------------------------------------------------------------
# self-training


SELF_TRAINED_COMMENT = "# self_training = predicted"


def predict_unlabeled(base: ParserModel, unlabeled, external=None) -> Treebank:
    tb = check_treebank(unlabeled, allow_empty=True, name="unlabeled")
    sents = [strip_annotation(s) if not s.is_unlabeled else s for s in tb]
    parsed = []
    for s in base.parse(sents, external=external):
        comments = tuple(c for c in s.comments if c != "# unlabeled = true")
        s = dataclasses.replace(s, comments=comments + (SELF_TRAINED_COMMENT,))
        verdict = validate_tree(s)
        if not verdict:  # decoder guarantees trees; fail loudly if that ever breaks
            raise RuntimeError(f"decoder produced an invalid tree for {s.sent_id!r}")
        parsed.append(s)
    return Treebank(tuple(parsed), f"{tb.name}-predicted")


def self_train(base: ParserModel, unlabeled, gold, hp: Optional[Hyperparams] = None, dev=None,
               trainer: Optional[Callable[[Treebank], TrainResult]] = None,
               external=None) -> TrainResult:
    """Parse the unlabeled pool with ``base``, add it to gold, retrain from scratch.

    ``trainer`` receives the merged treebank; by default a fresh baseline
    parser with ``base``'s dimensions is trained on it.
    """
    hp = hp or Hyperparams()
    gold = _labeled(gold, "gold")
    predicted = predict_unlabeled(base, unlabeled, external)
    merged = Treebank(gold.sentences + predicted.sentences, f"{gold.name}+self")
    if trainer is None:
        config = dataclasses.replace(base.config, n_aux=0, mtl_task=None)
        result = train_supervised(merged, dev, hp, config=config, external=external)
    else:
        result = trainer(merged)
    result.metadata.update({"n_gold": len(gold), "n_predicted": len(predicted),
                            "n_merged": len(merged)})
    result.metadata["merged"] = merged
    return result


# ---------------------------------------------------------------------------
# the ensembled pipeline


class Splits(NamedTuple):
    train: Treebank
    dev: Optional[Treebank] = None
    unlabeled: Optional[Treebank] = None
    test: Optional[Treebank] = None


@dataclass
class EnsembleResult:
    model: ParserModel
    report: dict


def _stage(name: str, result: Optional[TrainResult], current: Optional[TrainResult],
           retrained: bool, details: Optional[dict] = None) -> dict:
    src = result if retrained else current
    entry = {
        "stage": name,
        "retrained": retrained,
        "dev_uas": None if src is None else src.dev_uas,
        "dev_las": None if src is None else src.dev_las,
        "details": details or {},
    }
    if retrained and result is not None:
        entry["best_epoch"] = result.best_epoch
        entry["history"] = result.history
    return entry


def _jsonable(meta: dict) -> dict:
    return {k: v for k, v in meta.items() if k != "merged"}


def run_ensemble(cfg: StrategyConfig, splits: Splits, hp: Optional[Hyperparams] = None,
                 config: Optional[ModelConfig] = None, external=None) -> EnsembleResult:
    """Run the enabled strategies in pipeline order and report every stage.

    Order: augmentation, base parser, pretraining, MTL, SeqTraL integration,
    self-training. Stages that do not retrain the parser carry the current
    dev scores forward with ``retrained = false``.
    """
    hp = hp or Hyperparams()
    cfg.validate()
    gold = _labeled(splits.train, "train")
    dev = _dev(splits.dev)
    needs_unlabeled = cfg.pretraining == "lcm" or cfg.self_training
    unlabeled = None
    if needs_unlabeled:
        if splits.unlabeled is None or len(splits.unlabeled) == 0:
            raise ValueError("LCM pretraining and self-training need unlabeled data")
        unlabeled = check_treebank(splits.unlabeled, name="unlabeled")
    if cfg.mtl_task is not None:
        _check_task_available(gold, cfg.mtl_task)
    base_config = _base_config(config, hp, mtl_task=None)
    ext_config = base_config
    if cfg.pretraining == "external":
        if external is None:
            raise ValueError("external-embeddings pretraining needs a sidecar of vectors")
        dim = int(np.asarray(next(iter(external.values()))).shape[-1])
        ext_config = dataclasses.replace(base_config, ext_dim=dim)

    stages: List[dict] = []
    notes = ["augmented data supplements gold data",
             "strategies are added in pipeline order (greedy), not jointly re-tuned"]
    train = gold
    try:
        stage = "augmentation"
        if cfg.augmentation is not None:
            aug_cfg = dataclasses.replace(cfg.augmentation,
                                          seed=derive_seed(hp.seed, "augmentation"))
            augmented = augment_treebank(gold, aug_cfg)
            train = gold + augmented
            stages.append(_stage(stage, None, None, False, {
                "strategy": aug_cfg.strategy, "n_augmented": len(augmented),
                "n_train": len(train)}))

        stage = "base"
        vocab = Vocab.build(train, unlabeled) if unlabeled is not None else Vocab.build(train)
        base = train_supervised(train, dev, hp, base_config, vocab)
        current = base
        stages.append(_stage(stage, base, None, True))

        encoders = None
        integrate_scheme = cfg.seqtral or SeqTraLScheme("FT")

        def integrate(data: Treebank, parser: ParserModel, stage_hp: Hyperparams) -> TrainResult:
            return integrate_and_finetune(parser, encoders, integrate_scheme, data, dev, stage_hp,
                                          cfg.mtl_task, cfg.mtl_weight)

        if cfg.pretraining == "lcm":
            stage = "pretraining"
            lcm = pretrain_lcm(unlabeled, base.model, hp.with_seed(derive_seed(hp.seed, stage)),
                               base_config)
            encoders = lcm.encoders
            if cfg.seqtral is None:
                current = integrate(train, base.model, hp.with_seed(derive_seed(hp.seed, "integration")))
                stages.append(_stage(stage, current, None, True,
                                     {"lcm": lcm.metadata, **_jsonable(current.metadata)}))
            else:
                stages.append(_stage(stage, None, current, False, {"lcm": lcm.metadata}))
        elif cfg.pretraining == "external":
            stage = "pretraining"
            stage_hp = hp.with_seed(derive_seed(hp.seed, stage))
            if cfg.mtl_task:
                current = train_mtl(train, dev, stage_hp, cfg.mtl_task, cfg.mtl_weight,
                                    ext_config, vocab, external)
            else:
                current = train_supervised(train, dev, stage_hp, ext_config, vocab, external)
            stages.append(_stage(stage, current, None, True, {"external_dim": ext_config.ext_dim}))

        if cfg.mtl_task is not None:
            stage = "mtl"
            if cfg.pretraining == "none":
                current = train_mtl(train, dev, hp.with_seed(derive_seed(hp.seed, stage)),
                                    cfg.mtl_task, cfg.mtl_weight, base_config, vocab)
                stages.append(_stage(stage, current, None, True, _jsonable(current.metadata)))
            else:
                stages.append(_stage(stage, None, current, False,
                                     {"note": "MTL head trained jointly with the pretraining-based system"}))

        if cfg.seqtral is not None:
            stage = "seqtral"
            current = integrate(train, base.model, hp.with_seed(derive_seed(hp.seed, "integration")))
            stages.append(_stage(stage, current, None, True, _jsonable(current.metadata)))

        if cfg.self_training:
            stage = "self_training"
            st_hp = hp.with_seed(derive_seed(hp.seed, stage))

            def recipe(data: Treebank) -> TrainResult:
                if cfg.pretraining == "lcm":
                    p0 = train_supervised(data, dev, st_hp, base_config, vocab)
                    return integrate(data, p0.model, st_hp)
                use_ext = cfg.pretraining == "external"
                conf = ext_config if use_ext else base_config
                ext = external if use_ext else None
                if cfg.mtl_task:
                    return train_mtl(data, dev, st_hp, cfg.mtl_task, cfg.mtl_weight, conf, vocab, ext)
                return train_supervised(data, dev, st_hp, conf, vocab, ext)

            ext = external if cfg.pretraining == "external" else None
            result = self_train(current.model, unlabeled, train, st_hp, dev, trainer=recipe,
                                external=ext)
            current = result
            stages.append(_stage(stage, current, None, True, _jsonable(result.metadata)))
    except Exception as exc:
        raise RuntimeError(f"stage {stage!r} failed: {exc}") from exc

    report = {
        "config": cfg.to_dict(),
        "hyperparams": dataclasses.asdict(hp),
        "model_config": base_config.to_dict(),
        "seed": hp.seed,
        "stages": stages,
        "notes": notes,
        "final": {"dev": None if current.dev_report is None else
                  {"uas": current.dev_uas, "las": current.dev_las}},
    }
    if splits.test is not None and len(splits.test):
        test = _labeled(splits.test, "test")
        ext = external if cfg.pretraining == "external" else None
        rep = evaluate(current.model, test, ext)
        report["final"]["test"] = {"uas": rep.uas, "las": rep.las}
    return EnsembleResult(current.model, report)
