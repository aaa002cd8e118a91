"""scikit-learn style estimators over the training pipeline.

``X`` is anything :func:`lowdep.validation.check_treebank` accepts; gold
trees live inside the treebank, so ``y`` is ignored.
"""

from __future__ import annotations

from typing import Optional

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .augment import AugmentConfig
from .conllu import Treebank
from .evaluation import EvalReport, uas_las
from .model import ModelConfig
from .training import (Hyperparams, SeqTraLScheme, Splits, StrategyConfig, run_ensemble,
                       train_supervised)
from .validation import check_treebank


class BiaffineParser(BaseEstimator):
    """Biaffine dependency parser trained by supervised learning.

    Fitted attributes: ``model_``, ``vocab_``, ``history_``, ``best_epoch_``.
    """

    def __init__(self, word_dim=100, char_dim=50, hidden_dim=200, arc_dim=100, label_dim=50,
                 n_layers=2, epochs=100, batch_size=16, lr=0.002, dropout=0.33, clip=5.0,
                 patience=20, seed=0):
        self.word_dim = word_dim
        self.char_dim = char_dim
        self.hidden_dim = hidden_dim
        self.arc_dim = arc_dim
        self.label_dim = label_dim
        self.n_layers = n_layers
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.dropout = dropout
        self.clip = clip
        self.patience = patience
        self.seed = seed

    def _model_config(self) -> ModelConfig:
        return ModelConfig(word_dim=self.word_dim, char_dim=self.char_dim,
                           hidden_dim=self.hidden_dim, arc_dim=self.arc_dim,
                           label_dim=self.label_dim, n_layers=self.n_layers,
                           dropout=self.dropout)

    def _hyperparams(self, **extra) -> Hyperparams:
        return Hyperparams(batch_size=self.batch_size, epochs=self.epochs, dropout=self.dropout,
                           lr=self.lr, seed=self.seed, clip=self.clip, patience=self.patience,
                           **extra)

    def fit(self, X, y=None, dev=None):
        train = check_treebank(X, labeled=True)
        dev = None if dev is None else check_treebank(dev, labeled=True, name="dev")
        result = train_supervised(train, dev, self._hyperparams(), self._model_config())
        self._store(result.model, result.history, result.best_epoch)
        return self

    def _store(self, model, history, best_epoch):
        self.model_ = model
        self.vocab_ = model.vocab
        self.history_ = history
        self.best_epoch_ = best_epoch

    def predict(self, X) -> Treebank:
        """Parse ``X``; existing heads and relations are ignored and replaced."""
        check_is_fitted(self, "model_")
        tb = check_treebank(X)
        return Treebank(tuple(self.model_.parse(list(tb))), tb.name)

    def evaluate(self, X, include_punct: bool = True) -> EvalReport:
        gold = check_treebank(X, labeled=True)
        return uas_las(gold, self.predict(gold), include_punct=include_punct)

    def score(self, X, y=None) -> float:
        """Macro-averaged UAS on ``X``."""
        return self.evaluate(X).uas


class LowResourceParser(BiaffineParser):
    """Parser trained with any combination of the low-resource strategies.

    ``fit`` runs the staged pipeline; ``report_`` holds the per-stage dev
    scores. Set ``seqtral`` to one of FE, UF, DL, FT (requires
    ``pretraining="lcm"``) and ``augmentation`` to Cropping, Rotation or
    Nonce.
    """

    def __init__(self, augmentation=None, augment_count=1000, pretraining="none",
                 mtl_task=None, mtl_weight=1.0, seqtral=None, unfreeze_epochs_per_layer=None,
                 lr_decay_factor=None, self_training=False, pretrain_epochs=None,
                 word_dim=100, char_dim=50, hidden_dim=200, arc_dim=100, label_dim=50,
                 n_layers=2, epochs=100, batch_size=16, lr=0.002, dropout=0.33, clip=5.0,
                 patience=20, seed=0):
        super().__init__(word_dim=word_dim, char_dim=char_dim, hidden_dim=hidden_dim,
                         arc_dim=arc_dim, label_dim=label_dim, n_layers=n_layers, epochs=epochs,
                         batch_size=batch_size, lr=lr, dropout=dropout, clip=clip,
                         patience=patience, seed=seed)
        self.augmentation = augmentation
        self.augment_count = augment_count
        self.pretraining = pretraining
        self.mtl_task = mtl_task
        self.mtl_weight = mtl_weight
        self.seqtral = seqtral
        self.unfreeze_epochs_per_layer = unfreeze_epochs_per_layer
        self.lr_decay_factor = lr_decay_factor
        self.self_training = self_training
        self.pretrain_epochs = pretrain_epochs

    def strategy_config(self) -> StrategyConfig:
        aug = None
        if self.augmentation:
            aug = AugmentConfig(self.augmentation, target_count=self.augment_count)
        scheme = None
        if self.seqtral:
            scheme = SeqTraLScheme(self.seqtral, self.unfreeze_epochs_per_layer,
                                   self.lr_decay_factor)
        return StrategyConfig(augmentation=aug, pretraining=self.pretraining,
                              mtl_task=self.mtl_task, seqtral=scheme,
                              self_training=bool(self.self_training), mtl_weight=self.mtl_weight)

    def fit(self, X, y=None, dev=None, unlabeled=None, external=None):
        cfg = self.strategy_config()  # validate before touching data
        train = check_treebank(X, labeled=True)
        dev = None if dev is None else check_treebank(dev, labeled=True, name="dev")
        if unlabeled is not None:
            unlabeled = check_treebank(unlabeled, allow_empty=True, name="unlabeled")
        hp = self._hyperparams(pretrain_epochs=self.pretrain_epochs)
        result = run_ensemble(cfg, Splits(train, dev, unlabeled), hp, self._model_config(),
                              external)
        self.report_ = result.report
        self.external_ = external if cfg.pretraining == "external" else None
        self._store(result.model, [s for s in result.report["stages"]], None)
        return self

    def predict(self, X, external: Optional[dict] = None) -> Treebank:
        check_is_fitted(self, "model_")
        tb = check_treebank(X)
        ext = external if external is not None else self.external_
        return Treebank(tuple(self.model_.parse(list(tb), external=ext)), tb.name)
