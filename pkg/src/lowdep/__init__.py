"""Dependency parsing toolkit for low-resource, morphologically rich languages."""

from .augment import AugmentConfig, TreebankAugmenter, augment_treebank, crop, nonce, rotate
from .conllu import (Sentence, Token, Treebank, parse_conllu, protocol_split, protocol_split_with_dev,
                     read_conllu,
                     serialize, validate_tree, write_conllu)
from .decode import assign_labels, cle_mst
from .estimator import BiaffineParser, LowResourceParser
from .evaluation import EvalReport, paired_ttest, uas_las
from .model import ModelConfig, ParserModel
from .training import (Hyperparams, SeqTraLScheme, Splits, StrategyConfig, integrate_and_finetune,
                       pretrain_lcm, run_ensemble, self_train, train_mtl, train_supervised)

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig", "BiaffineParser", "EvalReport", "Hyperparams", "LowResourceParser",
    "ModelConfig", "ParserModel", "SeqTraLScheme", "Sentence", "Splits", "StrategyConfig", "Token",
    "Treebank", "TreebankAugmenter", "assign_labels", "augment_treebank", "cle_mst", "crop",
    "integrate_and_finetune", "nonce", "paired_ttest", "parse_conllu", "pretrain_lcm",
    "protocol_split", "protocol_split_with_dev", "read_conllu", "rotate", "run_ensemble", "self_train", "serialize",
    "train_mtl", "train_supervised", "uas_las", "validate_tree", "write_conllu",
]
