"""Input coercion and checks shared by the estimators and the CLI."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from .conllu import Sentence, Treebank, TreeValidationError, parse_conllu, read_conllu, validate_tree


def check_treebank(X, labeled: Optional[bool] = None, allow_empty: bool = False,
                   name: str = "X") -> Treebank:
    """Coerce ``X`` to a :class:`Treebank` and check it.

    ``X`` may be a Treebank, a sequence of Sentences, CoNLL-U text/bytes, or
    a path to a CoNLL-U file. With ``labeled=True`` every sentence must be
    a valid tree; with ``labeled=False`` every sentence must be unlabeled.
    """
    if isinstance(X, Treebank):
        tb = X
    elif isinstance(X, Path):
        tb = read_conllu(X, validate=False)
    elif isinstance(X, (str, bytes)):
        if isinstance(X, str) and "\t" not in X and Path(X).is_file():
            tb = read_conllu(X, validate=False)
        else:
            tb = parse_conllu(X, validate=False)
    elif isinstance(X, Sentence):
        tb = Treebank((X,))
    else:
        try:
            sentences = tuple(X)
        except TypeError:
            raise TypeError(f"{name}: expected a treebank, got {type(X).__name__}") from None
        if not all(isinstance(s, Sentence) for s in sentences):
            raise TypeError(f"{name}: expected a sequence of Sentence objects")
        tb = Treebank(sentences)
    if not allow_empty and len(tb) == 0:
        raise ValueError(f"{name}: treebank is empty")
    for s in tb:
        if len(s) == 0:
            raise ValueError(f"{name}: sentence {s.sent_id!r} has no tokens")
        if labeled is True:
            if s.is_unlabeled:
                raise ValueError(f"{name}: sentence {s.sent_id!r} has no dependency annotation")
            verdict = validate_tree(s)
            if not verdict:
                raise TreeValidationError(s.sent_id, verdict.violations)
        elif labeled is False and not s.is_unlabeled:
            raise ValueError(f"{name}: sentence {s.sent_id!r} is labeled; expected unlabeled data")
    return tb
