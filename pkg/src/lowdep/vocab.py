"""Symbol tables for words, characters and the label spaces."""

from __future__ import annotations

from collections import Counter
from typing import Dict, Iterable, List, Sequence

from .conllu import Sentence, Treebank, format_feats

PAD = "<pad>"
UNK = "<unk>"
ROOT = "<root>"
NO_CASE = "NoCase"

#: tagging tasks and the token attribute each one predicts
TASKS = ("morph", "case", "deprel")


def case_label(token) -> str:
    return token.feats.get("Case", NO_CASE)


def task_labels(sentence: Sentence, task: str) -> List[str]:
    if task == "morph":
        return [format_feats(t.feats) for t in sentence.tokens]
    if task == "case":
        return [case_label(t) for t in sentence.tokens]
    if task == "deprel":
        return [t.deprel for t in sentence.tokens]
    raise ValueError(f"unknown tagging task {task!r}; expected one of {TASKS}")


class Index:
    """A frozen symbol <-> id map with dense ids."""

    def __init__(self, symbols: Sequence[str], unk: str = None):
        self.symbols = list(symbols)
        self._ids = {s: i for i, s in enumerate(self.symbols)}
        if len(self._ids) != len(self.symbols):
            raise ValueError("duplicate symbols")
        self.unk = unk
        if unk is not None and unk not in self._ids:
            raise ValueError("unknown symbol missing from index")

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol) -> bool:
        return symbol in self._ids

    def __eq__(self, other) -> bool:
        return isinstance(other, Index) and self.symbols == other.symbols and self.unk == other.unk

    def id(self, symbol: str) -> int:
        try:
            return self._ids[symbol]
        except KeyError:
            if self.unk is None:
                raise KeyError(f"symbol {symbol!r} not in closed index") from None
            return self._ids[self.unk]

    def ids(self, symbols: Iterable[str]) -> List[int]:
        return [self.id(s) for s in symbols]

    def to_dict(self) -> dict:
        return {"symbols": self.symbols, "unk": self.unk}

    @classmethod
    def from_dict(cls, d: dict) -> "Index":
        return cls(d["symbols"], d["unk"])


def _index(counter: Counter, specials: Sequence[str], unk=UNK) -> Index:
    # frequency-descending, ties alphabetical: deterministic for a given input
    body = sorted((s for s in counter if s not in specials), key=lambda s: (-counter[s], s))
    return Index(list(specials) + body, unk)


class Vocab:
    """Word, character, UPOS, morph-tag, case and relation maps."""

    MAPS = ("words", "chars", "upos", "morph", "case", "deprel")

    def __init__(self, words: Index, chars: Index, upos: Index, morph: Index,
                 case: Index, deprel: Index):
        self.words = words
        self.chars = chars
        self.upos = upos
        self.morph = morph
        self.case = case
        self.deprel = deprel

    @classmethod
    def build(cls, *treebanks: Treebank) -> "Vocab":
        """Count symbols over the given treebanks.

        Forms, characters and morphology come from every sentence; relation
        labels only from labeled sentences.
        """
        words, chars, upos, morph, case, deprel = (Counter() for _ in range(6))
        for tb in treebanks:
            for s in tb:
                for t in s.tokens:
                    words[t.form] += 1
                    chars.update(t.form)
                    upos[t.upos] += 1
                    morph[format_feats(t.feats)] += 1
                    case[case_label(t)] += 1
                if not s.is_unlabeled:
                    deprel.update(t.deprel for t in s.tokens)
        return cls(
            _index(words, [PAD, UNK, ROOT]),
            _index(chars, [PAD, UNK, ROOT]),
            _index(upos, [UNK]),
            _index(morph, [UNK]),
            _index(case, [UNK]),
            # closed set: relations are only ever predicted, never looked up from unseen data
            Index(sorted(deprel), None),
        )

    def labels(self, task: str) -> Index:
        return {"morph": self.morph, "case": self.case, "deprel": self.deprel}[task]

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and all(
            getattr(self, m) == getattr(other, m) for m in self.MAPS)

    def to_dict(self) -> Dict[str, dict]:
        return {m: getattr(self, m).to_dict() for m in self.MAPS}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocab":
        return cls(*(Index.from_dict(d[m]) for m in cls.MAPS))
