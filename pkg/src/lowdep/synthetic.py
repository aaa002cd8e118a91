"""A small synthetic free-word-order, case-marking language.

Used for the bundled toy treebank and for trend checks when no UD data is
at hand. Relations are signalled mostly by case suffixes and agreement, so
morphology carries real information about the tree; constituent order is
free and adjectives occasionally scramble out of their phrase, which makes
some trees non-projective.
"""

from __future__ import annotations

from typing import List

import numpy as np

from .conllu import Sentence, Token, Treebank

_CONS = "ptkbdgmnrslvjh"
_VOWELS = "aeiou"

# case -> (singular suffix, plural suffix) for two declension classes;
# accusative and instrumental/dative partially collide across classes
_DECLENSIONS = {
    "Masc": {"Nom": ("os", "oi"), "Acc": ("om", "ons"), "Dat": ("oi", "ois"),
             "Ins": ("o", "ois"), "Gen": ("ou", "on"), "Loc": ("ei", "oisi")},
    "Fem": {"Nom": ("a", "ai"), "Acc": ("an", "as"), "Dat": ("ai", "ais"),
            "Ins": ("ai", "ais"), "Gen": ("as", "on"), "Loc": ("ai", "aisi")},
}
_VERB_ENDINGS = {("3", "Sing"): "ti", ("3", "Plur"): "nti"}
_ADVERBS = ["tada", "iha", "punar", "sada", "atra"]
_DETS = ["sa", "ta", "e"]
_MARKS = ["yada", "yatra"]


def _stem(rng, syllables) -> str:
    return "".join(_CONS[rng.integers(len(_CONS))] + _VOWELS[rng.integers(len(_VOWELS))]
                   for _ in range(syllables))


class _Lexicon:
    def __init__(self, rng):
        def stems(n, lo, hi):
            out = set()
            while len(out) < n:
                out.add(_stem(rng, int(rng.integers(lo, hi + 1))))
            return sorted(out)
        self.nouns = [(s, "Masc" if i % 2 else "Fem") for i, s in enumerate(stems(90, 1, 3))]
        self.adjs = stems(40, 2, 3)
        self.verbs = stems(50, 1, 2)


class _Builder:
    """Accumulates tokens as (form, lemma, upos, feats, head_key, deprel, key)."""

    def __init__(self):
        self.items = []

    def add(self, form, lemma, upos, feats, head, deprel):
        key = len(self.items)
        self.items.append([form, lemma, upos, feats, head, deprel, key])
        return key


class SyntheticLanguage:
    """Sentence generator; two instances with the same seed share a lexicon."""

    def __init__(self, seed: int = 0):
        self.lex = _Lexicon(np.random.default_rng([seed, 17]))

    def _noun_phrase(self, rng, b: _Builder, case: str, depth: int = 0):
        """Return a list of units; each unit is a list of token keys kept together."""
        stem, gender = self.lex.nouns[rng.integers(len(self.lex.nouns))]
        number = "Plur" if rng.random() < 0.3 else "Sing"
        suffix = _DECLENSIONS[gender][case][number == "Plur"]
        feats = {"Case": case, "Gender": gender, "Number": number}
        head = b.add(stem + suffix, stem, "NOUN", feats, None, None)
        before, after, loose = [], [], []
        if rng.random() < 0.45:
            adj = self.lex.adjs[rng.integers(len(self.lex.adjs))]
            k = b.add(adj + suffix, adj, "ADJ", dict(feats), head, "amod")
            if rng.random() < 0.12:
                loose.append([k])        # scrambled out of the phrase
            elif rng.random() < 0.6:
                before.append(k)
            else:
                after.append(k)
        if rng.random() < 0.25:
            det = _DETS[rng.integers(len(_DETS))]
            before.insert(0, b.add(det, det, "DET", {}, head, "det"))
        units = []
        if depth == 0 and rng.random() < 0.25:
            gen_units = self._noun_phrase(rng, b, "Gen", depth + 1)
            for u in gen_units:
                for k in u:
                    if b.items[k][4] is None:
                        b.items[k][4], b.items[k][5] = head, "nmod"
            core = before + [head] + after
            units.append([k for u in gen_units for k in u] + core if rng.random() < 0.7
                         else core + [k for u in gen_units for k in u])
        else:
            units.append(before + [head] + after)
        return units + loose

    def _clause(self, rng, b: _Builder, depth: int = 0):
        verb = self.lex.verbs[rng.integers(len(self.lex.verbs))]
        units, subj_number = [], "Sing"
        v = b.add(None, verb, "VERB", None, None, None)
        args = []
        if rng.random() < 0.9:
            args.append(("Nom", "nsubj"))
        if rng.random() < 0.7:
            args.append(("Acc", "obj"))
        if rng.random() < 0.3:
            args.append(("Dat", "iobj"))
        if rng.random() < 0.4:
            args.append(("Ins" if rng.random() < 0.5 else "Loc", "obl"))
        for case, rel in args:
            np_units = self._noun_phrase(rng, b, case)
            for u in np_units:
                for k in u:
                    if b.items[k][4] is None:
                        b.items[k][4], b.items[k][5] = v, rel
                        if rel == "nsubj":
                            subj_number = b.items[k][3]["Number"]
            units.extend(np_units)
        if rng.random() < 0.3:
            adv = _ADVERBS[rng.integers(len(_ADVERBS))]
            units.append([b.add(adv, adv, "ADV", {}, v, "advmod")])
        if depth == 0 and rng.random() < 0.25:
            sub_units, sv = self._clause(rng, b, depth + 1)
            mark = _MARKS[rng.integers(len(_MARKS))]
            m = b.add(mark, mark, "SCONJ", {}, sv, "mark")
            b.items[sv][4], b.items[sv][5] = v, "advcl"
            units.append([m] + [k for u in sub_units for k in u])
        b.items[v][0] = verb + "a" + _VERB_ENDINGS[("3", subj_number)]
        b.items[v][3] = {"Number": subj_number, "Person": "3"}
        units.append([v])
        order = rng.permutation(len(units))
        return [units[i] for i in order], v

    def sentence(self, rng, sent_id: str) -> Sentence:
        b = _Builder()
        units, v = self._clause(rng, b)
        b.items[v][4], b.items[v][5] = -1, "root"
        order = [k for u in units for k in u]
        order.append(b.add(".", ".", "PUNCT", {}, v, "punct"))
        position = {k: i for i, k in enumerate(order, start=1)}
        tokens = []
        for k in order:
            form, lemma, upos, feats, head, rel, _ = b.items[k]
            tokens.append(Token(position[k], form, lemma, upos, "_", feats or {},
                                0 if head == -1 else position[head], rel))
        return Sentence.build(tokens, sent_id)


def generate_treebank(n: int, seed: int = 0, name: str = "synthetic",
                      lexicon_seed: int = 0) -> Treebank:
    """``n`` sentences drawn with ``seed`` from the language fixed by ``lexicon_seed``."""
    lang = SyntheticLanguage(lexicon_seed)
    rng = np.random.default_rng(seed)
    sents: List[Sentence] = [lang.sentence(rng, f"{name}-{i:05d}") for i in range(n)]
    return Treebank(tuple(sents), name)
