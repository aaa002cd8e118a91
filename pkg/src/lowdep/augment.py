"""Treebank augmentation: cropping, rotation and nonce substitution.

Every operator returns sentences that are valid trees. Rotation and nonce
keep the dependency structure; cropping keeps a root-anchored subtree.
"""

from __future__ import annotations

import dataclasses
import itertools
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .conllu import Sentence, Treebank, format_feats, validate_tree
from .validation import check_treebank

STRATEGIES = ("Cropping", "Rotation", "Nonce")
_ALIASES = {s.lower(): s for s in STRATEGIES}
_ALIASES.update({"crop": "Cropping", "rotate": "Rotation"})

Lexicon = Dict[Tuple[str, str], List[Tuple[str, str]]]


def canonical_strategy(name: str) -> str:
    try:
        return _ALIASES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown augmentation strategy {name!r}; "
                         f"expected one of {STRATEGIES}") from None


@dataclass(frozen=True)
class AugmentConfig:
    strategy: str = "Nonce"
    target_count: int = 1000
    rotation_relations: FrozenSet[str] = frozenset({"nsubj", "obj", "iobj", "obl"})
    crop_relations: FrozenSet[str] = frozenset({"nsubj", "obj", "iobj", "obl"})
    nonce_upos: FrozenSet[str] = frozenset({"NOUN", "VERB", "ADJ"})
    nonce_rate: float = 0.3
    seed: int = 0
    #: consecutive empty nonce draws after which a source sentence is exhausted
    nonce_attempts: int = 20

    def __post_init__(self):
        object.__setattr__(self, "strategy", canonical_strategy(self.strategy))
        for name in ("rotation_relations", "crop_relations", "nonce_upos"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))
        if self.target_count < 0:
            raise ValueError("target_count must be non-negative")
        if not 0.0 <= self.nonce_rate <= 1.0:
            raise ValueError("nonce_rate must lie in [0, 1]")
        needed = {"Cropping": "crop_relations", "Rotation": "rotation_relations",
                  "Nonce": "nonce_upos"}[self.strategy]
        if not getattr(self, needed):
            raise ValueError(f"{needed} must be non-empty for {self.strategy}")


def _children(heads: Sequence[int]) -> Dict[int, List[int]]:
    kids = defaultdict(list)
    for d, h in enumerate(heads, start=1):
        kids[h].append(d)
    return kids


def _subtree(kids: Dict[int, List[int]], node: int) -> List[int]:
    out, stack = [], [node]
    while stack:
        x = stack.pop()
        out.append(x)
        stack.extend(kids.get(x, ()))
    return sorted(out)


def _root_of(s: Sentence) -> int:
    return next(t.id for t in s.tokens if t.head == 0)


def _provenance(s: Sentence, strategy: str, **extra) -> str:
    parts = [f"# augmented_from = {s.sent_id} strategy = {strategy}"]
    parts.extend(f"{k} = {v}" for k, v in extra.items())
    return " ".join(parts)


def _reindex(s: Sentence, order: Sequence[int], sent_id: str, comment: str) -> Sentence:
    """Keep the tokens listed in ``order`` (old ids, new surface order)."""
    new_id = {old: i for i, old in enumerate(order, start=1)}
    new_id[0] = 0
    tokens = []
    for old in order:
        t = s.tokens[old - 1]
        tokens.append(dataclasses.replace(t, id=new_id[old], head=new_id[t.head]))
    return Sentence.build(tokens, sent_id, [comment])


def _check(s: Sentence) -> None:
    verdict = validate_tree(s)
    if not verdict:
        raise ValueError(f"augmentation needs valid trees; {s.sent_id!r}: "
                         + "; ".join(verdict.violations))


# ---------------------------------------------------------------------------
# cropping


def crop(s: Sentence, cfg: AugmentConfig, rng: Optional[np.random.Generator] = None) -> List[Sentence]:
    """One sentence per eligible root child: the root plus that child's subtree."""
    _check(s)
    root = _root_of(s)
    kids = _children(s.heads)
    out = []
    for k, child in enumerate(kids.get(root, ())):
        rel = s.tokens[child - 1].deprel
        if rel not in cfg.crop_relations:
            continue
        keep = sorted(_subtree(kids, child) + [root])
        out.append(_reindex(s, keep, f"{s.sent_id}-crop{k}",
                            _provenance(s, "Cropping", relation=rel)))
    return out


# ---------------------------------------------------------------------------
# rotation


def _rotation_blocks(s: Sentence, cfg: AugmentConfig) -> List[List[int]]:
    """Contiguous subtree spans of eligible root children, in surface order."""
    root = _root_of(s)
    kids = _children(s.heads)
    blocks = []
    for child in kids.get(root, ()):
        if s.tokens[child - 1].deprel not in cfg.rotation_relations:
            continue
        span = _subtree(kids, child)
        if span[-1] - span[0] + 1 == len(span):
            blocks.append(span)
    return blocks


def _apply_permutation(s: Sentence, blocks: List[List[int]], perm: Sequence[int], k: int) -> Sentence:
    slot_of = {}
    for slot, block in enumerate(blocks):
        for tid in block:
            slot_of[tid] = slot
    order, seen = [], set()
    for tid in range(1, len(s) + 1):
        slot = slot_of.get(tid)
        if slot is None:
            order.append(tid)
        elif slot not in seen:
            seen.add(slot)
            order.extend(blocks[perm[slot]])
    label = "-".join(map(str, perm))
    return _reindex(s, order, f"{s.sent_id}-rot{k}",
                    _provenance(s, "Rotation", permutation=label))


def rotate(s: Sentence, cfg: AugmentConfig, rng: np.random.Generator) -> List[Sentence]:
    """Reorder the spans of eligible root children by one sampled permutation.

    Returns an empty list when fewer than two spans are eligible or when the
    draw is the identity permutation.
    """
    _check(s)
    blocks = _rotation_blocks(s, cfg)
    if len(blocks) < 2:
        return []
    perm = rng.permutation(len(blocks)).tolist()
    if perm == sorted(perm):
        return []
    return [_apply_permutation(s, blocks, perm, 0)]


def _rotation_candidates(s: Sentence, cfg: AugmentConfig, rng) -> Iterator[Sentence]:
    blocks = _rotation_blocks(s, cfg)
    if len(blocks) < 2:
        return
    k = len(blocks)
    if k <= 5:
        perms = [list(p) for p in itertools.permutations(range(k))][1:]
        for j, i in enumerate(rng.permutation(len(perms))):
            yield _apply_permutation(s, blocks, perms[i], j)
    else:
        seen = {tuple(range(k))}
        j = 0
        for _ in range(500):
            p = tuple(rng.permutation(k).tolist())
            if p not in seen:
                seen.add(p)
                yield _apply_permutation(s, blocks, list(p), j)
                j += 1


# ---------------------------------------------------------------------------
# nonce


def build_lexicon(tb: Treebank, upos: Optional[Sequence[str]] = None) -> Lexicon:
    """Map (UPOS, serialized feats) to the distinct (form, lemma) pairs seen with it."""
    buckets = defaultdict(set)
    for s in tb:
        for t in s.tokens:
            if upos is None or t.upos in upos:
                buckets[(t.upos, format_feats(t.feats))].add((t.form, t.lemma))
    return {key: sorted(vals) for key, vals in sorted(buckets.items())}


def _nonce_once(s: Sentence, lexicon: Lexicon, cfg: AugmentConfig, rng, tag: int):
    tokens, changed = [], 0
    for t in s.tokens:
        if t.upos in cfg.nonce_upos and cfg.nonce_rate > 0 and rng.random() < cfg.nonce_rate:
            bucket = [e for e in lexicon.get((t.upos, t.feats_str), ()) if e[0] != t.form]
            if bucket:
                form, lemma = bucket[int(rng.integers(len(bucket)))]
                t = dataclasses.replace(t, form=form, lemma=lemma)
                changed += 1
        tokens.append(t)
    out = Sentence.build(tokens, f"{s.sent_id}-nonce{tag}", [_provenance(s, "Nonce")])
    return out, changed


def nonce(s: Sentence, lexicon: Lexicon, cfg: AugmentConfig, rng: np.random.Generator) -> Sentence:
    """Swap content words for lexicon entries sharing UPOS and features.

    Heads, relations, UPOS and features are left exactly as they were.
    """
    _check(s)
    out, changed = _nonce_once(s, lexicon, cfg, rng, 0)
    return out if changed else s


def _nonce_candidates(s: Sentence, lexicon: Lexicon, cfg: AugmentConfig, rng) -> Iterator[Sentence]:
    seen = {tuple(s.forms)}
    misses, tag = 0, 0
    while misses < cfg.nonce_attempts:
        out, changed = _nonce_once(s, lexicon, cfg, rng, tag)
        key = tuple(out.forms)
        if not changed or key in seen:
            misses += 1
            continue
        misses = 0
        seen.add(key)
        tag += 1
        yield out


# ---------------------------------------------------------------------------


def augment_treebank(tb: Treebank, cfg: AugmentConfig, lexicon: Optional[Lexicon] = None) -> Treebank:
    """Produce ``min(target_count, achievable)`` augmented sentences.

    Sources are visited round-robin, one new distinct output per source per
    pass, until the target is met or every source is exhausted.
    """
    for s in tb:
        _check(s)
    rng = np.random.default_rng(cfg.seed)
    if cfg.target_count == 0 or len(tb) == 0:
        return Treebank((), f"{tb.name}-{cfg.strategy.lower()}")
    if cfg.strategy == "Nonce" and lexicon is None:
        lexicon = build_lexicon(tb, cfg.nonce_upos)
    generators = []
    for s in tb:
        # independent stream per source sentence
        sub = np.random.default_rng(rng.integers(2**63))
        if cfg.strategy == "Cropping":
            generators.append(iter(crop(s, cfg)))
        elif cfg.strategy == "Rotation":
            generators.append(_rotation_candidates(s, cfg, sub))
        else:
            generators.append(_nonce_candidates(s, lexicon, cfg, sub))
    out: List[Sentence] = []
    active = list(range(len(generators)))
    while active and len(out) < cfg.target_count:
        still = []
        for i in active:
            if len(out) >= cfg.target_count:
                still.append(i)
                continue
            nxt = next(generators[i], None)
            if nxt is not None:
                out.append(nxt)
                still.append(i)
        active = still
    return Treebank(tuple(out), f"{tb.name}-{cfg.strategy.lower()}")


class TreebankAugmenter(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` collects the nonce lexicon, ``transform`` augments.

    ``transform`` returns only the augmented sentences unless
    ``include_source`` is set, in which case the input comes first.
    """

    def __init__(self, strategy="Nonce", target_count=1000,
                 rotation_relations=("nsubj", "obj", "iobj", "obl"),
                 crop_relations=("nsubj", "obj", "iobj", "obl"),
                 nonce_upos=("NOUN", "VERB", "ADJ"), nonce_rate=0.3,
                 include_source=False, seed=0):
        self.strategy = strategy
        self.target_count = target_count
        self.rotation_relations = rotation_relations
        self.crop_relations = crop_relations
        self.nonce_upos = nonce_upos
        self.nonce_rate = nonce_rate
        self.include_source = include_source
        self.seed = seed

    def _config(self) -> AugmentConfig:
        return AugmentConfig(self.strategy, self.target_count, frozenset(self.rotation_relations),
                             frozenset(self.crop_relations), frozenset(self.nonce_upos),
                             self.nonce_rate, self.seed)

    def fit(self, X, y=None):
        tb = check_treebank(X, labeled=True)
        self.config_ = self._config()
        self.lexicon_ = build_lexicon(tb, self.config_.nonce_upos)
        return self

    def transform(self, X):
        check_is_fitted(self, "lexicon_")
        tb = check_treebank(X, labeled=True)
        aug = augment_treebank(tb, self.config_, self.lexicon_)
        return tb + aug if self.include_source else aug
