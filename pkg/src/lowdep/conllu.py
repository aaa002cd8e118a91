"""CoNLL-U reading and writing, tree validation and the train/unlabeled split.

Sentences and tokens are immutable values. Multiword-token ranges (``3-4``)
and empty nodes (``3.1``) are kept verbatim next to the regular tokens so a
file survives a read/write round trip, but they never take part in parsing
or scoring.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np

#: Head value of tokens whose attachment is unknown (not the same as ROOT=0).
ABSENT = None

UNLABELED_COMMENT = "# unlabeled = true"


class ConlluError(ValueError):
    """Base class for CoNLL-U problems."""


class ConlluParseError(ConlluError):
    """The text does not follow the column grammar."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TreeValidationError(ConlluError):
    """A sentence is not a well-formed dependency tree."""

    def __init__(self, sent_id: Optional[str], violations: Sequence[str]):
        self.sent_id = sent_id
        self.violations = list(violations)
        super().__init__(f"sentence {sent_id!r}: " + "; ".join(self.violations))


def parse_feats(value: str) -> dict:
    if value == "_" or value == "":
        return {}
    feats = {}
    for pair in value.split("|"):
        key, sep, val = pair.partition("=")
        if not sep or not key:
            raise ValueError(f"malformed feature {pair!r}")
        if key in feats:
            raise ValueError(f"duplicate feature {key!r}")
        feats[key] = val
    return feats


def format_feats(feats: Mapping[str, str]) -> str:
    """Attribute-sorted, pipe-joined features; ``_`` when empty."""
    if not feats:
        return "_"
    keys = sorted(feats, key=lambda k: (k.lower(), k))
    return "|".join(f"{k}={feats[k]}" for k in keys)


@dataclass(frozen=True)
class Token:
    id: int
    form: str
    lemma: str = "_"
    upos: str = "_"
    xpos: str = "_"
    feats: Mapping[str, str] = field(default_factory=dict)
    head: Optional[int] = ABSENT
    deprel: str = "_"
    deps: str = "_"
    misc: str = "_"

    @property
    def feats_str(self) -> str:
        return format_feats(self.feats)

    def to_line(self) -> str:
        head = "_" if self.head is None else str(self.head)
        return "\t".join(
            [str(self.id), self.form, self.lemma, self.upos, self.xpos,
             self.feats_str, head, self.deprel, self.deps, self.misc]
        )


@dataclass(frozen=True)
class Sentence:
    """One CoNLL-U block.

    ``comments`` holds the comment lines verbatim (``sent_id`` included);
    ``extra_lines`` holds ``(position, line)`` pairs for multiword-token and
    empty-node lines, where position is the number of regular tokens that
    precede the line.
    """

    tokens: tuple = ()
    sent_id: Optional[str] = None
    comments: tuple = ()
    extra_lines: tuple = ()

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def heads(self) -> list:
        return [t.head for t in self.tokens]

    @property
    def deprels(self) -> list:
        return [t.deprel for t in self.tokens]

    @property
    def forms(self) -> list:
        return [t.form for t in self.tokens]

    @property
    def is_unlabeled(self) -> bool:
        return UNLABELED_COMMENT in self.comments or (
            bool(self.tokens) and all(t.head is None for t in self.tokens)
        )

    @classmethod
    def build(cls, tokens: Iterable[Token], sent_id: Optional[str] = None,
              comments: Iterable[str] = ()) -> "Sentence":
        """Make a sentence whose comment block starts with its sent_id."""
        comments = [c for c in comments if not _is_sent_id_comment(c)]
        if sent_id is not None:
            comments.insert(0, f"# sent_id = {sent_id}")
        return cls(tuple(tokens), sent_id, tuple(comments))

    def with_heads(self, heads: Sequence[Optional[int]],
                   deprels: Optional[Sequence[str]] = None) -> "Sentence":
        if len(heads) != len(self.tokens):
            raise ValueError("head array length differs from sentence length")
        if deprels is None:
            deprels = self.deprels
        tokens = tuple(
            dataclasses.replace(t, head=None if h is None else int(h), deprel=r)
            for t, h, r in zip(self.tokens, heads, deprels)
        )
        return dataclasses.replace(self, tokens=tokens)

    def add_comment(self, comment: str) -> "Sentence":
        return dataclasses.replace(self, comments=self.comments + (comment,))


@dataclass(frozen=True)
class Treebank:
    sentences: tuple = ()
    name: str = ""

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return Treebank(self.sentences[idx], self.name)
        return self.sentences[idx]

    def __add__(self, other: "Treebank") -> "Treebank":
        return Treebank(self.sentences + tuple(other.sentences), self.name)

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)


def _is_sent_id_comment(line: str) -> bool:
    return line.startswith("# sent_id") and "=" in line


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class TreeVerdict:
    ok: bool
    violations: tuple = ()

    def __bool__(self) -> bool:
        return self.ok


def validate_tree(s: Sentence) -> TreeVerdict:
    """Check single root, head ranges, acyclicity and reachability from ROOT."""
    n = len(s.tokens)
    violations = []
    if n == 0:
        return TreeVerdict(False, ("empty sentence",))
    for i, tok in enumerate(s.tokens, start=1):
        if tok.id != i:
            violations.append(f"token ids not contiguous at position {i}")
            break
    heads = s.heads
    if any(h is None for h in heads):
        violations.append("absent heads")
        return TreeVerdict(False, tuple(violations))
    for i, h in enumerate(heads, start=1):
        if h == i:
            violations.append(f"token {i} is its own head")
        elif not 0 <= h <= n:
            violations.append(f"token {i} has out-of-range head {h}")
    if violations:
        return TreeVerdict(False, tuple(violations))
    n_roots = sum(1 for h in heads if h == 0)
    if n_roots == 0:
        violations.append("no root")
    elif n_roots > 1:
        violations.append("multiple roots")
    # colour walk: 0 = unvisited, 1 = on current path, 2 = reaches ROOT
    state = [0] * (n + 1)
    state[0] = 2
    cyclic = set()
    for start in range(1, n + 1):
        path = []
        node = start
        while state[node] == 0:
            state[node] = 1
            path.append(node)
            node = heads[node - 1]
        if state[node] == 1:
            # found a cycle; every node on the path fails to reach ROOT
            cyclic.update(path[path.index(node):])
            for p in path:
                state[p] = 3
        else:
            final = state[node]
            for p in path:
                state[p] = final
    if cyclic:
        violations.append("cycle through tokens " + ",".join(map(str, sorted(cyclic))))
    unreachable = [i for i in range(1, n + 1) if state[i] != 2 and i not in cyclic]
    if unreachable:
        violations.append("tokens unreachable from root: " + ",".join(map(str, unreachable)))
    return TreeVerdict(not violations, tuple(violations))


def is_tree(heads: Sequence[int]) -> bool:
    """Convenience check on a bare head array."""
    toks = tuple(Token(i, "_", head=int(h)) for i, h in enumerate(heads, start=1))
    return validate_tree(Sentence(toks)).ok


# ---------------------------------------------------------------------------
# reading / writing


def _decode(text: Union[str, bytes]) -> str:
    if isinstance(text, bytes):
        try:
            return text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConlluParseError(f"invalid UTF-8 at byte {exc.start}") from exc
    return text


def _parse_block(lines: list, validate: bool) -> Sentence:
    comments, tokens, extra = [], [], []
    sent_id = None
    for lineno, line in lines:
        if line.startswith("#"):
            comments.append(line)
            if _is_sent_id_comment(line) and sent_id is None:
                sent_id = line.split("=", 1)[1].strip()
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluParseError(f"expected 10 columns, found {len(cols)}", lineno)
        tid = cols[0]
        if "-" in tid or "." in tid:
            extra.append((len(tokens), line))
            continue
        try:
            idx = int(tid)
        except ValueError:
            raise ConlluParseError(f"non-integer token id {tid!r}", lineno) from None
        if idx != len(tokens) + 1:
            raise ConlluParseError(f"token id {idx} out of sequence", lineno)
        if cols[6] == "_":
            head = ABSENT
        else:
            try:
                head = int(cols[6])
            except ValueError:
                raise ConlluParseError(f"non-integer head {cols[6]!r}", lineno) from None
        try:
            feats = parse_feats(cols[5])
        except ValueError as exc:
            raise ConlluParseError(str(exc), lineno) from None
        tokens.append(Token(idx, cols[1], cols[2], cols[3], cols[4], feats,
                            head, cols[7], cols[8], cols[9]))
    sent = Sentence(tuple(tokens), sent_id, tuple(comments), tuple(extra))
    if validate and tokens and not sent.is_unlabeled:
        verdict = validate_tree(sent)
        if not verdict:
            raise TreeValidationError(sent_id, verdict.violations)
    return sent


def parse_conllu(text: Union[str, bytes], name: str = "", validate: bool = True) -> Treebank:
    """Parse CoNLL-U text (``str`` or UTF-8 ``bytes``) into a Treebank.

    Sentences whose heads are all ``_`` are read as unlabeled. Labeled
    sentences are checked with :func:`validate_tree` unless ``validate`` is
    false.
    """
    text = _decode(text)
    sentences = []
    block: list = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if line.strip() == "":
            if block:
                sentences.append(_parse_block(block, validate))
                block = []
            continue
        block.append((lineno, line))
    if block:
        sentences.append(_parse_block(block, validate))
    return Treebank(tuple(sentences), name)


def format_sentence(s: Sentence) -> str:
    lines = list(s.comments)
    if s.sent_id is not None and not any(_is_sent_id_comment(c) for c in s.comments):
        lines.insert(0, f"# sent_id = {s.sent_id}")
    extra = list(s.extra_lines)
    k = 0
    for pos, tok in enumerate(s.tokens):
        while k < len(extra) and extra[k][0] <= pos:
            lines.append(extra[k][1])
            k += 1
        lines.append(tok.to_line())
    lines.extend(line for _, line in extra[k:])
    return "\n".join(lines) + "\n"


def serialize(tb: Treebank) -> bytes:
    """Write a treebank as UTF-8 CoNLL-U.

    Refuses sentences that are neither valid trees nor fully unlabeled.
    """
    chunks = []
    for s in tb.sentences:
        if not s.is_unlabeled:
            verdict = validate_tree(s)
            if not verdict:
                raise TreeValidationError(s.sent_id, verdict.violations)
        elif any(t.head is not None for t in s.tokens):
            raise TreeValidationError(s.sent_id, ["partially absent heads"])
        chunks.append(format_sentence(s) + "\n")
    return "".join(chunks).encode("utf-8")


def read_conllu(path: Union[str, Path], validate: bool = True) -> Treebank:
    path = Path(path)
    return parse_conllu(path.read_bytes(), name=path.stem, validate=validate)


def write_conllu(tb: Treebank, path: Union[str, Path]) -> None:
    Path(path).write_bytes(serialize(tb))


# ---------------------------------------------------------------------------
# data protocol


def strip_annotation(s: Sentence) -> Sentence:
    """Drop heads and relations, keep morphology, and flag the sentence."""
    tokens = tuple(dataclasses.replace(t, head=ABSENT, deprel="_") for t in s.tokens)
    comments = s.comments
    if UNLABELED_COMMENT not in comments:
        comments = comments + (UNLABELED_COMMENT,)
    return dataclasses.replace(s, tokens=tokens, comments=comments)


class ProtocolSplit(NamedTuple):
    train: Treebank
    unlabeled: Treebank


def _split_indices(size: int, counts: Sequence[int], seed: int) -> list:
    required = sum(counts)
    if size < required:
        raise ValueError(
            f"protocol split needs {required} sentences "
            f"({' + '.join(map(str, counts))}), only {size} available"
        )
    order = np.random.default_rng(seed).permutation(size)
    parts, start = [], 0
    for c in counts:
        # keep original file order inside each part
        parts.append(sorted(order[start:start + c].tolist()))
        start += c
    return parts


def protocol_split(tb: Treebank, n_train: int = 500, n_unlabeled: int = 1000,
                   seed: int = 0) -> ProtocolSplit:
    """Seeded disjoint sample of a labeled training set and an unlabeled pool.

    The unlabeled sentences keep form/lemma/UPOS/feats but lose their heads
    (set to the absent sentinel) and relations.
    """
    train_idx, unl_idx = _split_indices(len(tb), [n_train, n_unlabeled], seed)
    train = Treebank(tuple(tb.sentences[i] for i in train_idx), f"{tb.name}-train")
    unlabeled = Treebank(tuple(strip_annotation(tb.sentences[i]) for i in unl_idx),
                         f"{tb.name}-unlabeled")
    return ProtocolSplit(train, unlabeled)


def protocol_split_with_dev(tb: Treebank, n_train: int, n_unlabeled: int, n_dev: int,
                            seed: int = 0) -> tuple:
    """Like :func:`protocol_split` but also carves a labeled dev sample."""
    train_idx, unl_idx, dev_idx = _split_indices(len(tb), [n_train, n_unlabeled, n_dev], seed)
    train = Treebank(tuple(tb.sentences[i] for i in train_idx), f"{tb.name}-train")
    unlabeled = Treebank(tuple(strip_annotation(tb.sentences[i]) for i in unl_idx),
                         f"{tb.name}-unlabeled")
    dev = Treebank(tuple(tb.sentences[i] for i in dev_idx), f"{tb.name}-dev")
    return train, unlabeled, dev
