"""Sentence-level macro UAS/LAS and paired significance testing."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional, Sequence

import numpy as np
from scipy import stats

from .conllu import Treebank


class AlignmentError(ValueError):
    pass


@dataclass
class EvalReport:
    """Per-sentence and macro-averaged attachment scores (percentages)."""

    sentence_uas: List[float] = field(default_factory=list)
    sentence_las: List[float] = field(default_factory=list)
    uas: float = 0.0
    las: float = 0.0
    n_sentences: int = 0
    n_tokens: int = 0
    include_punct: bool = True
    sentence_ids: List[Optional[str]] = field(default_factory=list)

    def metric(self, name: str) -> List[float]:
        name = name.upper()
        if name == "UAS":
            return self.sentence_uas
        if name == "LAS":
            return self.sentence_las
        raise ValueError(f"unknown metric {name!r}; expected UAS or LAS")

    def summary(self) -> str:
        return f"UAS {self.uas:.2f} LAS {self.las:.2f}"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        # extra keys (such as an attached p-value) are ignored
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls.from_dict(json.loads(text))


def uas_las(gold: Treebank, pred: Treebank, include_punct: bool = True) -> EvalReport:
    """Score ``pred`` against ``gold`` sentence by sentence.

    With ``include_punct=False`` tokens whose gold UPOS is PUNCT are ignored;
    sentences left without countable tokens drop out of the average.
    """
    gold_s, pred_s = list(gold), list(pred)
    if len(gold_s) != len(pred_s):
        raise AlignmentError(f"gold has {len(gold_s)} sentences, prediction {len(pred_s)}")
    uas, las, ids = [], [], []
    n_tokens = 0
    for i, (g, p) in enumerate(zip(gold_s, pred_s)):
        if len(g) != len(p):
            raise AlignmentError(
                f"sentence {i} ({g.sent_id!r}): gold has {len(g)} tokens, prediction {len(p)}")
        total = heads_ok = both_ok = 0
        for gt, pt in zip(g.tokens, p.tokens):
            if not include_punct and gt.upos == "PUNCT":
                continue
            total += 1
            if gt.head == pt.head:
                heads_ok += 1
                if gt.deprel == pt.deprel:
                    both_ok += 1
        if total == 0:
            continue
        n_tokens += total
        uas.append(100.0 * heads_ok / total)
        las.append(100.0 * both_ok / total)
        ids.append(g.sent_id)
    return EvalReport(
        sentence_uas=uas,
        sentence_las=las,
        uas=float(np.mean(uas)) if uas else 0.0,
        las=float(np.mean(las)) if las else 0.0,
        n_sentences=len(uas),
        n_tokens=n_tokens,
        include_punct=include_punct,
        sentence_ids=ids,
    )


def paired_ttest(a: EvalReport, b: EvalReport, metric: str = "UAS") -> float:
    """Two-sided paired t-test p-value over per-sentence score differences.

    Returns 1.0 when every difference is identical (zero variance).
    """
    x = np.asarray(a.metric(metric), dtype=np.float64)
    y = np.asarray(b.metric(metric), dtype=np.float64)
    if len(x) != len(y):
        raise AlignmentError(f"reports cover {len(x)} and {len(y)} sentences")
    if len(x) < 2:
        raise ValueError("paired t-test needs at least two sentences")
    d = x - y
    if np.all(d == d[0]):
        return 1.0
    return float(stats.ttest_rel(x, y).pvalue)


def format_table(rows: Sequence[tuple], title: str = "") -> str:
    """Aligned text table of ``(name, uas, las)`` rows."""
    width = max([len("System")] + [len(str(r[0])) for r in rows])
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'System':<{width}}  {'UAS':>6}  {'LAS':>6}")
    lines.append("-" * (width + 16))
    for name, u, l in rows:
        us = "-" if u is None else f"{u:6.2f}"
        ls = "-" if l is None else f"{l:6.2f}"
        lines.append(f"{name:<{width}}  {us:>6}  {ls:>6}")
    return "\n".join(lines) + "\n"
