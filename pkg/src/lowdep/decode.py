"""Decoding arc score matrices into dependency trees.

Score matrices follow the ``scores[head, dependent]`` convention with row and
column 0 standing for the artificial ROOT. Column 0 and the diagonal are
ignored whatever they contain.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .conllu import is_tree

NEG_INF = -np.inf
#: above this length the root constraint is enforced inside a single contraction run
ROOT_ITERATION_LIMIT = 64


def _prepare(scores) -> np.ndarray:
    m = np.array(scores, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
        raise ValueError(f"expected an (n+1)x(n+1) score matrix with n >= 1, got {m.shape}")
    m[:, 0] = NEG_INF
    np.fill_diagonal(m, NEG_INF)
    if np.isnan(m).any():
        raise ValueError("score matrix contains NaN")
    # surrogate -inf values coming from a network mask
    m[m <= -1e8] = NEG_INF
    return m


def _find_cycle(heads: np.ndarray):
    """Return the nodes of one cycle in a head array (heads[0] unused), or None."""
    n1 = len(heads)
    state = np.zeros(n1, dtype=np.int8)
    state[0] = 2
    for start in range(1, n1):
        path = []
        node = start
        while state[node] == 0:
            state[node] = 1
            path.append(node)
            node = heads[node]
        if state[node] == 1:
            return path[path.index(node):]
        for p in path:
            state[p] = 2
    return None


def _chu_liu_edmonds(m: np.ndarray) -> np.ndarray:
    """Maximum arborescence rooted at 0; returns heads with heads[0] = -1."""
    n1 = m.shape[0]
    heads = np.argmax(m, axis=0)
    heads[0] = -1
    cycle = _find_cycle(heads)
    if cycle is None:
        return heads
    in_cycle = np.zeros(n1, dtype=bool)
    in_cycle[cycle] = True
    cyc = np.array(sorted(cycle))
    rest = np.flatnonzero(~in_cycle)  # includes 0 at position 0
    c = len(rest)  # index of the contracted node

    sub = np.full((c + 1, c + 1), NEG_INF)
    sub[:c, :c] = m[np.ix_(rest, rest)]

    # arcs entering the cycle: gain relative to the cycle arc they replace
    cycle_in = m[heads[cyc], cyc]
    enter_gain = m[np.ix_(rest, cyc)] - cycle_in[None, :]
    enter_best = np.argmax(enter_gain, axis=1)
    sub[:c, c] = enter_gain[np.arange(c), enter_best]

    # arcs leaving the cycle
    leave = m[np.ix_(cyc, rest)]
    leave_best = np.argmax(leave, axis=0)
    sub[c, :c] = leave[leave_best, np.arange(c)]
    sub[:, 0] = NEG_INF
    np.fill_diagonal(sub, NEG_INF)

    sub_heads = _chu_liu_edmonds(sub)

    out = heads.copy()
    for j in range(1, c):
        h = sub_heads[j]
        out[rest[j]] = cyc[leave_best[j]] if h == c else rest[h]
    u = sub_heads[c]
    out[cyc[enter_best[u]]] = rest[u]
    return out


def tree_score(scores, heads) -> float:
    """Total score of a head array under ``scores[head, dep]``."""
    m = np.asarray(scores, dtype=np.float64)
    heads = np.asarray(heads)
    return float(np.sum(m[heads, np.arange(1, len(heads) + 1)]))


def cle_mst(scores, single_root: bool = True) -> np.ndarray:
    """Maximum spanning arborescence of an arc score matrix.

    Parameters
    ----------
    scores : array of shape (n+1, n+1)
        ``scores[h, d]`` is the score of attaching dependent ``d`` to head
        ``h``. Values at or below -1e8 count as masked.
    single_root : bool
        Restrict the tree to exactly one dependent of ROOT.

    Returns
    -------
    numpy int array of length n with ``heads[d-1]`` the head of token ``d``.
    """
    m = _prepare(scores)
    n = m.shape[0] - 1
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    heads = _chu_liu_edmonds(m)[1:]
    if not single_root or np.sum(heads == 0) == 1:
        return heads.astype(np.int64)
    if n <= ROOT_ITERATION_LIMIT:
        return _single_root_by_iteration(m)
    return _single_root_by_penalty(m)


def _single_root_by_iteration(m: np.ndarray) -> np.ndarray:
    n = m.shape[0] - 1
    best, best_total = None, NEG_INF
    for r in range(1, n + 1):
        if not np.isfinite(m[0, r]):
            continue
        restricted = m.copy()
        restricted[0, :] = NEG_INF
        restricted[0, r] = m[0, r]
        heads = _chu_liu_edmonds(restricted)[1:]
        total = tree_score(m, heads)
        if total > best_total:
            best, best_total = heads, total
    if best is None:
        raise ValueError("no arc leaves ROOT")
    return best.astype(np.int64)


def _single_root_by_penalty(m: np.ndarray) -> np.ndarray:
    # every extra ROOT dependent costs more than any achievable gain
    finite = m[np.isfinite(m)]
    spread = float(finite.max() - finite.min()) if finite.size else 0.0
    n = m.shape[0] - 1
    penalised = m.copy()
    penalised[0, 1:] -= (n + 1) * spread + 1.0
    return _chu_liu_edmonds(penalised)[1:].astype(np.int64)


class GreedyDecode(NamedTuple):
    heads: np.ndarray
    is_tree: bool


def greedy_heads(scores) -> GreedyDecode:
    """Per-dependent argmax head; may contain cycles, which ``is_tree`` flags."""
    m = _prepare(scores)
    heads = np.argmax(m[:, 1:], axis=0).astype(np.int64)
    return GreedyDecode(heads, is_tree(heads.tolist()))


def assign_labels(logits) -> np.ndarray:
    """Argmax relation per dependent; ties go to the lowest label id."""
    logits = np.asarray(logits)
    if logits.ndim != 2:
        raise ValueError("expected (n, n_labels) logits")
    return np.argmax(logits, axis=1)
