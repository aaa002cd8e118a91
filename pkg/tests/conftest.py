import numpy as np
import pytest
import torch

from lowdep.conllu import Sentence, Token, Treebank


def make_sentence(heads, deprels=None, forms=None, upos=None, feats=None, sent_id="s"):
    n = len(heads)
    deprels = deprels or ["root" if h == 0 else "dep" for h in heads]
    forms = forms or [f"w{i}" for i in range(1, n + 1)]
    upos = upos or ["NOUN"] * n
    feats = feats or [{} for _ in range(n)]
    toks = [Token(i, forms[i - 1], forms[i - 1].lower(), upos[i - 1], "_", feats[i - 1],
                  heads[i - 1], deprels[i - 1]) for i in range(1, n + 1)]
    return Sentence.build(toks, sent_id)


def random_tree(rng, n):
    """Uniformly shuffled single-root tree: attach each node to an earlier one in a random order."""
    order = rng.permutation(n) + 1
    heads = [0] * n
    for pos, node in enumerate(order):
        heads[node - 1] = 0 if pos == 0 else int(order[rng.integers(pos)])
    return heads


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(1)
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def synthetic_small():
    from lowdep.synthetic import generate_treebank
    return generate_treebank(120, seed=3)


def treebank(*sents):
    return Treebank(tuple(sents))
