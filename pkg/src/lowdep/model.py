"""The biaffine parser network and its auxiliary tagging encoders.

Tensors use a batch-first layout ``(B, T, ...)`` with ``T = n + 1``;
position 0 of every sentence is the ROOT symbol. Arc scores are indexed
``S[b, head, dependent]``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .conllu import Sentence
from .decode import assign_labels, cle_mst
from .vocab import PAD, ROOT, TASKS, UNK, Vocab, task_labels

MASK_VALUE = -1e9


@dataclass
class ModelConfig:
    word_dim: int = 100
    char_dim: int = 50
    hidden_dim: int = 200
    arc_dim: int = 100
    label_dim: int = 50
    n_layers: int = 2
    dropout: float = 0.33
    word_dropout: float = 0.0
    ext_dim: int = 0
    n_aux: int = 0
    mtl_task: Optional[str] = None

    def __post_init__(self):
        if self.char_dim % 2:
            raise ValueError("char_dim must be even (two directions of char_dim/2)")
        if self.n_layers < 1:
            raise ValueError("n_layers must be positive")
        if not 0 <= self.dropout < 1 or not 0 <= self.word_dropout < 1:
            raise ValueError("dropout rates must lie in [0, 1)")
        if self.mtl_task is not None and self.mtl_task not in TASKS:
            raise ValueError(f"mtl_task must be one of {TASKS}")

    @property
    def encoder_dim(self) -> int:
        return 2 * self.hidden_dim

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# batching


@dataclass
class Batch:
    sentences: list
    words: torch.Tensor          # (B, T)
    chars: torch.Tensor          # (B, T, C)
    char_lengths: torch.Tensor   # (B, T)
    lengths: torch.Tensor        # (B,) = n + 1
    heads: torch.Tensor          # (B, T), -1 where undefined
    rels: torch.Tensor           # (B, T), -1 where undefined
    tags: Dict[str, torch.Tensor] = field(default_factory=dict)
    ext: Optional[torch.Tensor] = None

    @property
    def token_mask(self) -> torch.Tensor:
        """True at real tokens (ROOT and padding excluded)."""
        t = torch.arange(self.words.shape[1])
        return (t[None, :] >= 1) & (t[None, :] < self.lengths[:, None])


def make_batch(sentences: Sequence[Sentence], vocab: Vocab, tasks: Sequence[str] = (),
               external: Optional[Mapping[str, np.ndarray]] = None,
               ext_dim: int = 0) -> Batch:
    if not sentences:
        raise ValueError("cannot batch zero sentences")
    for s in sentences:
        if len(s) == 0:
            raise ValueError(f"empty sentence {s.sent_id!r}")
    B = len(sentences)
    T = max(len(s) for s in sentences) + 1
    C = max(max(len(t.form) for t in s.tokens) for s in sentences)
    C = max(C, 1)
    words = torch.full((B, T), vocab.words.id(PAD), dtype=torch.long)
    chars = torch.full((B, T, C), vocab.chars.id(PAD), dtype=torch.long)
    char_lengths = torch.ones((B, T), dtype=torch.long)
    heads = torch.full((B, T), -1, dtype=torch.long)
    rels = torch.full((B, T), -1, dtype=torch.long)
    tags = {task: torch.full((B, T), -1, dtype=torch.long) for task in tasks}
    ext = torch.zeros((B, T, ext_dim), dtype=torch.float64) if ext_dim else None
    for b, s in enumerate(sentences):
        n = len(s)
        words[b, 0] = vocab.words.id(ROOT)
        chars[b, 0, 0] = vocab.chars.id(ROOT)
        words[b, 1:n + 1] = torch.tensor(vocab.words.ids(s.forms))
        for i, tok in enumerate(s.tokens, start=1):
            ids = vocab.chars.ids(tok.form) or [vocab.chars.id(UNK)]
            chars[b, i, :len(ids)] = torch.tensor(ids)
            char_lengths[b, i] = len(ids)
        if not s.is_unlabeled:
            heads[b, 1:n + 1] = torch.tensor(s.heads)
            if len(vocab.deprel):
                rels[b, 1:n + 1] = torch.tensor(
                    [vocab.deprel.id(r) if r in vocab.deprel else -1 for r in s.deprels])
        for task in tasks:
            if task == "deprel" and s.is_unlabeled:
                continue
            index = vocab.labels(task)
            tags[task][b, 1:n + 1] = torch.tensor(
                [index.id(x) if (x in index or index.unk) else -1
                 for x in task_labels(s, task)])
        if ext_dim:
            if external is None or s.sent_id not in external:
                raise KeyError(f"no external embeddings for sentence {s.sent_id!r}")
            vec = np.asarray(external[s.sent_id], dtype=np.float64)
            if vec.shape != (n, ext_dim):
                raise ValueError(f"external embeddings for {s.sent_id!r} have shape "
                                 f"{vec.shape}, expected {(n, ext_dim)}")
            ext[b, 1:n + 1] = torch.from_numpy(vec)
    lengths = torch.tensor([len(s) + 1 for s in sentences], dtype=torch.long)
    return Batch(list(sentences), words, chars, char_lengths, lengths, heads, rels, tags, ext)


# ---------------------------------------------------------------------------
# modules


class CharEncoder(nn.Module):
    """Bidirectional LSTM over characters; final states concatenated."""

    def __init__(self, n_chars: int, dim: int):
        super().__init__()
        self.embed = nn.Embedding(n_chars, dim, padding_idx=0)
        self.lstm = nn.LSTM(dim, dim // 2, batch_first=True, bidirectional=True)

    def forward(self, chars, lengths):
        B, T, C = chars.shape
        flat = self.embed(chars.reshape(B * T, C))
        packed = pack_padded_sequence(flat, lengths.reshape(-1), batch_first=True,
                                      enforce_sorted=False)
        _, (h, _) = self.lstm(packed)
        return torch.cat([h[0], h[1]], dim=-1).reshape(B, T, -1)


class Encoder(nn.Module):
    """Word + character embeddings followed by stacked BiLSTM layers."""

    def __init__(self, n_words: int, n_chars: int, cfg: ModelConfig):
        super().__init__()
        self.unk_id = 1
        self.word_dropout = cfg.word_dropout
        self.word_embed = nn.Embedding(n_words, cfg.word_dim, padding_idx=0)
        self.char_encoder = CharEncoder(n_chars, cfg.char_dim)
        in_dim = cfg.word_dim + cfg.char_dim + cfg.ext_dim
        self.layers = nn.ModuleList()
        for _ in range(cfg.n_layers):
            self.layers.append(nn.LSTM(in_dim, cfg.hidden_dim, batch_first=True,
                                       bidirectional=True))
            in_dim = 2 * cfg.hidden_dim
        self.dropout = nn.Dropout(cfg.dropout)
        self.output_dim = 2 * cfg.hidden_dim

    def forward(self, batch: Batch) -> torch.Tensor:
        words = batch.words
        if self.training and self.word_dropout > 0:
            drop = torch.rand(words.shape) < self.word_dropout
            drop &= batch.token_mask
            words = words.masked_fill(drop, self.unk_id)
        x = [self.word_embed(words), self.char_encoder(batch.chars, batch.char_lengths)]
        if batch.ext is not None:
            x.append(batch.ext.to(x[0].dtype))
        x = self.dropout(torch.cat(x, dim=-1))
        T = words.shape[1]
        for layer in self.layers:
            packed = pack_padded_sequence(x, batch.lengths, batch_first=True,
                                          enforce_sorted=False)
            out, _ = layer(packed)
            x, _ = pad_packed_sequence(out, batch_first=True, total_length=T)
            x = self.dropout(x)
        return x

    def layer_groups(self) -> List[List[nn.Parameter]]:
        """Parameter groups ordered top layer first; embeddings join the bottom group."""
        groups = [list(layer.parameters()) for layer in reversed(self.layers)]
        groups[-1] = groups[-1] + list(self.word_embed.parameters()) + \
            list(self.char_encoder.parameters())
        return groups


def gate_combine(h_primary: torch.Tensor, h_aux: Sequence[torch.Tensor],
                 gates: Sequence[nn.Linear]) -> torch.Tensor:
    """``h + sum_k sigmoid(W_k [h; h_k] + b_k) * h_k``, token by token."""
    if len(h_aux) != len(gates):
        raise ValueError(f"{len(h_aux)} auxiliary encodings but {len(gates)} gates")
    fused = h_primary
    for h_k, gate in zip(h_aux, gates):
        if h_k.shape != h_primary.shape:
            raise ValueError(f"auxiliary encoding shape {tuple(h_k.shape)} differs from "
                             f"primary {tuple(h_primary.shape)}")
        g = torch.sigmoid(gate(torch.cat([h_primary, h_k], dim=-1)))
        fused = fused + g * h_k
    return fused


class Biaffine(nn.Module):
    """Deep biaffine arc scorer and per-relation label scorer."""

    def __init__(self, input_dim: int, arc_dim: int, label_dim: int, n_labels: int,
                 dropout: float = 0.0):
        super().__init__()
        self.arc_head = nn.Linear(input_dim, arc_dim)
        self.arc_dep = nn.Linear(input_dim, arc_dim)
        self.U_arc = nn.Parameter(torch.empty(arc_dim, arc_dim))
        self.u_arc = nn.Parameter(torch.zeros(arc_dim))
        self.label_head = nn.Linear(input_dim, label_dim)
        self.label_dep = nn.Linear(input_dim, label_dim)
        self.U_label = nn.Parameter(torch.empty(max(n_labels, 1), label_dim, label_dim))
        self.W_label = nn.Linear(2 * label_dim, max(n_labels, 1))
        self.dropout = nn.Dropout(dropout)
        nn.init.xavier_uniform_(self.U_arc)
        nn.init.xavier_uniform_(self.U_label)

    def _mlp(self, layer, H):
        return self.dropout(F.elu(layer(H)))


def arc_scores(H: torch.Tensor, p: Biaffine, lengths: Optional[torch.Tensor] = None):
    """Arc score matrices ``S[b, h, d]``, masked at column 0, the diagonal and padding."""
    r_h = p._mlp(p.arc_head, H)
    r_d = p._mlp(p.arc_dep, H)
    S = torch.einsum("bhi,ij,bdj->bhd", r_h, p.U_arc, r_d) + (r_h @ p.u_arc)[:, :, None]
    T = H.shape[1]
    idx = torch.arange(T)
    mask = (idx[None, :] == 0) | (idx[:, None] == idx[None, :])  # (h, d)
    mask = mask[None].expand(H.shape[0], T, T)
    if lengths is not None:
        pad = idx[None, :] >= lengths[:, None]
        mask = mask | pad[:, :, None] | pad[:, None, :]
    return S.masked_fill(mask, MASK_VALUE)


def label_scores(H: torch.Tensor, heads: torch.Tensor, p: Biaffine) -> torch.Tensor:
    """Relation logits ``L[b, d, r]`` for each dependent under the given heads."""
    T = H.shape[1]
    if heads.dim() == 1:
        heads = heads[None]
    safe = heads.clamp(min=0)
    if (safe >= T).any():
        raise ValueError("head index out of range")
    l_h = p._mlp(p.label_head, H)
    l_d = p._mlp(p.label_dep, H)
    l_h = torch.gather(l_h, 1, safe[:, :, None].expand(-1, -1, l_h.shape[-1]))
    bilinear = torch.einsum("bdi,rij,bdj->bdr", l_h, p.U_label, l_d)
    return bilinear + p.W_label(torch.cat([l_h, l_d], dim=-1))


class TaggerHead(nn.Module):
    """Per-token linear classifier; softmax is applied by the loss / at prediction."""

    def __init__(self, input_dim: int, n_labels: int):
        super().__init__()
        self.proj = nn.Linear(input_dim, n_labels)

    def forward(self, H):
        return self.proj(H)


def tagger_forward(H: torch.Tensor, head: TaggerHead) -> torch.Tensor:
    return head(H)


def _seeded_init(seed: int, factory):
    # build a module without disturbing the global RNG stream
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return factory()


class ParserModel(nn.Module):
    """Primary encoder, optional gated auxiliary encoders, biaffine scorer, MTL head."""

    def __init__(self, vocab: Vocab, config: ModelConfig, head_seed: int = 0):
        super().__init__()
        self.vocab = vocab
        self.config = config
        self.primary = Encoder(len(vocab.words), len(vocab.chars), config)
        self.auxiliaries = nn.ModuleList(
            Encoder(len(vocab.words), len(vocab.chars), config) for _ in range(config.n_aux))
        d = config.encoder_dim
        self.gates = nn.ModuleList(nn.Linear(2 * d, d) for _ in range(config.n_aux))
        self.biaffine = Biaffine(d, config.arc_dim, config.label_dim, len(vocab.deprel),
                                 config.dropout)
        self.mtl_head = None
        if config.mtl_task is not None:
            self.mtl_head = _seeded_init(
                head_seed, lambda: TaggerHead(d, len(vocab.labels(config.mtl_task))))

    @property
    def dtype(self):
        return self.biaffine.U_arc.dtype

    def attach_auxiliaries(self, encoders: Sequence[Encoder], seed: int = 0) -> None:
        """Plug pretrained encoders in behind freshly initialised gates."""
        if self.config.n_aux:
            raise ValueError("auxiliary encoders already attached")
        d = self.config.encoder_dim
        for enc in encoders:
            if enc.output_dim != d:
                raise ValueError(f"auxiliary encoder width {enc.output_dim} != {d}")
        self.auxiliaries = nn.ModuleList(encoders)
        self.gates = _seeded_init(seed, lambda: nn.ModuleList(
            nn.Linear(2 * d, d) for _ in encoders)).to(self.dtype)
        self.config = dataclasses.replace(self.config, n_aux=len(encoders))

    def set_mtl_task(self, task: Optional[str], seed: int = 0) -> None:
        self.config = dataclasses.replace(self.config, mtl_task=task)
        if task is None:
            self.mtl_head = None
            return
        d = self.config.encoder_dim
        n = len(self.vocab.labels(task))
        self.mtl_head = _seeded_init(seed, lambda: TaggerHead(d, n)).to(self.dtype)

    def batch(self, sentences, external=None) -> Batch:
        tasks = (self.config.mtl_task,) if self.config.mtl_task else ()
        return make_batch(sentences, self.vocab, tasks, external, self.config.ext_dim)

    def encode(self, batch: Batch) -> torch.Tensor:
        h = self.primary(batch)
        if not len(self.auxiliaries):
            return h
        return gate_combine(h, [enc(batch) for enc in self.auxiliaries], self.gates)

    def forward(self, batch: Batch):
        H = self.encode(batch)
        return arc_scores(H, self.biaffine, batch.lengths), H

    @torch.no_grad()
    def parse(self, sentences: Sequence[Sentence], external=None, batch_size: int = 64,
              single_root: bool = True) -> List[Sentence]:
        """Decode trees (MST) and labels (argmax) for the given sentences."""
        was_training = self.training
        self.eval()
        out = []
        try:
            for start in range(0, len(sentences), batch_size):
                chunk = list(sentences[start:start + batch_size])
                batch = make_batch(chunk, self.vocab, (), external, self.config.ext_dim)
                S, H = self.forward(batch)
                S = S.double().numpy()
                heads = torch.zeros(batch.words.shape, dtype=torch.long)
                decoded = []
                for b, s in enumerate(chunk):
                    n = len(s)
                    h = cle_mst(S[b, :n + 1, :n + 1], single_root=single_root)
                    heads[b, 1:n + 1] = torch.from_numpy(h)
                    decoded.append(h)
                L = label_scores(H, heads, self.biaffine).double().numpy()
                for b, s in enumerate(chunk):
                    n = len(s)
                    rel_ids = assign_labels(L[b, 1:n + 1])
                    if len(self.vocab.deprel):
                        rels = [self.vocab.deprel.symbols[i] for i in rel_ids]
                    else:
                        rels = ["dep"] * n
                    out.append(s.with_heads(decoded[b].tolist(), rels))
        finally:
            self.train(was_training)
        return out


class TaggerModel(nn.Module):
    """An encoder trained alone on one sequence labelling task."""

    def __init__(self, vocab: Vocab, config: ModelConfig, task: str):
        super().__init__()
        self.vocab = vocab
        self.config = config
        self.task = task
        self.encoder = Encoder(len(vocab.words), len(vocab.chars), config)
        self.head = TaggerHead(config.encoder_dim, len(vocab.labels(task)))

    def forward(self, batch: Batch):
        return tagger_forward(self.encoder(batch), self.head)

    @torch.no_grad()
    def accuracy(self, sentences, labels=None, batch_size: int = 64) -> float:
        """Token accuracy against ``labels`` (per-sentence label id lists) or gold tags."""
        was_training = self.training
        self.eval()
        correct = total = 0
        try:
            for start in range(0, len(sentences), batch_size):
                chunk = list(sentences[start:start + batch_size])
                batch = make_batch(chunk, self.vocab, (self.task,), None, self.config.ext_dim)
                gold = batch.tags[self.task]
                if labels is not None:
                    gold = _pad_labels(labels[start:start + batch_size], gold.shape)
                pred = self.forward(batch).argmax(-1)
                m = batch.token_mask & (gold >= 0)
                correct += int((pred[m] == gold[m]).sum())
                total += int(m.sum())
        finally:
            self.train(was_training)
        return correct / total if total else 0.0


def _pad_labels(label_lists, shape) -> torch.Tensor:
    out = torch.full(shape, -1, dtype=torch.long)
    for b, labs in enumerate(label_lists):
        out[b, 1:len(labs) + 1] = torch.tensor(labs, dtype=torch.long)
    return out


# ---------------------------------------------------------------------------
# losses


def head_loss(S: torch.Tensor, batch: Batch) -> torch.Tensor:
    logp = torch.log_softmax(S, dim=1)  # normalise over heads, per dependent column
    mask = batch.token_mask
    gold = batch.heads.clamp(min=0)
    picked = torch.gather(logp, 1, gold[:, None, :]).squeeze(1)
    return -picked[mask].mean()


def relation_loss(H: torch.Tensor, batch: Batch, p: Biaffine) -> torch.Tensor:
    L = label_scores(H, batch.heads.clamp(min=0), p)
    mask = batch.token_mask & (batch.rels >= 0)
    if not mask.any():
        return L.sum() * 0.0
    return F.cross_entropy(L[mask], batch.rels[mask])


def tagging_loss(logits: torch.Tensor, batch: Batch, task: str,
                 labels: Optional[torch.Tensor] = None) -> torch.Tensor:
    gold = batch.tags[task] if labels is None else labels
    mask = batch.token_mask & (gold >= 0)
    if not mask.any():
        return logits.sum() * 0.0
    return F.cross_entropy(logits[mask], gold[mask])


def _as_batch(model: ParserModel, sentences, external=None) -> Batch:
    if isinstance(sentences, Batch):
        return sentences
    if isinstance(sentences, Sentence):
        sentences = [sentences]
    for s in sentences:
        if s.is_unlabeled:
            raise ValueError(f"sentence {s.sent_id!r} has no gold tree; use a tagging loss")
    return model.batch(sentences, external)


def parser_loss(model: ParserModel, sentences, external=None) -> torch.Tensor:
    """Mean head cross-entropy plus mean relation cross-entropy at gold arcs."""
    batch = _as_batch(model, sentences, external)
    S, H = model(batch)
    return head_loss(S, batch) + relation_loss(H, batch, model.biaffine)


def mtl_loss(model: ParserModel, sentences, weight: float = 1.0, external=None) -> torch.Tensor:
    """Parser loss plus ``weight`` times the MTL head's tagging cross-entropy."""
    if model.mtl_head is None:
        raise ValueError("model has no MTL head")
    batch = _as_batch(model, sentences, external)
    S, H = model(batch)
    loss = head_loss(S, batch) + relation_loss(H, batch, model.biaffine)
    tag = tagging_loss(model.mtl_head(H), batch, model.config.mtl_task)
    return loss + weight * tag


def encode(model: ParserModel, sentences, train_mode: bool = False, external=None):
    """Fused per-token encodings, shape (B, n+1, encoder_dim)."""
    if isinstance(sentences, Sentence):
        sentences = [sentences]
    was_training = model.training
    model.train(train_mode)
    try:
        with torch.set_grad_enabled(train_mode):
            return model.encode(model.batch(sentences, external))
    finally:
        model.train(was_training)
