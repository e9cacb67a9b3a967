"""Parallel prediction heads over final decoder embeddings: localization
(anchor offsets + foreground confidence), an event counter, and a recurrent
captioning head whose soft attention is biased toward the event anchor span.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import torch
from torch import nn

from .encoder import MultiScaleFeatures
from .errors import VocabularyError
from .geometry import TemporalInterval
from .ops import mlp

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"


class Vocabulary:
    """Token <-> id map with fixed special tokens, persisted as JSON."""

    def __init__(self, tokens: list[str]):
        for special in (PAD, BOS, EOS, UNK):
            if special not in tokens:
                raise ValueError(f"vocabulary missing special token {special}")
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.pad = self.index[PAD]
        self.bos = self.index[BOS]
        self.eos = self.index[EOS]
        self.unk = self.index[UNK]

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, words: list[str]) -> list[int]:
        return [self.index.get(w, self.unk) for w in words]

    def decode(self, ids: list[int]) -> list[str]:
        out = []
        for i in ids:
            if not 0 <= i < len(self.tokens):
                raise VocabularyError(f"token id {i} outside vocabulary of size {len(self.tokens)}")
            out.append(self.tokens[i])
        return out

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump({"tokens": self.tokens}, fh)

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        with open(path) as fh:
            return cls(json.load(fh)["tokens"])


@dataclass
class EventPrediction:
    interval: TemporalInterval
    confidence: float
    caption: list[int]
    query_index: int


class LocalizationHead(nn.Module):
    """Predicts (center, duration) offsets relative to the anchor plus a
    foreground confidence per query."""

    # output gain on the zero-initialized offset projection: widens the output
    # range reachable within a small, fixed learning-rate budget
    offset_gain: float = 8.0

    def __init__(self, dim: int):
        super().__init__()
        self.offset_mlp = mlp([dim, dim, 2])
        nn.init.zeros_(self.offset_mlp[-1].weight)
        nn.init.zeros_(self.offset_mlp[-1].bias)
        self.confidence = nn.Linear(dim, 1)

    def forward(
        self, embeddings: torch.Tensor, anchor_logits: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        intervals = torch.sigmoid(anchor_logits + self.offset_gain * self.offset_mlp(embeddings))
        conf = torch.sigmoid(self.confidence(embeddings)).squeeze(-1)
        return intervals, conf


class EventCounter(nn.Module):
    """Max-pool over queries, then a linear map to count logits {0..C_max}."""

    def __init__(self, dim: int, c_max: int):
        super().__init__()
        if c_max < 1:
            raise ValueError("C_max must be >= 1")
        self.c_max = c_max
        self.fc = nn.Linear(dim, c_max + 1)

    def forward(self, embeddings: torch.Tensor) -> torch.Tensor:
        pooled = embeddings.max(dim=0).values
        return self.fc(pooled)

    @staticmethod
    def n_select(count_logits: torch.Tensor) -> int:
        """Argmax count with ties broken toward the larger count."""
        probs = count_logits.detach()
        flipped = torch.flip(probs, dims=[0])
        return probs.shape[0] - 1 - int(torch.argmax(flipped))


class CaptionHead(nn.Module):
    """Recurrent captioner with anchor-focused soft attention.

    A gated recurrent cell (width D/2) is initialized from the query
    embedding. Each step attends over flattened video tokens with logits
    biased by a window decay centered on the event anchor: weight is flat
    inside the span and falls off with the normalized distance beyond half
    the duration.
    """

    decay_strength: float = 2.0
    # zero-initialized output layer with a gain (see LocalizationHead.offset_gain)
    logit_gain: float = 16.0

    def __init__(self, dim: int, vocab_size: int, max_len: int = 12, hidden: int | None = None):
        super().__init__()
        self.dim = dim
        self.vocab_size = vocab_size
        self.max_len = max_len
        self.hidden = hidden or dim // 2
        self.embed = nn.Embedding(vocab_size, self.hidden)
        self.init_state = nn.Linear(dim, self.hidden)
        self.cell = nn.GRUCell(self.hidden + dim, self.hidden)
        self.attn_query = nn.Linear(self.hidden, dim)
        self.out = nn.Linear(self.hidden + dim, vocab_size)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    @classmethod
    def window_log_decay(cls, positions: torch.Tensor, anchor: torch.Tensor) -> torch.Tensor:
        """Log of the attention window factor for token positions vs an anchor.

        Zero inside [c - d/2, c + d/2]; outside, -decay_strength * (excess /
        (d/2))^2 where excess is the distance beyond the span boundary.
        """
        c, d = anchor[0], anchor[1]
        half = (d / 2.0).clamp(min=1e-6)
        excess = ((positions - c).abs() - half).clamp(min=0.0)
        return -cls.decay_strength * (excess / half) ** 2

    def _attend(
        self, state: torch.Tensor, tokens: torch.Tensor, window_bias: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        logits = tokens @ self.attn_query(state) / self.dim**0.5 + window_bias
        weights = torch.softmax(logits, dim=0)
        return weights @ tokens, weights

    def _prepare(self, embedding: torch.Tensor, anchor: torch.Tensor, video: MultiScaleFeatures):
        tokens = video.flattened()
        positions = video.token_positions().to(tokens.dtype)
        bias = self.window_log_decay(positions, anchor)
        state = torch.tanh(self.init_state(embedding))
        return tokens, bias, state

    def teacher_forced_logits(
        self,
        embedding: torch.Tensor,
        anchor: torch.Tensor,
        video: MultiScaleFeatures,
        target_ids: list[int],
        bos: int,
    ) -> torch.Tensor:
        """Next-token logits for each position of `target_ids` (teacher forcing)."""
        for t in target_ids:
            if not 0 <= t < self.vocab_size:
                raise VocabularyError(f"token id {t} outside vocabulary of size {self.vocab_size}")
        tokens, bias, state = self._prepare(embedding, anchor, video)
        inputs = [bos] + list(target_ids[:-1])
        logits = []
        for prev in inputs:
            z, _ = self._attend(state, tokens, bias)
            emb = self.embed(torch.tensor(prev, device=embedding.device))
            state = self.cell(torch.cat([emb, z]).unsqueeze(0), state.unsqueeze(0)).squeeze(0)
            logits.append(self.logit_gain * self.out(torch.cat([state, z])))
        return torch.stack(logits)

    @torch.no_grad()
    def greedy_decode(
        self,
        embedding: torch.Tensor,
        anchor: torch.Tensor,
        video: MultiScaleFeatures,
        bos: int,
        eos: int,
    ) -> list[int]:
        tokens, bias, state = self._prepare(embedding, anchor, video)
        prev = bos
        out: list[int] = []
        for _ in range(self.max_len):
            z, _ = self._attend(state, tokens, bias)
            emb = self.embed(torch.tensor(prev, device=embedding.device))
            state = self.cell(torch.cat([emb, z]).unsqueeze(0), state.unsqueeze(0)).squeeze(0)
            nxt = int(torch.argmax(self.logit_gain * self.out(torch.cat([state, z]))))
            if nxt == eos:
                break
            out.append(nxt)
            prev = nxt
        return out
