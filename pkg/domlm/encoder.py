"""
Structure-aware transformer encoder.

The input embedding of token i is the sum of its word embedding and one
trainable lookup per tree position feature:

    h_i = w(token_i) + sum_k phi_k(P^k_i),   k = 0..5

followed by post-norm transformer blocks (multi-head self-attention scaled by
sqrt(d / A), GELU feed-forward). The masked-language-model head projects
``h_w = W_l h + b_l`` and scores it against the word embedding table, so
input and output embeddings are tied.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from domlm.config import EncoderConfig
from domlm.errors import IndexOutOfTable, NoSelectedPositions, NonFiniteActivation
from domlm.linearizer import NUM_FEATURES, PositionedSequence
from domlm.masker import IGNORE_INDEX, MaskedSequence
from domlm.tokenizer import PAD

logger = logging.getLogger(__name__)

Sequenceish = Union[PositionedSequence, MaskedSequence]


@dataclass
class Batch:
    tokens: torch.Tensor      # (B, T) long
    pos: torch.Tensor         # (B, T, 6) long
    pad_mask: torch.Tensor    # (B, T) bool, True on padding
    labels: Optional[torch.Tensor] = None  # (B, T) long, IGNORE_INDEX where unselected


def collate(items: Sequence[Sequenceish]) -> Batch:
    """Right-pad sequences into one batch; MaskedSequence items contribute labels."""
    width = max(len(item) for item in items)
    tokens = np.full((len(items), width), PAD, dtype=np.int64)
    pos = np.zeros((len(items), width, NUM_FEATURES), dtype=np.int64)
    pad_mask = np.ones((len(items), width), dtype=bool)
    labels = np.full((len(items), width), IGNORE_INDEX, dtype=np.int64)
    has_labels = False
    for b, item in enumerate(items):
        n = len(item)
        tokens[b, :n] = item.tokens
        pos[b, :n] = item.pos
        pad_mask[b, :n] = False
        if isinstance(item, MaskedSequence):
            labels[b, :n] = item.labels
            has_labels = True
    return Batch(
        tokens=torch.from_numpy(tokens),
        pos=torch.from_numpy(pos),
        pad_mask=torch.from_numpy(pad_mask),
        labels=torch.from_numpy(labels) if has_labels else None,
    )


class StructuralEmbeddings(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.word_embeddings = nn.Embedding(cfg.vocab_size, cfg.hidden)
        self.position_embeddings = nn.ModuleList(
            nn.Embedding(size, cfg.hidden) for size in cfg.limits.table_sizes()
        )

    def forward(self, tokens: torch.Tensor, pos: torch.Tensor) -> torch.Tensor:
        if tokens.numel() and (tokens.min() < 0 or tokens.max() >= self.cfg.vocab_size):
            raise IndexOutOfTable(f"token id outside the word table of size {self.cfg.vocab_size}")
        h = self.word_embeddings(tokens)
        for k, table in enumerate(self.position_embeddings):
            if k in self.cfg.disabled_features:
                continue
            column = pos[..., k]
            if column.numel() and (column.min() < 0 or column.max() >= table.num_embeddings):
                raise IndexOutOfTable(f"position feature P{k} outside its table of size {table.num_embeddings}")
            h = h + table(column)
        return h


class SelfAttention(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.n_heads = cfg.heads
        self.head_dim = cfg.hidden // cfg.heads
        self.query = nn.Linear(cfg.hidden, cfg.hidden)
        self.key = nn.Linear(cfg.hidden, cfg.hidden)
        self.value = nn.Linear(cfg.hidden, cfg.hidden)
        self.output = nn.Linear(cfg.hidden, cfg.hidden)
        self.dropout = nn.Dropout(cfg.dropout)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, t, _ = x.shape
        return x.view(b, t, self.n_heads, self.head_dim).transpose(1, 2)

    def forward(self, h: torch.Tensor, pad_mask: Optional[torch.Tensor] = None) -> Tuple[torch.Tensor, torch.Tensor]:
        q, k, v = self._split(self.query(h)), self._split(self.key(h)), self._split(self.value(h))
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        if pad_mask is not None:
            scores = scores.masked_fill(pad_mask[:, None, None, :], float("-inf"))
        probs = torch.softmax(scores, dim=-1)
        context = self.dropout(probs) @ v
        b, _, t, _ = context.shape
        context = context.transpose(1, 2).reshape(b, t, -1)
        return self.output(context), probs


class EncoderLayer(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.attention = SelfAttention(cfg)
        self.attention_norm = nn.LayerNorm(cfg.hidden)
        self.ffn_in = nn.Linear(cfg.hidden, cfg.ffn)
        self.ffn_out = nn.Linear(cfg.ffn, cfg.hidden)
        self.ffn_norm = nn.LayerNorm(cfg.hidden)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, h: torch.Tensor, pad_mask: Optional[torch.Tensor] = None) -> Tuple[torch.Tensor, torch.Tensor]:
        attended, probs = self.attention(h, pad_mask)
        h = self.attention_norm(h + self.dropout(attended))
        h = self.ffn_norm(h + self.dropout(self.ffn_out(F.gelu(self.ffn_in(h)))))
        return h, probs


class DomLMEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.embeddings = StructuralEmbeddings(cfg)
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.layers))

    def forward(
        self,
        tokens: torch.Tensor,
        pos: torch.Tensor,
        pad_mask: Optional[torch.Tensor] = None,
        return_attention: bool = False,
    ):
        if tokens.shape[-1] > self.cfg.max_len:
            raise IndexOutOfTable(f"sequence of {tokens.shape[-1]} tokens exceeds max length {self.cfg.max_len}")
        h = self.embeddings(tokens, pos)
        attention = []
        for layer in self.layers:
            h, probs = layer(h, pad_mask)
            attention.append(probs)
        if not torch.isfinite(h).all():
            logger.error("Encoder produced non-finite activations")
            raise NonFiniteActivation("encoder produced non-finite activations")
        return (h, attention) if return_attention else h


class MLMHead(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.transform = nn.Linear(cfg.hidden, cfg.hidden)

    def forward(self, h: torch.Tensor, word_table: torch.Tensor) -> torch.Tensor:
        return self.transform(h) @ word_table.t()


class DomLMForPretraining(nn.Module):
    """Encoder plus tied masked-language-model head: the full pre-training parameter set."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = DomLMEncoder(cfg)
        self.mlm_head = MLMHead(cfg)

    def forward(self, batch: Batch) -> torch.Tensor:
        h = self.encoder(batch.tokens, batch.pos, batch.pad_mask)
        return self.mlm_head(h, self.encoder.embeddings.word_embeddings.weight)


def reset_parameters(module: nn.Module, seed: int) -> None:
    """Normal(0, 0.02) for every tensor except layer-norm gains (1) and biases (0)."""
    generator = torch.Generator().manual_seed(seed)
    norm_params = set()
    for sub in module.modules():
        if isinstance(sub, nn.LayerNorm):
            norm_params.update({id(sub.weight), id(sub.bias)})
            with torch.no_grad():
                sub.weight.fill_(1.0)
                sub.bias.zero_()
    with torch.no_grad():
        for _, param in module.named_parameters():
            if id(param) in norm_params:
                continue
            sample = torch.empty(param.shape, dtype=torch.float64).normal_(0.0, 0.02, generator=generator)
            param.copy_(sample.to(param.dtype))


def init_params(cfg: EncoderConfig, seed: Optional[int] = None) -> DomLMForPretraining:
    """
    Create the pre-training model with deterministic initial parameters.

    Args:
        cfg (EncoderConfig): Encoder hyperparameters; ``vocab_size`` must be set.
        seed (Optional[int]): Overrides ``cfg.seed``.

    Returns:
        DomLMForPretraining: Encoder and MLM head.
    """
    if cfg.vocab_size <= 0:
        raise ValueError("EncoderConfig.vocab_size must be set before building the model")
    model = DomLMForPretraining(cfg)
    reset_parameters(model, cfg.seed if seed is None else seed)
    return model


def embed(seq: Sequenceish, model: DomLMForPretraining) -> torch.Tensor:
    """T x d input embeddings of one sequence (word plus six position lookups)."""
    batch = collate([seq])
    return model.encoder.embeddings(batch.tokens, batch.pos)[0]


def encode(seq: Sequenceish, model: DomLMForPretraining) -> torch.Tensor:
    """T x d contextual representations of one sequence."""
    batch = collate([seq])
    return model.encoder(batch.tokens, batch.pos)[0]


def mlm_logits(h: torch.Tensor, model: DomLMForPretraining) -> torch.Tensor:
    """Scores over the vocabulary for every row of ``h``."""
    return model.mlm_head(h, model.encoder.embeddings.word_embeddings.weight)


def mlm_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """
    Mean negative log-likelihood of the original tokens at selected positions.

    Raises:
        NoSelectedPositions: If every label is IGNORE_INDEX.
    """
    labels = labels.reshape(-1)
    if not (labels != IGNORE_INDEX).any():
        raise NoSelectedPositions("no position is selected for prediction; the loss is undefined")
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), labels, ignore_index=IGNORE_INDEX)


def _checked_indices(name: str, param: torch.Tensor, batch: Batch) -> List[Tuple[int, ...]]:
    # rows of position tables that the input never touches have exactly zero
    # gradient both ways; only referenced rows are probed
    if name.startswith("encoder.embeddings.position_embeddings."):
        k = int(name.split(".")[3])
        rows = sorted(set(batch.pos[..., k].reshape(-1).tolist()))
        return [(r, c) for r in rows for c in range(param.shape[1])]
    return [tuple(int(i) for i in idx) for idx in np.ndindex(*param.shape)]


def grad_check(
    model: DomLMForPretraining,
    example: MaskedSequence,
    step: float = 1e-5,
    floor: float = 1e-5,
) -> float:
    """
    Compare autograd gradients of the MLM loss with central differences.

    The model is evaluated in 64-bit arithmetic. The relative error of one
    entry is ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``.

    Args:
        model (DomLMForPretraining): Model to check; it is converted to float64.
        example (MaskedSequence): One masked sequence with at least one label.
        step (float): Finite-difference step.
        floor (float): Lower bound of the relative-error denominator.

    Returns:
        float: The worst relative error over every parameter tensor.

    Raises:
        NoSelectedPositions: If the example has no selected position.
    """
    model = model.double()
    model.eval()
    batch = collate([example])

    def loss_value() -> torch.Tensor:
        return mlm_loss(model(batch), batch.labels)

    model.zero_grad()
    loss_value().backward()
    worst = 0.0
    for name, param in model.named_parameters():
        analytic = param.grad.detach().clone() if param.grad is not None else torch.zeros_like(param)
        with torch.no_grad():
            for idx in _checked_indices(name, param, batch):
                original = param[idx].item()
                param[idx] = original + step
                plus = loss_value().item()
                param[idx] = original - step
                minus = loss_value().item()
                param[idx] = original
                numeric = (plus - minus) / (2 * step)
                a = analytic[idx].item()
                error = abs(a - numeric) / max(abs(a), abs(numeric), floor)
                worst = max(worst, error)
        logger.debug(f"grad_check {name}: worst so far {worst:.3e}")
    return worst
