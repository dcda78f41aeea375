"""Uni-modal contrastive coding: encoders, feature cutoff, instance loss.

Text goes through a small trainable Transformer token encoder (a stand-in
honoring the same sequence-in / sequence-plus-pooled-out interface as a
pretrained language model). Audio and vision go through bi-directional
LSTMs, get a feature-cutoff augmented twin, and both views pass through a
shared uni-modal Transformer before the instance contrastive loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .data import Modality
from .errors import ConfigurationError, ValidationError
from .losses import info_nce


@dataclass
class UniModalEncoding:
    """Outputs of one modality's encoder stack.

    ``hidden`` is the recurrent (or text-encoder) sequence output,
    ``refined`` the uni-modal Transformer output, ``refined_aug`` its
    augmented twin (absent for text).
    """

    modality: Modality
    hidden: torch.Tensor
    refined: torch.Tensor
    refined_aug: torch.Tensor | None = None

    def __post_init__(self):
        self.modality = Modality(self.modality)
        for name, t in (
            ("hidden", self.hidden),
            ("refined", self.refined),
            ("refined_aug", self.refined_aug),
        ):
            if t is None:
                continue
            if not torch.isfinite(t).all():
                raise ValidationError(f"{name}: non-finite entries")
        if (
            self.refined_aug is not None
            and self.refined_aug.shape != self.refined.shape
        ):
            raise ValidationError("refined and refined_aug shapes differ")


@dataclass
class EncoderParams:
    text_input_dim: int = 12
    text_model_dim: int = 16
    text_layers: int = 2
    text_heads: int = 4
    text_max_len: int = 64
    audio_input_dim: int = 16
    vision_input_dim: int = 16
    bilstm_hidden_dim: int = 8
    transformer_layers: int = 3
    transformer_heads: int = 8
    transformer_ffn_dim: int = 64
    cutoff_ratio: float = 0.2
    per_token_cutoff: bool = False

    def validate(self):
        if not (0.0 < self.cutoff_ratio < 1.0):
            raise ConfigurationError("cutoff_ratio must be in (0, 1)")
        if self.text_model_dim % self.text_heads != 0:
            raise ConfigurationError("text_heads must divide text_model_dim")
        if (2 * self.bilstm_hidden_dim) % self.transformer_heads != 0:
            raise ConfigurationError(
                "transformer_heads must divide 2 * bilstm_hidden_dim"
            )
        for name in (
            "text_input_dim",
            "text_model_dim",
            "text_layers",
            "text_heads",
            "audio_input_dim",
            "vision_input_dim",
            "bilstm_hidden_dim",
            "transformer_layers",
            "transformer_ffn_dim",
        ):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")

    @property
    def recurrent_dim(self) -> int:
        return 2 * self.bilstm_hidden_dim


def _ensure_batched(x: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if x.ndim == 2:
        return x[None], True
    if x.ndim == 3:
        return x, False
    raise ValidationError(f"expected (L, d) or (B, L, d), got ndim={x.ndim}")


class TextEncoder(nn.Module):
    """Trainable Transformer token encoder with learned position embeddings.

    forward() returns the full sequence output; pooled() exposes the
    first-position vector used for downstream fusion.
    """

    def __init__(self, params: EncoderParams):
        super().__init__()
        params.validate()
        self.params = params
        self.input_proj = nn.Linear(params.text_input_dim, params.text_model_dim)
        self.pos_embedding = nn.Embedding(params.text_max_len, params.text_model_dim)
        layer = nn.TransformerEncoderLayer(
            d_model=params.text_model_dim,
            nhead=params.text_heads,
            dim_feedforward=4 * params.text_model_dim,
            dropout=0.0,
            batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=params.text_layers)
        self.double()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x, squeeze = _ensure_batched(x)
        if x.shape[1] < 1:
            raise ValidationError("empty text sequence")
        if x.shape[1] > self.params.text_max_len:
            raise ValidationError(
                f"sequence length {x.shape[1]} exceeds text_max_len "
                f"{self.params.text_max_len}"
            )
        if x.shape[2] != self.params.text_input_dim:
            raise ValidationError(
                f"text feature dim {x.shape[2]} != {self.params.text_input_dim}"
            )
        positions = torch.arange(x.shape[1], device=x.device)
        h = self.input_proj(x) + self.pos_embedding(positions)[None]
        out = self.encoder(h)
        return out[0] if squeeze else out

    def pooled(self, sequence_out: torch.Tensor) -> torch.Tensor:
        if sequence_out.ndim == 2:
            return sequence_out[0]
        return sequence_out[:, 0]


class BiLstmEncoder(nn.Module):
    """Bi-directional LSTM; output concatenates forward and backward passes."""

    def __init__(self, input_dim: int, hidden_dim: int):
        super().__init__()
        if input_dim < 1 or hidden_dim < 1:
            raise ConfigurationError("input_dim and hidden_dim must be positive")
        self.lstm = nn.LSTM(
            input_dim, hidden_dim, batch_first=True, bidirectional=True
        )
        self.double()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x, squeeze = _ensure_batched(x)
        if x.shape[1] < 1:
            raise ValidationError("empty sequence")
        out, _ = self.lstm(x)
        return out[0] if squeeze else out


def feature_cutoff(
    h: torch.Tensor,
    ratio: float,
    rng: int | torch.Generator,
    per_token: bool = False,
) -> torch.Tensor:
    """Zero a random floor(ratio * d) subset of feature columns.

    By default the same column set is zeroed across every token (and every
    batch element); ``per_token`` redraws the set independently per token.
    The input is never modified; the zeroing is a constant mask so
    gradients flow through the surviving entries.
    """
    if not (0.0 < ratio < 1.0):
        raise ConfigurationError("cutoff ratio must be in (0, 1)")
    if h.ndim not in (2, 3):
        raise ValidationError("expected (L, d) or (B, L, d)")
    d = h.shape[-1]
    k = int(ratio * d)
    if k == 0:
        raise ConfigurationError(
            f"floor(ratio * d) = 0 for ratio={ratio}, d={d}; "
            "augmentation would be the identity"
        )
    if isinstance(rng, torch.Generator):
        generator = rng
    else:
        generator = torch.Generator()
        generator.manual_seed(int(rng))
    mask = torch.ones_like(h)
    if per_token:
        flat = mask.reshape(-1, d)
        for row in flat:
            cols = torch.randperm(d, generator=generator)[:k]
            row[cols] = 0.0
    elif h.ndim == 3:
        # One independent column set per batch element, shared over tokens.
        for b in range(h.shape[0]):
            cols = torch.randperm(d, generator=generator)[:k]
            mask[b, :, cols] = 0.0
    else:
        cols = torch.randperm(d, generator=generator)[:k]
        mask[:, cols] = 0.0
    return h * mask


class UnimodalTransformer(nn.Module):
    """Shared-weight Transformer refining both the original and augmented
    recurrent encodings of one modality."""

    def __init__(self, model_dim: int, params: EncoderParams):
        super().__init__()
        params.validate()
        if model_dim % params.transformer_heads != 0:
            raise ConfigurationError("heads must divide model_dim")
        self.model_dim = model_dim
        layer = nn.TransformerEncoderLayer(
            d_model=model_dim,
            nhead=params.transformer_heads,
            dim_feedforward=params.transformer_ffn_dim,
            dropout=0.0,
            batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(
            layer, num_layers=params.transformer_layers
        )
        self.double()

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        h, squeeze = _ensure_batched(h)
        if h.shape[2] != self.model_dim:
            raise ValidationError(
                f"feature dim {h.shape[2]} does not match model_dim "
                f"{self.model_dim}"
            )
        out = self.encoder(h)
        return out[0] if squeeze else out


class LinearRefiner(nn.Module):
    """Per-token linear stand-in for the uni-modal Transformer (the
    "replace Transformer with linear layers" ablation)."""

    def __init__(self, model_dim: int):
        super().__init__()
        self.model_dim = model_dim
        self.proj = nn.Linear(model_dim, model_dim)
        self.double()

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        if h.shape[-1] != self.model_dim:
            raise ValidationError("feature dim mismatch")
        return self.proj(h)


def pool_time(sequence: torch.Tensor) -> torch.Tensor:
    """Mean over the time axis: (B, L, d) -> (B, d) or (L, d) -> (d,)."""
    return sequence.mean(dim=-2)


def unimodal_instance_loss(
    pooled: torch.Tensor,
    pooled_aug: torch.Tensor,
    tau: float,
    variant: str = "standard",
) -> torch.Tensor:
    """Instance contrastive loss for one modality: each sample's positive
    key is its own augmented view, in-batch others are negatives."""
    return info_nce(pooled, pooled_aug, tau, variant=variant)
