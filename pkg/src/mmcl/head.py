"""Final multimodal fusion and sentiment regression head."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .errors import ConfigurationError, ValidationError


@dataclass
class HeadParams:
    fusion_dim: int = 64
    fusion_hidden_dim: int = 64
    text_pooling: str = "first"  # "first" (CLS analog) or "mean"

    def validate(self):
        if self.fusion_dim < 1 or self.fusion_hidden_dim < 1:
            raise ConfigurationError("fusion dims must be positive")
        if self.text_pooling not in ("first", "mean"):
            raise ConfigurationError("text_pooling must be 'first' or 'mean'")


class MultimodalHead(nn.Module):
    """Concatenate pooled text with both predicted modality vectors, fuse
    through a two-layer MLP, and regress a scalar sentiment score."""

    def __init__(self, text_dim: int, predicted_dim: int, params: HeadParams):
        super().__init__()
        params.validate()
        self.text_dim = text_dim
        self.predicted_dim = predicted_dim
        self.params = params
        in_dim = text_dim + 2 * predicted_dim
        self.fuse_mlp = nn.Sequential(
            nn.Linear(in_dim, params.fusion_hidden_dim),
            nn.Tanh(),
            nn.Linear(params.fusion_hidden_dim, params.fusion_dim),
        )
        self.regressor = nn.Linear(params.fusion_dim, 1)
        self.double()

    def fuse(
        self,
        text_pooled: torch.Tensor,
        predicted_audio: torch.Tensor,
        predicted_vision: torch.Tensor,
    ) -> torch.Tensor:
        for name, v, dim in (
            ("text_pooled", text_pooled, self.text_dim),
            ("predicted_audio", predicted_audio, self.predicted_dim),
            ("predicted_vision", predicted_vision, self.predicted_dim),
        ):
            if v.shape[-1] != dim:
                raise ValidationError(
                    f"{name}: expected feature dim {dim}, got {v.shape[-1]}"
                )
            if not torch.isfinite(v).all():
                raise ValidationError(f"{name}: non-finite entries")
        return self.fuse_mlp(
            torch.cat([text_pooled, predicted_audio, predicted_vision], dim=-1)
        )

    def predict(self, fused: torch.Tensor) -> torch.Tensor:
        if fused.shape[-1] != self.params.fusion_dim:
            raise ValidationError("fused representation has wrong dimension")
        return self.regressor(fused).squeeze(-1)

    def forward(self, text_pooled, predicted_audio, predicted_vision):
        fused = self.fuse(text_pooled, predicted_audio, predicted_vision)
        return fused, self.predict(fused)
