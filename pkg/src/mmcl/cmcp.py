"""Cross-modal contrastive prediction network.

Two symmetric branches, each predicting one modality from the fusion of
the other two: project all modalities to a common dimension, fuse text
with the source modality through an MLP, encode the fused stream and the
target stream with twin CNNs that share architecture but never weights,
summarize the fused encoding with a unidirectional LSTM, and predict the
pooled target encoding with a linear layer.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import torch
from torch import nn
import torch.nn.functional as F

from .errors import ConfigurationError, ValidationError


class Branch(str, enum.Enum):
    PREDICT_VISION = "predict_vision"
    PREDICT_AUDIO = "predict_audio"


@dataclass
class CmcpParams:
    common_dim: int = 64
    fusion_hidden_dim: int = 64
    cnn_channels: int = 256
    cnn_strides: tuple[int, ...] = (5, 4, 2, 2, 2)
    cnn_kernels: tuple[int, ...] = (10, 8, 4, 4, 4)
    autoregressive_hidden_dim: int = 128
    share_projections: bool = True  # both branches reuse one projection per modality

    def validate(self):
        if len(self.cnn_strides) != 5 or len(self.cnn_kernels) != 5:
            raise ConfigurationError("CNN encoders must have exactly 5 layers")
        if any(s < 1 for s in self.cnn_strides) or any(
            k < 1 for k in self.cnn_kernels
        ):
            raise ConfigurationError("CNN strides and kernels must be positive")
        for name in (
            "common_dim",
            "fusion_hidden_dim",
            "cnn_channels",
            "autoregressive_hidden_dim",
        ):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")


@dataclass
class CrossModalBundle:
    """Per-branch tensors produced by one forward pass."""

    branch: Branch
    fused: torch.Tensor  # (B, L_pair, common_dim)
    target_encoded: torch.Tensor  # pooled G_u, (B, cnn_channels)
    context: torch.Tensor  # P_pair, (B, ar_hidden)
    predicted: torch.Tensor  # P_u, (B, cnn_channels)


class ModalityProjection(nn.Module):
    """Per-token affine map into the common fusion dimension."""

    def __init__(self, input_dim: int, common_dim: int):
        super().__init__()
        self.input_dim = input_dim
        self.proj = nn.Linear(input_dim, common_dim)
        self.double()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.input_dim:
            raise ValidationError(
                f"projection expects feature dim {self.input_dim}, "
                f"got {x.shape[-1]}"
            )
        return self.proj(x)


class BimodalFusion(nn.Module):
    """Per-token concatenation of two projected streams followed by a
    two-layer MLP back to the common dimension.

    Unaligned sequences are truncated to the shorter length before
    concatenation.
    """

    def __init__(self, params: CmcpParams):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(2 * params.common_dim, params.fusion_hidden_dim),
            nn.Tanh(),
            nn.Linear(params.fusion_hidden_dim, params.common_dim),
        )
        self.double()

    def forward(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        if a.ndim != 3 or b.ndim != 3:
            raise ValidationError("fusion expects (B, L, common_dim) inputs")
        overlap = min(a.shape[1], b.shape[1])
        if overlap < 1:
            raise ValidationError("empty overlap between fused sequences")
        return self.mlp(torch.cat([a[:, :overlap], b[:, :overlap]], dim=-1))


def conv_output_lengths(
    length: int, strides: tuple[int, ...] = (5, 4, 2, 2, 2)
) -> list[int]:
    """Per-layer output lengths under same-style padding: L -> ceil(L/s)."""
    if length < 1:
        raise ValidationError("sequence length must be >= 1")
    lengths = []
    for s in strides:
        length = math.ceil(length / s)
        lengths.append(length)
    return lengths


class CnnEncoder(nn.Module):
    """Five strided 1-D convolutions with Tanh activations.

    Same-style padding keeps each layer's output length at ceil(L/stride)
    so short desk-scale sequences survive all five layers.
    """

    def __init__(self, input_dim: int, params: CmcpParams):
        super().__init__()
        params.validate()
        self.params = params
        self.convs = nn.ModuleList()
        channels = input_dim
        for stride, kernel in zip(params.cnn_strides, params.cnn_kernels):
            self.convs.append(
                nn.Conv1d(channels, params.cnn_channels, kernel, stride=stride)
            )
            channels = params.cnn_channels
        self.double()

    def forward(self, seq: torch.Tensor) -> torch.Tensor:
        if seq.ndim != 3:
            raise ValidationError("expected (B, L, d)")
        if seq.shape[1] < 1:
            raise ValidationError("sequence length must be >= 1")
        x = seq.transpose(1, 2)  # (B, d, L)
        for conv, stride in zip(self.convs, self.params.cnn_strides):
            length = x.shape[-1]
            out_len = math.ceil(length / stride)
            kernel = conv.kernel_size[0]
            pad_total = max(0, (out_len - 1) * stride + kernel - length)
            x = F.pad(x, (pad_total // 2, pad_total - pad_total // 2))
            x = torch.tanh(conv(x))
        return x.transpose(1, 2)  # (B, L', channels)

    def encode_pooled(self, seq: torch.Tensor) -> torch.Tensor:
        """Time-mean of the final feature map: (B, channels)."""
        return self.forward(seq).mean(dim=1)


class Autoregressor(nn.Module):
    """Unidirectional LSTM summarizer; context is the final hidden state."""

    def __init__(self, input_dim: int, hidden_dim: int):
        super().__init__()
        self.lstm = nn.LSTM(input_dim, hidden_dim, batch_first=True)
        self.double()

    def forward(self, seq: torch.Tensor) -> torch.Tensor:
        if seq.ndim != 3 or seq.shape[1] < 1:
            raise ValidationError("expected non-empty (B, L, d)")
        _, (h_n, _) = self.lstm(seq)
        return h_n[-1]  # (B, hidden_dim)


class CrossModalBranch(nn.Module):
    """One prediction branch owning its own fusion MLP, twin CNNs,
    autoregressive summarizer and linear predictor."""

    def __init__(self, branch: Branch, params: CmcpParams):
        super().__init__()
        params.validate()
        self.branch = Branch(branch)
        self.params = params
        self.fusion = BimodalFusion(params)
        self.cnn_fused = CnnEncoder(params.common_dim, params)
        self.cnn_target = CnnEncoder(params.common_dim, params)
        self.autoregressor = Autoregressor(
            params.cnn_channels, params.autoregressive_hidden_dim
        )
        self.predictor = nn.Linear(
            params.autoregressive_hidden_dim, params.cnn_channels
        )
        self.double()

    def forward(
        self,
        text: torch.Tensor,
        source: torch.Tensor,
        target: torch.Tensor,
    ) -> CrossModalBundle:
        fused = self.fusion(text, source)
        encoded = self.cnn_fused(fused)
        context = self.autoregressor(encoded)
        predicted = self.predictor(context)
        target_pooled = self.cnn_target.encode_pooled(target)
        return CrossModalBundle(
            branch=self.branch,
            fused=fused,
            target_encoded=target_pooled,
            context=context,
            predicted=predicted,
        )


class CmcpNetwork(nn.Module):
    """Both prediction branches plus the per-modality common projections."""

    def __init__(
        self,
        text_dim: int,
        audio_dim: int,
        vision_dim: int,
        params: CmcpParams,
    ):
        super().__init__()
        params.validate()
        self.params = params
        self.project_text = ModalityProjection(text_dim, params.common_dim)
        self.project_audio = ModalityProjection(audio_dim, params.common_dim)
        self.project_vision = ModalityProjection(vision_dim, params.common_dim)
        if not params.share_projections:
            self.project_text_alt = ModalityProjection(text_dim, params.common_dim)
        self.branch_vision = CrossModalBranch(Branch.PREDICT_VISION, params)
        self.branch_audio = CrossModalBranch(Branch.PREDICT_AUDIO, params)

    def forward(
        self,
        text_seq: torch.Tensor,
        audio_seq: torch.Tensor,
        vision_seq: torch.Tensor,
    ) -> tuple[CrossModalBundle, CrossModalBundle]:
        """Returns (predict_vision bundle, predict_audio bundle)."""
        f_t = self.project_text(text_seq)
        f_a = self.project_audio(audio_seq)
        f_v = self.project_vision(vision_seq)
        f_t_alt = (
            f_t
            if self.params.share_projections
            else self.project_text_alt(text_seq)
        )
        bundle_v = self.branch_vision(f_t, f_a, f_v)
        bundle_a = self.branch_audio(f_t_alt, f_v, f_a)
        return bundle_v, bundle_a
