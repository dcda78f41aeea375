"""Full model: uni-modal encoders, cross-modal prediction, fusion head,
and the assembly of all training losses for one batch."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .cmcp import CmcpNetwork, CmcpParams, CrossModalBundle
from .data import Batch, Modality, sentiment_class
from .errors import DegenerateBatchError, ValidationError
from .head import HeadParams, MultimodalHead
from .losses import (
    LossBreakdown,
    LossWeights,
    PairingPhase,
    alignment_loss,
    cross_instance_loss,
    l2_normalize,
    regression_loss,
    sentiment_contrastive_loss,
    total_loss,
    uniformity_loss,
)
from .umcc import (
    BiLstmEncoder,
    EncoderParams,
    LinearRefiner,
    TextEncoder,
    UniModalEncoding,
    UnimodalTransformer,
    feature_cutoff,
    pool_time,
    unimodal_instance_loss,
)


@dataclass
class ModalityMask:
    use_text: bool = True
    use_audio: bool = True
    use_vision: bool = True

    def validate(self):
        if not (self.use_text or self.use_audio or self.use_vision):
            raise ValidationError("at least one modality must be enabled")


@dataclass
class LossFlags:
    """Ablation switches; disable_icl implies the three ICL losses and
    disable_all_contrast implies every contrastive term."""

    disable_uni: bool = False
    disable_icl: bool = False
    disable_cross: bool = False
    disable_align: bool = False
    disable_uniform: bool = False
    disable_scl: bool = False
    disable_all_contrast: bool = False

    def resolved(self) -> "LossFlags":
        f = LossFlags(**self.__dict__)
        if f.disable_all_contrast:
            f.disable_uni = f.disable_scl = True
            f.disable_cross = f.disable_align = f.disable_uniform = True
        if f.disable_icl:
            f.disable_cross = f.disable_align = f.disable_uniform = True
        return f

    @property
    def any_contrastive(self) -> bool:
        f = self.resolved()
        return not (
            f.disable_uni
            and f.disable_scl
            and f.disable_cross
            and f.disable_align
            and f.disable_uniform
        )


@dataclass
class ModelConfig:
    encoder: EncoderParams = field(default_factory=EncoderParams)
    cmcp: CmcpParams = field(default_factory=CmcpParams)
    head: HeadParams = field(default_factory=HeadParams)
    replace_transformer_with_linear: bool = False
    info_nce_variant: str = "standard"
    scl_variant: str = "sum_in_log"
    uniformity_all_pairs: bool = False

    def validate(self):
        self.encoder.validate()
        self.cmcp.validate()
        self.head.validate()


@dataclass
class ModelOutputs:
    text: UniModalEncoding
    audio: UniModalEncoding
    vision: UniModalEncoding
    text_pooled: torch.Tensor
    bundle_vision: CrossModalBundle
    bundle_audio: CrossModalBundle
    fused_multimodal: torch.Tensor  # F_M, (B, fusion_dim)
    predictions: torch.Tensor  # (B,)


def collate(batch: Batch, dtype=torch.float64):
    """Stack a batch into (text, audio, vision, labels) tensors."""
    if batch.size < 1:
        raise ValidationError("empty batch")
    tensors = {}
    for name in ("text", "audio", "vision"):
        arrays = [getattr(s, name).values for s in batch.samples]
        shapes = {a.shape for a in arrays}
        if len(shapes) != 1:
            raise ValidationError(
                f"{name}: inconsistent shapes within batch: {sorted(shapes)}"
            )
        tensors[name] = torch.tensor(np.stack(arrays), dtype=dtype)
    labels = torch.tensor(batch.labels(), dtype=dtype)
    return tensors["text"], tensors["audio"], tensors["vision"], labels


class MmclModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        enc = config.encoder
        self.text_encoder = TextEncoder(enc)
        self.audio_rnn = BiLstmEncoder(enc.audio_input_dim, enc.bilstm_hidden_dim)
        self.vision_rnn = BiLstmEncoder(enc.vision_input_dim, enc.bilstm_hidden_dim)
        refiner = (
            LinearRefiner
            if config.replace_transformer_with_linear
            else lambda dim: UnimodalTransformer(dim, enc)
        )
        self.audio_refiner = refiner(enc.recurrent_dim)
        self.vision_refiner = refiner(enc.recurrent_dim)
        self.cmcp = CmcpNetwork(
            text_dim=enc.text_model_dim,
            audio_dim=enc.recurrent_dim,
            vision_dim=enc.recurrent_dim,
            params=config.cmcp,
        )
        self.head = MultimodalHead(
            text_dim=enc.text_model_dim,
            predicted_dim=config.cmcp.cnn_channels,
            params=config.head,
        )

    def _encode_recurrent(
        self,
        modality: Modality,
        x: torch.Tensor,
        rnn: BiLstmEncoder,
        refiner: nn.Module,
        cutoff_rng,
    ) -> UniModalEncoding:
        hidden = rnn(x)
        refined = refiner(hidden)
        refined_aug = None
        if cutoff_rng is not None:
            hidden_aug = feature_cutoff(
                hidden,
                self.config.encoder.cutoff_ratio,
                cutoff_rng,
                per_token=self.config.encoder.per_token_cutoff,
            )
            refined_aug = refiner(hidden_aug)
        return UniModalEncoding(modality, hidden, refined, refined_aug)

    def forward(
        self,
        text_seq: torch.Tensor,
        audio_seq: torch.Tensor,
        vision_seq: torch.Tensor,
        cutoff_rng: torch.Generator | int | None = None,
        mask: ModalityMask | None = None,
    ) -> ModelOutputs:
        """Full forward pass.

        ``cutoff_rng`` enables the feature-cutoff augmented views (needed
        for the uni-modal instance loss; evaluation passes None).
        ``mask`` zeroes whole modality representations, the mechanism used
        by the modality ablation.
        """
        mask = mask or ModalityMask()
        mask.validate()
        f_t = self.text_encoder(text_seq)
        audio = self._encode_recurrent(
            Modality.AUDIO, audio_seq, self.audio_rnn, self.audio_refiner, cutoff_rng
        )
        vision = self._encode_recurrent(
            Modality.VISION,
            vision_seq,
            self.vision_rnn,
            self.vision_refiner,
            cutoff_rng,
        )
        if not mask.use_text:
            f_t = torch.zeros_like(f_t)
        if not mask.use_audio:
            audio = _zeroed(audio)
        if not mask.use_vision:
            vision = _zeroed(vision)
        text = UniModalEncoding(Modality.TEXT, f_t, f_t)
        if self.config.head.text_pooling == "mean":
            text_pooled = pool_time(f_t)
        else:
            text_pooled = self.text_encoder.pooled(f_t)
        bundle_v, bundle_a = self.cmcp(f_t, audio.refined, vision.refined)
        fused, predictions = self.head(
            text_pooled, bundle_a.predicted, bundle_v.predicted
        )
        return ModelOutputs(
            text=text,
            audio=audio,
            vision=vision,
            text_pooled=text_pooled,
            bundle_vision=bundle_v,
            bundle_audio=bundle_a,
            fused_multimodal=fused,
            predictions=predictions,
        )


def _zeroed(encoding: UniModalEncoding) -> UniModalEncoding:
    return UniModalEncoding(
        encoding.modality,
        torch.zeros_like(encoding.hidden),
        torch.zeros_like(encoding.refined),
        None
        if encoding.refined_aug is None
        else torch.zeros_like(encoding.refined_aug),
    )


def compute_losses(
    outputs: ModelOutputs,
    labels: torch.Tensor,
    weights: LossWeights,
    phases: PairingPhase | list[PairingPhase],
    flags: LossFlags | None = None,
    config: ModelConfig | None = None,
) -> tuple[torch.Tensor, LossBreakdown]:
    """Assemble the weighted training objective for one batch.

    ``phases`` is either the single active ICL pairing phase or a list
    whose losses are averaged (the all-three-averaged schedule mode).
    A batch where the sentiment loss has no positive pair contributes
    zero for that term rather than failing the step.
    """
    flags = (flags or LossFlags()).resolved()
    config = config or ModelConfig()
    if isinstance(phases, (PairingPhase, str)):
        phases = [PairingPhase(phases)]
    zero = torch.zeros((), dtype=labels.dtype)

    reg = regression_loss(outputs.predictions, labels)

    uni = zero
    if not flags.disable_uni:
        if outputs.audio.refined_aug is None or outputs.vision.refined_aug is None:
            raise ValidationError(
                "uni-modal instance loss requires augmented views; "
                "pass cutoff_rng to forward()"
            )
        uni = unimodal_instance_loss(
            pool_time(outputs.audio.refined),
            pool_time(outputs.audio.refined_aug),
            weights.tau,
            variant=config.info_nce_variant,
        ) + unimodal_instance_loss(
            pool_time(outputs.vision.refined),
            pool_time(outputs.vision.refined_aug),
            weights.tau,
            variant=config.info_nce_variant,
        )

    branches = []
    for bundle in (outputs.bundle_audio, outputs.bundle_vision):
        branches.append(
            (l2_normalize(bundle.predicted), l2_normalize(bundle.target_encoded))
        )

    cross = zero
    if not flags.disable_cross:
        terms = [
            cross_instance_loss(
                p, g, phase, weights.tau, variant=config.info_nce_variant
            )
            for p, g in branches
            for phase in phases
        ]
        cross = sum(terms) / len(phases)

    align = zero
    if not flags.disable_align:
        align = sum(alignment_loss(p, g, weights.lam) for p, g in branches)

    uniform = zero
    if not flags.disable_uniform:
        uniform = sum(
            uniformity_loss(
                p, g, weights.kappa, all_pairs=config.uniformity_all_pairs
            )
            for p, g in branches
        )

    sent = zero
    if not flags.disable_scl:
        classes = [sentiment_class(float(y)) for y in labels]
        reps = torch.cat(
            [branches[0][1], branches[1][1], branches[0][0], branches[1][0]]
        )
        try:
            sent = sentiment_contrastive_loss(
                reps, classes * 4, weights.tau, variant=config.scl_variant
            )
        except DegenerateBatchError:
            sent = zero  # no same-class pair anywhere in the batch

    return total_loss(reg, uni, sent, cross, align, uniform, weights)
