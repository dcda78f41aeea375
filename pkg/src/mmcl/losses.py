"""Contrastive and regression objectives.

All losses are pure functions over torch tensors (float64 recommended).
The InfoNCE kernel is shared between the uni-modal and cross-modal
instance losses; the cross-modal side adds alignment / uniformity terms on
the unit hypersphere and a supervised sentiment-grouped loss.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import torch

from .data import SentimentClass
from .errors import (
    ConfigurationError,
    DegenerateBatchError,
    NumericalError,
    ValidationError,
)


class PairingPhase(str, enum.Enum):
    """Which (query, key) combination the cross-modal instance loss uses."""

    ORIGIN_ORIGIN = "origin_origin"
    PREDICT_PREDICT = "predict_predict"
    ORIGIN_PREDICT = "origin_predict"


@dataclass
class LossWeights:
    """Scalar hyperparameters of the total objective.

    mu, eta, alpha, beta, gamma weight the uni-modal instance, sentiment,
    cross-modal instance, alignment and uniformity losses respectively.
    """

    mu: float = 0.7
    eta: float = 1.0
    alpha: float = 1.0
    beta: float = 0.75
    gamma: float = 0.1
    tau: float = 0.1
    lam: int = 2
    kappa: float = 2.0

    def validate(self):
        for name in ("mu", "eta", "alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.tau <= 0:
            raise ConfigurationError("tau must be > 0")
        if self.kappa <= 0:
            raise ConfigurationError("kappa must be > 0")
        if self.lam not in (1, 2):
            raise ConfigurationError("lam must be 1 or 2")


@dataclass
class LossBreakdown:
    """Per-component loss values plus their weighted total."""

    reg: float = 0.0
    uni: float = 0.0
    sent: float = 0.0
    cross: float = 0.0
    align: float = 0.0
    uniform: float = 0.0
    total: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {
            "reg": self.reg,
            "uni": self.uni,
            "sent": self.sent,
            "cross": self.cross,
            "align": self.align,
            "uniform": self.uniform,
            "total": self.total,
        }


def l2_normalize(v: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    """Project vectors (last dim) onto the unit hypersphere."""
    norms = v.norm(dim=-1, keepdim=True)
    if (norms <= eps).any():
        raise NumericalError("cannot normalize a (near-)zero vector")
    return v / norms


def _check_batch(anchors: torch.Tensor, positives: torch.Tensor, tau: float):
    if anchors.ndim != 2 or positives.ndim != 2:
        raise ValidationError("expected (n, d) tensors")
    if anchors.shape != positives.shape:
        raise ValidationError(
            f"shape mismatch: {tuple(anchors.shape)} vs {tuple(positives.shape)}"
        )
    if anchors.shape[0] < 2:
        raise ValidationError("contrastive losses require n >= 2")
    if tau <= 0:
        raise ValidationError("tau must be > 0")
    if not (torch.isfinite(anchors).all() and torch.isfinite(positives).all()):
        raise NumericalError("non-finite inputs to contrastive loss")


def info_nce(
    anchors: torch.Tensor,
    positives: torch.Tensor,
    tau: float,
    variant: str = "standard",
) -> torch.Tensor:
    """InfoNCE over in-batch negatives with dot-product similarity.

    "standard": denominator is exp(a_i.p_i/tau) plus the other anchors'
    terms with the self term excluded, so the loss is always >= 0.
    "literal": denominator sums exp(a_i.a_j/tau) over all anchors
    (self term included, positive key excluded), matching the loss as
    typeset rather than as conventionally implemented.
    """
    _check_batch(anchors, positives, tau)
    n = anchors.shape[0]
    pos_logits = (anchors * positives).sum(dim=1) / tau
    anchor_logits = (anchors @ anchors.T) / tau
    if variant == "standard":
        off_diag = anchor_logits.masked_fill(
            torch.eye(n, dtype=torch.bool, device=anchors.device), float("-inf")
        )
        logits = torch.cat([pos_logits[:, None], off_diag], dim=1)
        loss = -(pos_logits - torch.logsumexp(logits, dim=1))
    elif variant == "literal":
        loss = -(pos_logits - torch.logsumexp(anchor_logits, dim=1))
    else:
        raise ConfigurationError(f"unknown info_nce variant {variant!r}")
    if not torch.isfinite(loss).all():
        raise NumericalError("non-finite InfoNCE logits")
    return loss.mean()


def _check_normalized(name: str, v: torch.Tensor, tol: float = 1e-3):
    norms = v.norm(dim=-1)
    if (norms - 1.0).abs().max() > tol:
        raise ValidationError(f"{name} must be L2-normalized (tolerance {tol})")


def cross_instance_loss(
    predicted: torch.Tensor,
    target: torch.Tensor,
    phase: PairingPhase,
    tau: float,
    variant: str = "standard",
) -> torch.Tensor:
    """Cross-modal instance loss for one prediction branch.

    The pairing phase picks the (query, key) roles among the original
    (target) and predictive representations; callers sum over branches.
    """
    phase = PairingPhase(phase)
    _check_batch(predicted, target, tau)
    _check_normalized("predicted", predicted)
    _check_normalized("target", target)
    if phase is PairingPhase.ORIGIN_ORIGIN:
        return info_nce(target, target, tau, variant=variant)
    if phase is PairingPhase.PREDICT_PREDICT:
        return info_nce(predicted, predicted, tau, variant=variant)
    return info_nce(target, predicted, tau, variant=variant)


def alignment_loss(
    predicted: torch.Tensor, target: torch.Tensor, lam: int = 2
) -> torch.Tensor:
    """Mean ||P_i - G_i||_2^lam over matched pairs (one branch)."""
    if predicted.shape != target.shape:
        raise ValidationError("alignment_loss: shape mismatch")
    if lam not in (1, 2):
        raise ConfigurationError("lam must be 1 or 2")
    diff = predicted - target
    if lam == 2:
        # Sum of squares directly; norm-then-square would lose the last ulp.
        return diff.square().sum(dim=-1).mean()
    return diff.norm(dim=-1).mean()


def uniformity_loss(
    predicted: torch.Tensor,
    target: torch.Tensor,
    kappa: float = 2.0,
    all_pairs: bool = False,
) -> torch.Tensor:
    """log mean exp(-kappa ||P - G||^2) over the pair set (one branch).

    Default pair set is the matched (P_i, G_i) couples; ``all_pairs``
    switches to the full n^2 cross-product.
    """
    if kappa <= 0:
        raise ConfigurationError("kappa must be > 0")
    if predicted.shape != target.shape:
        raise ValidationError("uniformity_loss: shape mismatch")
    if predicted.numel() == 0:
        raise ValidationError("uniformity_loss: empty pair set")
    if all_pairs:
        sq = ((predicted[:, None, :] - target[None, :, :]) ** 2).sum(dim=-1)
    else:
        sq = ((predicted - target) ** 2).sum(dim=-1)
    return torch.logsumexp(-kappa * sq.reshape(-1), dim=0) - torch.log(
        torch.tensor(float(sq.numel()), dtype=predicted.dtype)
    )


def sentiment_contrastive_loss(
    reps: torch.Tensor,
    classes: Sequence[SentimentClass],
    tau: float,
    variant: str = "sum_in_log",
) -> torch.Tensor:
    """Supervised contrastive loss grouped by sentiment class.

    Each anchor's positives are the other same-class representations in
    the batch; the denominator runs over all non-anchor representations.
    The default keeps the sum of positive terms inside a single log
    ("sum_in_log"); "log_in_sum" averages per-positive log-ratios instead.
    Anchors without any same-class partner are skipped; a batch where no
    anchor has a partner is degenerate.
    """
    if reps.ndim != 2:
        raise ValidationError("reps must be (m, d)")
    m = reps.shape[0]
    if m != len(classes):
        raise ValidationError("reps and classes length mismatch")
    if m < 2:
        raise ValidationError("sentiment loss requires m >= 2")
    if tau <= 0:
        raise ValidationError("tau must be > 0")
    if variant not in ("sum_in_log", "log_in_sum"):
        raise ConfigurationError(f"unknown variant {variant!r}")
    labels = [SentimentClass(c) for c in classes]
    same = torch.tensor(
        [[a == b for b in labels] for a in labels], dtype=torch.bool
    )
    not_self = ~torch.eye(m, dtype=torch.bool)
    pos_mask = same & not_self
    contributing = pos_mask.any(dim=1)
    if not contributing.any():
        raise DegenerateBatchError("no anchor has a same-class partner")
    logits = (reps @ reps.T) / tau
    neg_inf = torch.tensor(float("-inf"), dtype=reps.dtype)
    den = torch.logsumexp(torch.where(not_self, logits, neg_inf), dim=1)
    terms = []
    for i in range(m):
        if not contributing[i]:
            continue
        pos_logits = logits[i][pos_mask[i]]
        if variant == "sum_in_log":
            terms.append(-(torch.logsumexp(pos_logits, dim=0) - den[i]))
        else:
            terms.append(-(pos_logits - den[i]).mean())
    return torch.stack(terms).mean()


def regression_loss(
    predictions: torch.Tensor, labels: torch.Tensor
) -> torch.Tensor:
    """Mean absolute error between predicted and true sentiment scores."""
    predictions = predictions.reshape(-1)
    labels = labels.reshape(-1)
    if predictions.shape != labels.shape:
        raise ValidationError("regression_loss: length mismatch")
    if predictions.numel() == 0:
        raise ValidationError("regression_loss: empty inputs")
    return (predictions - labels).abs().mean()


def total_loss(
    reg,
    uni,
    sent,
    cross,
    align,
    uniform,
    weights: LossWeights,
):
    """Weighted sum of all components; returns (total, breakdown).

    Components may be scalars or 0-dim tensors; the total keeps whatever
    autograd graph the inputs carry, the breakdown holds detached floats.
    """
    weights.validate()
    parts = {
        "reg": reg,
        "uni": uni,
        "sent": sent,
        "cross": cross,
        "align": align,
        "uniform": uniform,
    }
    for name, value in parts.items():
        scalar = float(value.detach() if torch.is_tensor(value) else value)
        if not torch.isfinite(torch.tensor(scalar)):
            raise NumericalError(f"loss component {name!r} is non-finite")
    total = (
        reg
        + weights.mu * uni
        + weights.eta * sent
        + weights.alpha * cross
        + weights.beta * align
        + weights.gamma * uniform
    )
    breakdown = LossBreakdown(
        reg=_as_float(reg),
        uni=_as_float(uni),
        sent=_as_float(sent),
        cross=_as_float(cross),
        align=_as_float(align),
        uniform=_as_float(uniform),
        total=_as_float(total),
    )
    return total, breakdown


def _as_float(value) -> float:
    return float(value.detach() if torch.is_tensor(value) else value)
