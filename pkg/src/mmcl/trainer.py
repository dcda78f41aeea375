"""Training harness: Adam with linear warmup and two parameter groups,
the ICL pairing-phase curriculum, loss tracing, checkpointing, grid
search, the ablation suites, and finite-difference gradient checking."""

from __future__ import annotations

import copy
import csv
import io
import itertools
import json
import math
import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .config import config_hash, from_plain, set_by_path, to_plain
from .data import Batch, UtteranceTriplet, batch_iterator
from .errors import (
    ConfigurationError,
    NumericalError,
    TrainingDivergedError,
    ValidationError,
)
from .losses import LossBreakdown, LossWeights, PairingPhase
from .metrics import MetricsReport, REPORT_KEYS, compute_report
from .model import (
    LossFlags,
    MmclModel,
    ModalityMask,
    ModelConfig,
    collate,
    compute_losses,
)

_CHECKPOINT_MAGIC = b"MMCLCKP1"

LOSS_NAMES = ("reg", "uni", "sent", "cross", "align", "uniform")

# Weight-sweep value sets mirrored by the "weights" ablation suite.
WEIGHT_SWEEP = {
    "mu": (0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
    "eta": (0.4, 0.6, 0.8, 1.0, 1.2, 1.4),
    "alpha": (0.4, 0.6, 0.8, 1.0, 1.2, 1.4),
}

MODALITY_SETTINGS = (
    ("a", ModalityMask(use_text=False, use_audio=True, use_vision=False)),
    ("v", ModalityMask(use_text=False, use_audio=False, use_vision=True)),
    ("t", ModalityMask(use_text=True, use_audio=False, use_vision=False)),
    ("a+v", ModalityMask(use_text=False, use_audio=True, use_vision=True)),
    ("t+a", ModalityMask(use_text=True, use_audio=True, use_vision=False)),
    ("t+v", ModalityMask(use_text=True, use_audio=False, use_vision=True)),
    ("t+a+v", ModalityMask(use_text=True, use_audio=True, use_vision=True)),
)


@dataclass
class TrainConfig:
    seeds: tuple[int, ...] = (0,)
    epochs: int = 10
    batch_size: int = 32
    lr_text: float = 1e-3
    lr_other: float = 5e-3
    warmup_frac: float = 0.1
    weights: LossWeights = field(default_factory=LossWeights)
    flags: LossFlags = field(default_factory=LossFlags)
    mask: ModalityMask = field(default_factory=ModalityMask)
    model: ModelConfig = field(default_factory=ModelConfig)
    pairing_mode: str = "curriculum"  # or "averaged"
    pairing_boundaries: tuple[float, float] = (1 / 3, 2 / 3)
    trace_interval: int = 5
    aligned: bool = True

    def validate(self):
        if not self.seeds:
            raise ConfigurationError("seeds must be non-empty")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ConfigurationError("batch_size must be >= 2")
        if self.lr_text <= 0 or self.lr_other <= 0:
            raise ConfigurationError("learning rates must be > 0")
        if not (0.0 <= self.warmup_frac < 1.0):
            raise ConfigurationError("warmup_frac must be in [0, 1)")
        if self.pairing_mode not in ("curriculum", "averaged"):
            raise ConfigurationError("pairing_mode must be curriculum|averaged")
        b1, b2 = self.pairing_boundaries
        if not (0.0 <= b1 <= b2 <= 1.0):
            raise ConfigurationError("pairing_boundaries must satisfy 0<=b1<=b2<=1")
        if self.trace_interval < 1:
            raise ConfigurationError("trace_interval must be >= 1")
        self.weights.validate()
        self.mask.validate()
        self.model.validate()


@dataclass
class TraceLog:
    """Per-step loss trace averaged over fixed-size step windows."""

    interval: int = 5
    entries: list[tuple[int, str, float]] = field(default_factory=list)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "loss_name", "value"])
            for step, name, value in self.entries:
                writer.writerow([step, name, repr(value)])

    def names(self) -> set[str]:
        return {name for _, name, _ in self.entries}


@dataclass
class Checkpoint:
    model_state: dict
    optimizer_state: dict
    config: dict  # plain TrainConfig dict
    config_hash: str
    epoch: int
    val_reg: float

    def save(self, path):
        header = json.dumps(
            {
                "format_version": 1,
                "config_hash": self.config_hash,
                "epoch": self.epoch,
                "val_reg": self.val_reg,
            },
            sort_keys=True,
        ).encode()
        buf = io.BytesIO()
        torch.save(
            {
                "model_state": self.model_state,
                "optimizer_state": self.optimizer_state,
                "config": self.config,
            },
            buf,
        )
        with open(path, "wb") as fh:
            fh.write(_CHECKPOINT_MAGIC)
            fh.write(struct.pack(">I", len(header)))
            fh.write(header)
            fh.write(buf.getvalue())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            magic = fh.read(len(_CHECKPOINT_MAGIC))
            if magic != _CHECKPOINT_MAGIC:
                raise ValidationError(f"{path}: not an MMCL checkpoint")
            (header_len,) = struct.unpack(">I", fh.read(4))
            header = json.loads(fh.read(header_len).decode())
            payload = torch.load(io.BytesIO(fh.read()), weights_only=False)
        return cls(
            model_state=payload["model_state"],
            optimizer_state=payload["optimizer_state"],
            config=payload["config"],
            config_hash=header["config_hash"],
            epoch=header["epoch"],
            val_reg=header["val_reg"],
        )

    def build_model(self) -> tuple[MmclModel, TrainConfig]:
        config = from_plain(TrainConfig, self.config)
        model = MmclModel(config.model)
        try:
            model.load_state_dict(self.model_state)
        except RuntimeError as exc:
            raise ValidationError(f"checkpoint/config mismatch: {exc}") from exc
        return model, config


def apply_thread_cap():
    """Honor the MMCL_THREADS env var as a cap on torch worker threads."""
    raw = os.environ.get("MMCL_THREADS")
    if raw:
        try:
            threads = max(1, int(raw))
        except ValueError:
            raise ConfigurationError(f"MMCL_THREADS={raw!r} is not an integer")
        torch.set_num_threads(threads)


def infer_model_config(config: ModelConfig, sample: UtteranceTriplet) -> ModelConfig:
    """Copy the model config with input dims taken from the data."""
    cfg = copy.deepcopy(config)
    cfg.encoder.text_input_dim = sample.text.dim
    cfg.encoder.audio_input_dim = sample.audio.dim
    cfg.encoder.vision_input_dim = sample.vision.dim
    cfg.encoder.text_max_len = max(cfg.encoder.text_max_len, sample.text.length)
    return cfg


def pairing_phases(
    step: int, total_steps: int, config: TrainConfig
) -> list[PairingPhase]:
    """Active ICL pairing phase(s) for a 0-based global step index."""
    if config.pairing_mode == "averaged":
        return list(PairingPhase)
    progress = step / max(total_steps, 1)
    b1, b2 = config.pairing_boundaries
    if progress < b1:
        return [PairingPhase.ORIGIN_ORIGIN]
    if progress < b2:
        return [PairingPhase.PREDICT_PREDICT]
    return [PairingPhase.ORIGIN_PREDICT]


def warmup_factor(step: int, warmup_steps: int) -> float:
    """Linear warmup factor for a 1-based optimizer step; constant after."""
    if warmup_steps <= 0:
        return 1.0
    return min(1.0, step / warmup_steps)


def enabled_loss_names(flags: LossFlags) -> list[str]:
    f = flags.resolved()
    names = ["reg"]
    for name, disabled in (
        ("uni", f.disable_uni),
        ("sent", f.disable_scl),
        ("cross", f.disable_cross),
        ("align", f.disable_align),
        ("uniform", f.disable_uniform),
    ):
        if not disabled:
            names.append(name)
    return names


def _predict_dataset(
    model: MmclModel,
    dataset,
    batch_size: int,
    mask: ModalityMask,
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic forward over a dataset; returns (preds, labels)."""
    if not dataset:
        raise ValidationError("empty dataset")
    preds, labels = [], []
    model.eval()
    with torch.no_grad():
        for batch in batch_iterator(dataset, batch_size, contrastive=False):
            t, a, v, y = collate(batch)
            out = model(t, a, v, cutoff_rng=None, mask=mask)
            preds.append(out.predictions.numpy())
            labels.append(y.numpy())
    model.train()
    return np.concatenate(preds), np.concatenate(labels)


def train(
    config: TrainConfig,
    train_set,
    val_set,
    seed: int | None = None,
) -> tuple[Checkpoint, TraceLog]:
    """Optimize the full objective; returns the best-validation checkpoint
    (minimum validation regression loss, checked each epoch) and the
    loss trace."""
    config.validate()
    if not train_set:
        raise ValidationError("empty training set")
    if not val_set:
        raise ValidationError("empty validation set")
    if seed is None:
        seed = config.seeds[0]

    torch.manual_seed(seed)
    model_cfg = infer_model_config(config.model, train_set[0])
    resolved = replace(config, model=model_cfg)
    model = MmclModel(model_cfg)
    cutoff_rng = torch.Generator()
    cutoff_rng.manual_seed(seed + 0x5EED)

    text_param_ids = {id(p) for p in model.text_encoder.parameters()}
    other_params = [p for p in model.parameters() if id(p) not in text_param_ids]
    optimizer = torch.optim.Adam(
        [
            {"params": list(model.text_encoder.parameters()), "lr": config.lr_text},
            {"params": other_params, "lr": config.lr_other},
        ]
    )
    base_lrs = [config.lr_text, config.lr_other]

    steps_per_epoch = sum(
        1 for _ in batch_iterator(train_set, config.batch_size, shuffle_seed=0)
    )
    if steps_per_epoch == 0:
        raise ValidationError(
            "training set yields no usable batch (need at least 2 samples)"
        )
    total_steps = config.epochs * steps_per_epoch
    warmup_steps = int(config.warmup_frac * total_steps)

    flags = config.flags.resolved()
    trace = TraceLog(interval=config.trace_interval)
    window: dict[str, list[float]] = {n: [] for n in enabled_loss_names(flags)}
    last_breakdown: LossBreakdown | None = None
    best = None  # (val_reg, epoch, state_dict copy)
    step = 0

    for epoch in range(config.epochs):
        shuffle_seed = seed * 100_003 + epoch
        for batch in batch_iterator(
            train_set, config.batch_size, shuffle_seed=shuffle_seed
        ):
            t, a, v, y = collate(batch)
            phases = pairing_phases(step, total_steps, config)
            try:
                total, breakdown = compute_losses(
                    model(t, a, v, cutoff_rng=cutoff_rng, mask=config.mask),
                    y,
                    config.weights,
                    phases,
                    flags=flags,
                    config=model_cfg,
                )
            except (NumericalError, ValidationError) as exc:
                raise TrainingDivergedError(
                    f"non-finite loss at step {step}: {exc}", last_breakdown
                ) from exc
            if not math.isfinite(breakdown.total):
                raise TrainingDivergedError(
                    f"non-finite total loss at step {step}", last_breakdown
                )
            last_breakdown = breakdown
            optimizer.zero_grad()
            total.backward()
            factor = warmup_factor(step + 1, warmup_steps)
            for group, base in zip(optimizer.param_groups, base_lrs):
                group["lr"] = base * factor
            optimizer.step()

            step += 1
            values = breakdown.as_dict()
            for name in window:
                window[name].append(values[name])
            if step % config.trace_interval == 0:
                for name in window:
                    trace.entries.append(
                        (step, name, float(np.mean(window[name])))
                    )
                    window[name].clear()

        preds, labels = _predict_dataset(
            model, val_set, config.batch_size, config.mask
        )
        val_reg = float(np.mean(np.abs(preds - labels)))
        if best is None or val_reg < best[0]:
            best = (val_reg, epoch, copy.deepcopy(model.state_dict()))

    val_reg, best_epoch, best_state = best
    checkpoint = Checkpoint(
        model_state=best_state,
        optimizer_state=optimizer.state_dict(),
        config=to_plain(resolved),
        config_hash=config_hash(resolved),
        epoch=best_epoch,
        val_reg=val_reg,
    )
    return checkpoint, trace


def evaluate(checkpoint: Checkpoint, test_set) -> MetricsReport:
    """Metrics of a checkpointed model over a held-out set."""
    if not test_set:
        raise ValidationError("empty evaluation set")
    model, config = checkpoint.build_model()
    preds, labels = _predict_dataset(
        model, test_set, config.batch_size, config.mask
    )
    return compute_report(preds, labels)


def export_embeddings(checkpoint: Checkpoint, dataset, path):
    """Dump one CSV row per sample: id, label, class, fused representation."""
    from .data import sentiment_class

    if not dataset:
        raise ValidationError("empty dataset")
    model, config = checkpoint.build_model()
    model.eval()
    rows = []
    with torch.no_grad():
        for batch in batch_iterator(dataset, config.batch_size, contrastive=False):
            t, a, v, _ = collate(batch)
            out = model(t, a, v, cutoff_rng=None, mask=config.mask)
            for sample, vec in zip(batch.samples, out.fused_multimodal.numpy()):
                rows.append((sample.id, sample.label, vec))
    fusion_dim = rows[0][2].shape[0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["id", "label", "class"] + [f"f_{j}" for j in range(fusion_dim)]
        )
        for sample_id, label, vec in rows:
            writer.writerow(
                [sample_id, repr(label), sentiment_class(label).value]
                + [repr(float(x)) for x in vec]
            )


def grid_search(
    base_config: TrainConfig,
    grid: dict[str, list],
    train_set,
    val_set,
) -> list[dict]:
    """Evaluate the Cartesian product of dotted-path overrides; returns
    rows ranked by validation regression loss (ascending)."""
    if not grid:
        raise ConfigurationError("empty grid")
    keys = sorted(grid)
    for key, values in grid.items():
        if not values:
            raise ConfigurationError(f"grid entry {key!r} has no values")
    results = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        overrides = dict(zip(keys, combo))
        plain = to_plain(base_config)
        for dotted, value in overrides.items():
            set_by_path(plain, dotted, value)
        config = from_plain(TrainConfig, plain)
        checkpoint, _ = train(config, train_set, val_set)
        results.append(
            {
                "overrides": overrides,
                "val_reg": checkpoint.val_reg,
                "epoch": checkpoint.epoch,
            }
        )
    results.sort(key=lambda row: row["val_reg"])
    return results


def _loss_ablation_settings(base: TrainConfig) -> list[tuple[str, TrainConfig]]:
    def with_flags(**kwargs) -> TrainConfig:
        return replace(base, flags=replace(base.flags, **kwargs))

    rp_model = copy.deepcopy(base.model)
    rp_model.replace_transformer_with_linear = True
    return [
        ("full", base),
        ("rp_transformer", replace(base, model=rp_model)),
        ("wo_uni", with_flags(disable_uni=True)),
        ("wo_icl", with_flags(disable_icl=True)),
        ("wo_cross", with_flags(disable_cross=True)),
        ("wo_align", with_flags(disable_align=True)),
        ("wo_uniform", with_flags(disable_uniform=True)),
        ("wo_scl", with_flags(disable_scl=True)),
        ("no_contrast", with_flags(disable_all_contrast=True)),
    ]


def ablate(
    base_config: TrainConfig,
    suite: str,
    train_set,
    val_set,
    test_set=None,
) -> list[tuple[str, MetricsReport]]:
    """Run one ablation suite end to end, one train+evaluate per setting.

    "losses" toggles each loss/module ablation (9 settings including the
    full model), "modalities" zeroes each modality combination (7), and
    "weights" sweeps the mu/eta/alpha value sets (18).
    """
    base_config.validate()
    eval_set = test_set if test_set else val_set
    if suite == "losses":
        settings = _loss_ablation_settings(base_config)
    elif suite == "modalities":
        settings = [
            (name, replace(base_config, mask=mask))
            for name, mask in MODALITY_SETTINGS
        ]
    elif suite == "weights":
        settings = []
        for param, values in WEIGHT_SWEEP.items():
            for value in values:
                config = replace(
                    base_config,
                    weights=replace(base_config.weights, **{param: value}),
                )
                settings.append((f"{param}={value}", config))
    else:
        raise ConfigurationError(f"unknown ablation suite {suite!r}")
    rows = []
    for name, config in settings:
        checkpoint, _ = train(config, train_set, val_set)
        rows.append((name, evaluate(checkpoint, eval_set)))
    return rows


def write_results_csv(rows: list[tuple[str, MetricsReport]], path):
    """Results table mirroring the metric columns of the paper's tables."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["setting"] + list(REPORT_KEYS))
        for name, report in rows:
            writer.writerow(
                [name] + [repr(float(getattr(report, k))) for k in REPORT_KEYS]
            )


def gradient_check(
    model: MmclModel,
    batch: Batch,
    param_sample_size: int,
    step: float,
    weights: LossWeights | None = None,
    flags: LossFlags | None = None,
    phases=PairingPhase.ORIGIN_PREDICT,
    seed: int = 0,
) -> float:
    """Central finite differences vs autograd on sampled parameters.

    Returns the max relative error of d(total loss)/d(theta) over a
    random sample of scalar parameters. Requires double precision.
    """
    if step <= 0:
        raise ValidationError("finite-difference step must be > 0")
    if param_sample_size < 1:
        raise ValidationError("param_sample_size must be >= 1")
    weights = weights or LossWeights()
    flags = (flags or LossFlags()).resolved()
    t, a, v, y = collate(batch)
    cutoff_seed = seed + 17

    def loss_value() -> torch.Tensor:
        rng = torch.Generator()
        rng.manual_seed(cutoff_seed)
        outputs = model(t, a, v, cutoff_rng=rng)
        total, _ = compute_losses(
            outputs, y, weights, phases, flags=flags, config=model.config
        )
        return total

    model.zero_grad()
    loss_value().backward()

    params = [p for p in model.parameters() if p.requires_grad]
    sizes = [p.numel() for p in params]
    total_params = sum(sizes)
    rng = np.random.default_rng(seed)
    sample = rng.choice(
        total_params, size=min(param_sample_size, total_params), replace=False
    )
    offsets = np.cumsum([0] + sizes)

    max_rel = 0.0
    with torch.no_grad():
        for flat_idx in sample:
            p_idx = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
            local = int(flat_idx - offsets[p_idx])
            param = params[p_idx]
            flat = param.view(-1)
            original = float(flat[local])
            grad = param.grad
            analytic = 0.0 if grad is None else float(grad.view(-1)[local])

            flat[local] = original + step
            plus = float(loss_value())
            flat[local] = original - step
            minus = float(loss_value())
            flat[local] = original
            fd = (plus - minus) / (2 * step)

            denom = max(abs(analytic), abs(fd), 1e-8)
            max_rel = max(max_rel, abs(analytic - fd) / denom)
    return max_rel
