"""Synthetic multimodal data generation, file I/O, splitting and batching.

Every sample is an utterance triplet of text / audio / vision feature
sequences plus a real sentiment label in [-3, 3]. All operations are pure
functions of their inputs and an explicit seed.
"""

from __future__ import annotations

import csv
import enum
import json
import re
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigurationError, ValidationError

LABEL_MIN = -3.0
LABEL_MAX = 3.0

_CSV_PREFIX = {"text": "t", "audio": "a", "vision": "v"}


class Modality(str, enum.Enum):
    TEXT = "text"
    AUDIO = "audio"
    VISION = "vision"


class SentimentClass(str, enum.Enum):
    POSITIVE = "positive"
    NEUTRAL = "neutral"
    NEGATIVE = "negative"


@dataclass
class ModalitySequence:
    """One modality's feature matrix, shape (length, dim)."""

    modality: Modality
    values: np.ndarray

    def __post_init__(self):
        self.modality = Modality(self.modality)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValidationError(
                f"{self.modality.value}: expected a 2-D feature matrix, "
                f"got ndim={self.values.ndim}"
            )
        if self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ValidationError(
                f"{self.modality.value}: length and dim must be >= 1, "
                f"got shape {self.values.shape}"
            )
        if not np.isfinite(self.values).all():
            raise ValidationError(f"{self.modality.value}: non-finite entries")

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass
class UtteranceTriplet:
    """One sample: three modality sequences and a sentiment label."""

    id: str
    text: ModalitySequence
    audio: ModalitySequence
    vision: ModalitySequence
    label: float

    def __post_init__(self):
        self.label = float(self.label)
        if not (LABEL_MIN <= self.label <= LABEL_MAX):
            raise ValidationError(
                f"sample {self.id!r}: label {self.label} outside "
                f"[{LABEL_MIN}, {LABEL_MAX}]"
            )

    @property
    def aligned(self) -> bool:
        return self.text.length == self.audio.length == self.vision.length


@dataclass
class Batch:
    samples: list[UtteranceTriplet]

    @property
    def size(self) -> int:
        return len(self.samples)

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.float64)


@dataclass
class SynthSpec:
    """Parameters of the latent-plus-noise synthetic dataset generator.

    Informative feature columns are smooth functions of the latent
    sentiment; ``noise_dims_audio`` / ``noise_dims_vision`` designate
    trailing columns that carry pure noise independent of the label.
    """

    num_samples: int = 100
    lengths: tuple[int, int, int] = (8, 8, 8)  # (N_t, N_a, N_v)
    dims: tuple[int, int, int] = (12, 16, 16)  # (d_t, d_a, d_v)
    shared_latent_dim: int = 4
    noise_dims_text: int = 0
    noise_dims_audio: int = 4
    noise_dims_vision: int = 4
    feature_noise_std: float = 0.05
    label_noise_std: float = 0.0
    seed: int = 0

    def validate(self):
        if self.num_samples < 1:
            raise ConfigurationError("num_samples must be positive")
        for name, value in (("lengths", self.lengths), ("dims", self.dims)):
            if len(value) != 3 or any(int(v) < 1 for v in value):
                raise ConfigurationError(f"{name} must be three positive ints")
        if self.shared_latent_dim < 1:
            raise ConfigurationError("shared_latent_dim must be positive")
        if self.noise_dims_text < 0 or self.noise_dims_text > self.dims[0]:
            raise ConfigurationError(
                f"noise_dims_text={self.noise_dims_text} must be in "
                f"[0, d_t={self.dims[0]}]"
            )
        if self.noise_dims_audio < 0 or self.noise_dims_audio >= self.dims[1]:
            raise ConfigurationError(
                f"noise_dims_audio={self.noise_dims_audio} must be in "
                f"[0, d_a={self.dims[1]})"
            )
        if self.noise_dims_vision < 0 or self.noise_dims_vision >= self.dims[2]:
            raise ConfigurationError(
                f"noise_dims_vision={self.noise_dims_vision} must be in "
                f"[0, d_v={self.dims[2]})"
            )
        if self.feature_noise_std < 0:
            raise ConfigurationError("feature_noise_std must be >= 0")
        if self.label_noise_std < 0:
            raise ConfigurationError("label_noise_std must be >= 0")


def sentiment_class(y: float) -> SentimentClass:
    """Map a label to {positive, neutral, negative}; exact zero is neutral."""
    y = float(y)
    if not (LABEL_MIN <= y <= LABEL_MAX):
        raise ValidationError(f"label {y} outside [{LABEL_MIN}, {LABEL_MAX}]")
    if y > 0:
        return SentimentClass.POSITIVE
    if y < 0:
        return SentimentClass.NEGATIVE
    return SentimentClass.NEUTRAL


def _modality_features(rng, y, length, dim, noise_dims, phase_offset, noise_std):
    """Informative columns are smooth in y; trailing noise columns are iid."""
    info_dims = dim - noise_dims
    t = np.arange(length, dtype=np.float64)[:, None]
    j = np.arange(info_dims, dtype=np.float64)[None, :]
    values = np.empty((length, dim), dtype=np.float64)
    values[:, :info_dims] = (
        np.sin(0.7 * y + phase_offset + 0.5 * j + 0.3 * t)
        + 0.25 * y * np.cos(0.2 * j + phase_offset)
        + 0.1 * np.tanh(y) * t / max(length, 1)
    )
    values[:, :info_dims] += noise_std * rng.standard_normal((length, info_dims))
    if noise_dims:
        values[:, info_dims:] = rng.standard_normal((length, noise_dims))
    return values


def generate_synthetic_dataset(spec: SynthSpec) -> list[UtteranceTriplet]:
    """Deterministically generate labelled triplets per ``spec``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    (n_t, n_a, n_v), (d_t, d_a, d_v) = spec.lengths, spec.dims
    samples = []
    for i in range(spec.num_samples):
        y = rng.uniform(LABEL_MIN, LABEL_MAX)
        noise_std = spec.feature_noise_std
        text = _modality_features(
            rng, y, n_t, d_t, spec.noise_dims_text, phase_offset=0.0,
            noise_std=noise_std,
        )
        audio = _modality_features(
            rng, y, n_a, d_a, spec.noise_dims_audio, phase_offset=1.1,
            noise_std=noise_std,
        )
        vision = _modality_features(
            rng, y, n_v, d_v, spec.noise_dims_vision, phase_offset=2.3,
            noise_std=noise_std,
        )
        label = y
        if spec.label_noise_std > 0:
            label = y + spec.label_noise_std * rng.standard_normal()
        label = float(np.clip(label, LABEL_MIN, LABEL_MAX))
        samples.append(
            UtteranceTriplet(
                id=f"synth-{i:05d}",
                text=ModalitySequence(Modality.TEXT, text),
                audio=ModalitySequence(Modality.AUDIO, audio),
                vision=ModalitySequence(Modality.VISION, vision),
                label=label,
            )
        )
    return samples


def split_dataset(
    data: Sequence[UtteranceTriplet],
    ratios: tuple[float, float, float],
    seed: int,
) -> tuple[list, list, list]:
    """Disjoint, exhaustive (train, val, test) partition, seeded shuffle."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ConfigurationError("ratios must be three positive numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigurationError(f"ratios must sum to 1, got {sum(ratios)}")
    order = np.random.default_rng(seed).permutation(len(data))
    n_train = int(round(ratios[0] * len(data)))
    n_val = int(round(ratios[1] * len(data)))
    n_val = min(n_val, len(data) - n_train)
    train = [data[i] for i in order[:n_train]]
    val = [data[i] for i in order[n_train : n_train + n_val]]
    test = [data[i] for i in order[n_train + n_val :]]
    return train, val, test


def batch_iterator(
    data: Sequence[UtteranceTriplet],
    batch_size: int,
    shuffle_seed: int | None = None,
    contrastive: bool = True,
) -> Iterator[Batch]:
    """Yield batches; a trailing batch of size < 2 is dropped.

    With ``contrastive`` enabled (the training default), batch_size < 2 is
    rejected because every contrastive denominator degenerates at n = 1.
    ``contrastive=False`` (evaluation) keeps singleton batches.
    """
    if contrastive and batch_size < 2:
        raise ConfigurationError(
            "batch_size must be >= 2 when contrastive losses are enabled"
        )
    if batch_size < 1:
        raise ConfigurationError("batch_size must be >= 1")
    indices = np.arange(len(data))
    if shuffle_seed is not None:
        indices = np.random.default_rng(shuffle_seed).permutation(len(data))
    for start in range(0, len(data), batch_size):
        chunk = indices[start : start + batch_size]
        if len(chunk) < 2 and contrastive:
            continue
        if len(chunk) == 0:
            continue
        yield Batch([data[i] for i in chunk])


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------


def _triplet_to_json(sample: UtteranceTriplet) -> dict:
    return {
        "id": sample.id,
        "label": sample.label,
        "text": sample.text.values.tolist(),
        "audio": sample.audio.values.tolist(),
        "vision": sample.vision.values.tolist(),
    }


def _triplet_from_json(obj: dict, index: int) -> UtteranceTriplet:
    try:
        label = float(obj["label"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"record {index}: bad or missing label") from exc
    if not (LABEL_MIN <= label <= LABEL_MAX):
        raise ValidationError(
            f"record {index}: label {label} outside [{LABEL_MIN}, {LABEL_MAX}]"
        )
    try:
        return UtteranceTriplet(
            id=str(obj["id"]),
            text=ModalitySequence(Modality.TEXT, np.array(obj["text"])),
            audio=ModalitySequence(Modality.AUDIO, np.array(obj["audio"])),
            vision=ModalitySequence(Modality.VISION, np.array(obj["vision"])),
            label=label,
        )
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"record {index}: {exc}") from exc


def save_dataset(samples: Sequence[UtteranceTriplet], path, format: str = "json"):
    """Write samples to ``path`` as JSON array or flat CSV."""
    if format == "json":
        with open(path, "w") as fh:
            json.dump([_triplet_to_json(s) for s in samples], fh)
        return
    if format != "csv":
        raise ConfigurationError(f"unknown dataset format {format!r}")
    if not samples:
        raise ValidationError("cannot write an empty dataset as CSV")
    header = ["id", "label"]
    shapes = {}
    for name in ("text", "audio", "vision"):
        seq = getattr(samples[0], name)
        shapes[name] = (seq.length, seq.dim)
        prefix = _CSV_PREFIX[name]
        header += [
            f"{prefix}_{i}_{j}" for i in range(seq.length) for j in range(seq.dim)
        ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for sample in samples:
            row = [sample.id, repr(sample.label)]
            for name in ("text", "audio", "vision"):
                seq = getattr(sample, name)
                if (seq.length, seq.dim) != shapes[name]:
                    raise ValidationError(
                        f"sample {sample.id!r}: {name} shape differs from the "
                        "first sample; CSV requires homogeneous shapes"
                    )
                row += [repr(float(v)) for v in seq.values.ravel()]
            writer.writerow(row)


def _csv_shapes(header: list[str]) -> dict[str, tuple[int, int]]:
    pattern = re.compile(r"^([tav])_(\d+)_(\d+)$")
    maxima: dict[str, list[int]] = {"t": [-1, -1], "a": [-1, -1], "v": [-1, -1]}
    for col in header[2:]:
        m = pattern.match(col)
        if not m:
            raise ValidationError(f"unrecognized CSV column {col!r}")
        p, i, j = m.group(1), int(m.group(2)), int(m.group(3))
        maxima[p][0] = max(maxima[p][0], i)
        maxima[p][1] = max(maxima[p][1], j)
    shapes = {}
    for name, prefix in _CSV_PREFIX.items():
        n, d = maxima[prefix][0] + 1, maxima[prefix][1] + 1
        if n < 1 or d < 1:
            raise ValidationError(f"CSV header declares no {name} columns")
        shapes[name] = (n, d)
    return shapes


def load_dataset(path, format: str = "json") -> list[UtteranceTriplet]:
    """Read a dataset written by :func:`save_dataset`.

    Out-of-range labels are rejected (never clamped), with the offending
    record index in the message.
    """
    if format == "json":
        with open(path) as fh:
            try:
                records = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"JSON parse failure: {exc}") from exc
        if not isinstance(records, list):
            raise ValidationError("expected a top-level JSON array")
        return [_triplet_from_json(obj, i) for i, obj in enumerate(records)]
    if format != "csv":
        raise ConfigurationError(f"unknown dataset format {format!r}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError("empty CSV file") from None
        if header[:2] != ["id", "label"]:
            raise ValidationError("CSV must start with columns id,label")
        shapes = _csv_shapes(header)
        expected = 2 + sum(n * d for n, d in shapes.values())
        samples = []
        for row_idx, row in enumerate(reader, start=1):
            if len(row) != expected:
                raise ValidationError(
                    f"row {row_idx}: expected {expected} fields, got {len(row)}"
                )
            try:
                label = float(row[1])
            except ValueError:
                raise ValidationError(f"row {row_idx}: bad label {row[1]!r}") from None
            if not (LABEL_MIN <= label <= LABEL_MAX):
                raise ValidationError(
                    f"row {row_idx}: label {label} outside "
                    f"[{LABEL_MIN}, {LABEL_MAX}]"
                )
            offset = 2
            blocks = {}
            try:
                for name in ("text", "audio", "vision"):
                    n, d = shapes[name]
                    flat = np.array(row[offset : offset + n * d], dtype=np.float64)
                    blocks[name] = flat.reshape(n, d)
                    offset += n * d
            except ValueError as exc:
                raise ValidationError(f"row {row_idx}: {exc}") from exc
            samples.append(
                UtteranceTriplet(
                    id=row[0],
                    text=ModalitySequence(Modality.TEXT, blocks["text"]),
                    audio=ModalitySequence(Modality.AUDIO, blocks["audio"]),
                    vision=ModalitySequence(Modality.VISION, blocks["vision"]),
                    label=label,
                )
            )
        return samples
