"""Multimodal contrastive learning (MMCL) at desk scale.

Uni-modal contrastive coding with feature-cutoff augmentation, a
pseudo-siamese cross-modal predictive network, five contrastive /
regression objectives, sentiment metrics, and a deterministic training
harness over synthetic multimodal data.
"""

from .cmcp import Branch, CmcpNetwork, CmcpParams, CrossModalBundle
from .data import (
    Batch,
    Modality,
    ModalitySequence,
    SentimentClass,
    SynthSpec,
    UtteranceTriplet,
    batch_iterator,
    generate_synthetic_dataset,
    load_dataset,
    save_dataset,
    sentiment_class,
    split_dataset,
)
from .errors import (
    ConfigurationError,
    DegenerateBatchError,
    MmclError,
    NumericalError,
    TrainingDivergedError,
    ValidationError,
)
from .head import HeadParams, MultimodalHead
from .losses import (
    LossBreakdown,
    LossWeights,
    PairingPhase,
    alignment_loss,
    cross_instance_loss,
    info_nce,
    l2_normalize,
    regression_loss,
    sentiment_contrastive_loss,
    total_loss,
    uniformity_loss,
)
from .metrics import MetricsReport, acc2_f1, acc7, compute_report, mae, pearson_corr
from .model import (
    LossFlags,
    MmclModel,
    ModalityMask,
    ModelConfig,
    collate,
    compute_losses,
)
from .trainer import (
    Checkpoint,
    TraceLog,
    TrainConfig,
    ablate,
    evaluate,
    gradient_check,
    grid_search,
    train,
)
from .umcc import (
    BiLstmEncoder,
    EncoderParams,
    TextEncoder,
    UniModalEncoding,
    UnimodalTransformer,
    feature_cutoff,
    pool_time,
    unimodal_instance_loss,
)

__version__ = "0.1.0"
