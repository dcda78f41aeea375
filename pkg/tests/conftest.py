import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from mmcl.cmcp import CmcpParams
from mmcl.head import HeadParams
from mmcl.model import ModelConfig
from mmcl.umcc import EncoderParams


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)


def small_model_config(**overrides) -> ModelConfig:
    """Desk-scale model dims matching the default SynthSpec shapes."""
    cfg = ModelConfig(
        encoder=EncoderParams(
            text_input_dim=12,
            text_model_dim=16,
            audio_input_dim=16,
            vision_input_dim=16,
            bilstm_hidden_dim=8,
        ),
        cmcp=CmcpParams(
            common_dim=16,
            fusion_hidden_dim=16,
            cnn_channels=24,
            autoregressive_hidden_dim=12,
        ),
        head=HeadParams(fusion_dim=16, fusion_hidden_dim=16),
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Replay the acceptance-criterion verdict lines after the run."""
    try:
        from test_acceptance import REPORTED_LINES
    except ImportError:
        return
    if REPORTED_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(REPORTED_LINES):
            terminalreporter.write_line(line)
