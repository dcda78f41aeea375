"""Training harness: schedules, tracing, checkpoints, determinism,
grid search, ablation suites, gradient checking."""

import csv
import math

import pytest
import torch

from mmcl.data import Batch, SynthSpec, generate_synthetic_dataset, split_dataset
from mmcl.errors import (
    ConfigurationError,
    TrainingDivergedError,
    ValidationError,
)
from mmcl.losses import PairingPhase
from mmcl.model import LossFlags, MmclModel, ModalityMask, collate
from mmcl.trainer import (
    Checkpoint,
    MODALITY_SETTINGS,
    TrainConfig,
    WEIGHT_SWEEP,
    ablate,
    enabled_loss_names,
    evaluate,
    export_embeddings,
    gradient_check,
    grid_search,
    pairing_phases,
    train,
    warmup_factor,
    write_results_csv,
)

from conftest import small_model_config


def tiny_config(**overrides) -> TrainConfig:
    cfg = TrainConfig(
        epochs=2,
        batch_size=8,
        model=small_model_config(),
        trace_interval=2,
    )
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


@pytest.fixture(scope="module")
def datasets():
    data = generate_synthetic_dataset(SynthSpec(num_samples=32, seed=0))
    return split_dataset(data, (0.75, 0.125, 0.125), seed=0)


class TestWarmup:
    def test_linear_then_constant(self):
        steps = 10
        for s in range(1, 25):
            expected = min(1.0, s / steps)
            assert abs(warmup_factor(s, steps) - expected) < 1e-12

    def test_no_warmup(self):
        assert warmup_factor(1, 0) == 1.0

    def test_reaches_one_exactly(self):
        assert warmup_factor(10, 10) == 1.0


class TestPairingSchedule:
    def test_curriculum_thirds(self):
        cfg = tiny_config()
        total = 90
        assert pairing_phases(0, total, cfg) == [PairingPhase.ORIGIN_ORIGIN]
        assert pairing_phases(29, total, cfg) == [PairingPhase.ORIGIN_ORIGIN]
        assert pairing_phases(30, total, cfg) == [PairingPhase.PREDICT_PREDICT]
        assert pairing_phases(59, total, cfg) == [PairingPhase.PREDICT_PREDICT]
        assert pairing_phases(60, total, cfg) == [PairingPhase.ORIGIN_PREDICT]
        assert pairing_phases(89, total, cfg) == [PairingPhase.ORIGIN_PREDICT]

    def test_averaged_mode(self):
        cfg = tiny_config(pairing_mode="averaged")
        assert pairing_phases(0, 90, cfg) == list(PairingPhase)

    def test_custom_boundaries(self):
        cfg = tiny_config(pairing_boundaries=(0.5, 0.5))
        assert pairing_phases(0, 10, cfg) == [PairingPhase.ORIGIN_ORIGIN]
        assert pairing_phases(5, 10, cfg) == [PairingPhase.ORIGIN_PREDICT]


class TestConfigValidation:
    def test_bad_batch_size(self):
        with pytest.raises(ConfigurationError):
            tiny_config(batch_size=1).validate()

    def test_bad_pairing_mode(self):
        with pytest.raises(ConfigurationError):
            tiny_config(pairing_mode="random").validate()

    def test_bad_boundaries(self):
        with pytest.raises(ConfigurationError):
            tiny_config(pairing_boundaries=(0.7, 0.3)).validate()

    def test_empty_seeds(self):
        with pytest.raises(ConfigurationError):
            tiny_config(seeds=()).validate()


class TestEnabledLossNames:
    def test_full(self):
        assert enabled_loss_names(LossFlags()) == [
            "reg", "uni", "sent", "cross", "align", "uniform",
        ]

    def test_no_contrast(self):
        assert enabled_loss_names(LossFlags(disable_all_contrast=True)) == ["reg"]

    def test_icl(self):
        assert enabled_loss_names(LossFlags(disable_icl=True)) == [
            "reg", "uni", "sent",
        ]


class TestTraining:
    def test_trace_rows(self, datasets):
        train_set, val_set, _ = datasets
        cfg = tiny_config()
        _, trace = train(cfg, train_set, val_set, seed=0)
        # 24 train samples, batch 8 -> 3 steps/epoch, 6 total steps,
        # interval 2 -> 3 windows x 6 loss names.
        steps = sorted({s for s, _, _ in trace.entries})
        assert steps == [2, 4, 6]
        assert trace.names() == {"reg", "uni", "sent", "cross", "align", "uniform"}
        assert len(trace.entries) == 18

    def test_trace_respects_flags(self, datasets):
        train_set, val_set, _ = datasets
        cfg = tiny_config(flags=LossFlags(disable_all_contrast=True))
        _, trace = train(cfg, train_set, val_set, seed=0)
        assert trace.names() == {"reg"}

    def test_all_trace_values_finite(self, datasets):
        train_set, val_set, _ = datasets
        _, trace = train(tiny_config(), train_set, val_set, seed=1)
        assert all(math.isfinite(v) for _, _, v in trace.entries)

    def test_checkpoint_metadata(self, datasets):
        train_set, val_set, _ = datasets
        cfg = tiny_config()
        ckpt, _ = train(cfg, train_set, val_set, seed=0)
        assert 0 <= ckpt.epoch < cfg.epochs
        assert math.isfinite(ckpt.val_reg)
        assert len(ckpt.config_hash) == 16

    def test_deterministic_same_seed(self, datasets):
        train_set, val_set, _ = datasets
        cfg = tiny_config()
        c1, t1 = train(cfg, train_set, val_set, seed=3)
        c2, t2 = train(cfg, train_set, val_set, seed=3)
        assert t1.entries == t2.entries
        for key in c1.model_state:
            assert torch.equal(c1.model_state[key], c2.model_state[key])

    def test_different_seeds_differ(self, datasets):
        train_set, val_set, _ = datasets
        cfg = tiny_config()
        _, t1 = train(cfg, train_set, val_set, seed=0)
        _, t2 = train(cfg, train_set, val_set, seed=1)
        assert t1.entries != t2.entries

    def test_divergence_reported(self, datasets):
        train_set, val_set, _ = datasets
        cfg = tiny_config(lr_other=1e200, epochs=3, warmup_frac=0.0)
        with pytest.raises(TrainingDivergedError):
            train(cfg, train_set, val_set, seed=0)

    def test_empty_sets_rejected(self, datasets):
        train_set, val_set, _ = datasets
        with pytest.raises(ValidationError):
            train(tiny_config(), [], val_set)
        with pytest.raises(ValidationError):
            train(tiny_config(), train_set, [])


class TestCheckpointIO:
    def test_round_trip_bit_identical_forward(self, datasets, tmp_path):
        train_set, val_set, _ = datasets
        ckpt, _ = train(tiny_config(), train_set, val_set, seed=0)
        path = tmp_path / "model.mmcl"
        ckpt.save(path)
        loaded = Checkpoint.load(path)
        assert loaded.config_hash == ckpt.config_hash
        assert loaded.epoch == ckpt.epoch
        assert loaded.val_reg == ckpt.val_reg

        m1, _ = ckpt.build_model()
        m2, _ = loaded.build_model()
        t, a, v, _ = collate(Batch(val_set))
        m1.eval(), m2.eval()
        with torch.no_grad():
            assert torch.equal(m1(t, a, v).predictions, m2(t, a, v).predictions)

    def test_magic_checked(self, tmp_path):
        path = tmp_path / "bogus.mmcl"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
        with pytest.raises(ValidationError, match="checkpoint"):
            Checkpoint.load(path)

    def test_state_config_mismatch(self, datasets, tmp_path):
        train_set, val_set, _ = datasets
        ckpt, _ = train(tiny_config(), train_set, val_set, seed=0)
        ckpt.config["model"]["cmcp"]["cnn_channels"] = 99
        with pytest.raises(ValidationError, match="mismatch"):
            ckpt.build_model()


class TestEvaluate:
    def test_report_keys_finite(self, datasets):
        train_set, val_set, test_set = datasets
        ckpt, _ = train(tiny_config(), train_set, val_set, seed=0)
        report = evaluate(ckpt, test_set)
        for value in report.as_dict().values():
            assert math.isfinite(value)

    def test_eval_deterministic(self, datasets):
        train_set, val_set, test_set = datasets
        ckpt, _ = train(tiny_config(), train_set, val_set, seed=0)
        assert evaluate(ckpt, test_set).as_dict() == evaluate(ckpt, test_set).as_dict()


class TestExportEmbeddings:
    def test_csv_shape(self, datasets, tmp_path):
        train_set, val_set, _ = datasets
        ckpt, _ = train(tiny_config(), train_set, val_set, seed=0)
        path = tmp_path / "emb.csv"
        export_embeddings(ckpt, val_set, path)
        rows = list(csv.reader(path.open()))
        assert rows[0][:3] == ["id", "label", "class"]
        assert len(rows[0]) == 3 + 16  # fusion_dim columns
        assert len(rows) == 1 + len(val_set)
        classes = {r[2] for r in rows[1:]}
        assert classes <= {"positive", "neutral", "negative"}


class TestGridSearch:
    def test_ranked_results(self, datasets):
        train_set, val_set, _ = datasets
        cfg = tiny_config(epochs=1)
        grid = {"weights.mu": [0.4, 0.9], "lr_other": [5e-3]}
        rows = grid_search(cfg, grid, train_set, val_set)
        assert len(rows) == 2
        vals = [r["val_reg"] for r in rows]
        assert vals == sorted(vals)
        assert {r["overrides"]["weights.mu"] for r in rows} == {0.4, 0.9}

    def test_empty_grid_rejected(self, datasets):
        train_set, val_set, _ = datasets
        with pytest.raises(ConfigurationError):
            grid_search(tiny_config(), {}, train_set, val_set)

    def test_unknown_key_rejected(self, datasets):
        train_set, val_set, _ = datasets
        with pytest.raises(ConfigurationError, match="weights.muu"):
            grid_search(tiny_config(), {"weights.muu": [0.5]}, train_set, val_set)


class TestAblationSuites:
    def test_sweep_values_are_reference_sets(self):
        assert WEIGHT_SWEEP["mu"] == (0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
        assert WEIGHT_SWEEP["eta"] == (0.4, 0.6, 0.8, 1.0, 1.2, 1.4)
        assert WEIGHT_SWEEP["alpha"] == (0.4, 0.6, 0.8, 1.0, 1.2, 1.4)

    def test_modality_suite_has_seven_settings(self):
        names = [name for name, _ in MODALITY_SETTINGS]
        assert names == ["a", "v", "t", "a+v", "t+a", "t+v", "t+a+v"]
        masks = [m for _, m in MODALITY_SETTINGS]
        assert all(isinstance(m, ModalityMask) for m in masks)
        combos = {(m.use_text, m.use_audio, m.use_vision) for m in masks}
        assert len(combos) == 7

    def test_losses_suite_rows(self, datasets):
        train_set, val_set, test_set = datasets
        cfg = tiny_config(epochs=1)
        rows = ablate(cfg, "losses", train_set, val_set, test_set)
        assert [name for name, _ in rows] == [
            "full", "rp_transformer", "wo_uni", "wo_icl", "wo_cross",
            "wo_align", "wo_uniform", "wo_scl", "no_contrast",
        ]

    def test_modalities_suite_rows(self, datasets):
        train_set, val_set, test_set = datasets
        cfg = tiny_config(epochs=1)
        rows = ablate(cfg, "modalities", train_set, val_set, test_set)
        assert len(rows) == 7

    def test_unknown_suite(self, datasets):
        train_set, val_set, _ = datasets
        with pytest.raises(ConfigurationError):
            ablate(tiny_config(), "optimizers", train_set, val_set)

    def test_results_csv_header(self, datasets, tmp_path):
        train_set, val_set, test_set = datasets
        cfg = tiny_config(epochs=1)
        rows = ablate(cfg, "modalities", train_set, val_set, test_set)
        path = tmp_path / "results.csv"
        write_results_csv(rows, path)
        parsed = list(csv.reader(path.open()))
        assert parsed[0] == [
            "setting", "acc7", "acc2_has0", "acc2_non0",
            "f1_has0", "f1_non0", "mae", "corr",
        ]
        assert len(parsed) == 8


class TestGradientCheck:
    def test_full_model_sampled_params(self, datasets):
        train_set, _, _ = datasets
        torch.manual_seed(0)
        model = MmclModel(small_model_config())
        batch = Batch(train_set[:4])
        rel = gradient_check(model, batch, param_sample_size=20, step=1e-5)
        assert rel < 1e-3

    def test_regression_only(self, datasets):
        # The absolute-error term is piecewise linear, so finite
        # differences near a kink dominate the error budget.
        train_set, _, _ = datasets
        torch.manual_seed(1)
        model = MmclModel(small_model_config())
        batch = Batch(train_set[:4])
        rel = gradient_check(
            model,
            batch,
            param_sample_size=20,
            step=1e-5,
            flags=LossFlags(disable_all_contrast=True),
        )
        assert rel < 1e-3

    def test_zero_step_rejected(self, datasets):
        train_set, _, _ = datasets
        model = MmclModel(small_model_config())
        with pytest.raises(ValidationError):
            gradient_check(Batch(train_set[:4]) and model, Batch(train_set[:4]),
                           param_sample_size=5, step=0.0)

    def test_parameters_restored(self, datasets):
        train_set, _, _ = datasets
        torch.manual_seed(2)
        model = MmclModel(small_model_config())
        before = [p.detach().clone() for p in model.parameters()]
        gradient_check(model, Batch(train_set[:4]), param_sample_size=5, step=1e-5)
        for orig, now in zip(before, model.parameters()):
            assert torch.equal(orig, now.detach())
