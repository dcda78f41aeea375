"""Command-line entry points: synth, train, eval, ablate, grid,
export-embeddings.

Exit codes: 0 success, 1 runtime/data error, 2 usage or config error.
Everything except paths and seed overrides lives in the YAML config file.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import data as data_mod
from . import trainer as trainer_mod
from .config import from_plain, load_config_file
from .data import SynthSpec, generate_synthetic_dataset, load_dataset, save_dataset
from .errors import ConfigurationError, MmclError
from .metrics import REPORT_KEYS
from .trainer import Checkpoint, TrainConfig, apply_thread_cap


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_section(config_path: str, section: str, cls):
    try:
        doc = load_config_file(config_path)
        return from_plain(cls, doc.get(section, {}), path=section)
    except ConfigurationError as exc:
        _fail(str(exc), 2)


def _dataset_format(path: str) -> str:
    return "csv" if str(path).endswith(".csv") else "json"


def _read_dataset(path: str):
    if not Path(path).exists():
        _fail(f"data file not found: {path}", 1)
    try:
        return load_dataset(path, format=_dataset_format(path))
    except MmclError as exc:
        _fail(str(exc), 1)


def _split_for_run(dataset, config: TrainConfig, seed: int):
    return data_mod.split_dataset(dataset, (0.8, 0.1, 0.1), seed=seed)


@click.group()
def main():
    """MMCL: multimodal contrastive learning at desk scale."""
    apply_thread_cap()


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="Override synth seed.")
def synth(config_path, out_path, seed):
    """Generate a synthetic dataset from the `synth` config section."""
    spec = _load_section(config_path, "synth", SynthSpec)
    if seed is not None:
        spec.seed = seed
    try:
        spec.validate()
    except ConfigurationError as exc:
        _fail(str(exc), 2)
    samples = generate_synthetic_dataset(spec)
    save_dataset(samples, out_path, format=_dataset_format(out_path))
    labels = np.array([s.label for s in samples])
    click.echo(
        f"wrote {len(samples)} samples to {out_path} "
        f"(label mean {labels.mean():+.3f}, std {labels.std():.3f})"
    )


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", "seeds", type=int, multiple=True, help="Seed override(s).")
def train(config_path, data_path, out_dir, seeds):
    """Train on a dataset file; writes checkpoint, trace CSV, metrics JSON."""
    config = _load_section(config_path, "train", TrainConfig)
    if seeds:
        config.seeds = tuple(seeds)
    try:
        config.validate()
    except ConfigurationError as exc:
        _fail(str(exc), 2)
    dataset = _read_dataset(data_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_seed = {key: [] for key in REPORT_KEYS}
    try:
        for seed in config.seeds:
            train_set, val_set, test_set = _split_for_run(dataset, config, seed)
            checkpoint, trace = trainer_mod.train(config, train_set, val_set, seed=seed)
            report = trainer_mod.evaluate(checkpoint, test_set or val_set)
            suffix = f"-seed{seed}" if len(config.seeds) > 1 else ""
            checkpoint.save(out / f"checkpoint{suffix}.mmcl")
            trace.write_csv(out / f"trace{suffix}.csv")
            report.save_json(out / f"metrics{suffix}.json")
            for key in REPORT_KEYS:
                per_seed[key].append(getattr(report, key))
            click.echo(
                f"seed {seed}: best epoch {checkpoint.epoch}, "
                f"val_reg {checkpoint.val_reg:.4f}, test mae {report.mae:.4f}"
            )
    except MmclError as exc:
        _fail(str(exc), 1)
    if len(config.seeds) > 1:
        summary = {
            key: {
                "mean": float(np.mean(values)),
                "std": float(np.std(values)),
            }
            for key, values in per_seed.items()
        }
        with open(out / "metrics-summary.json", "w") as fh:
            json.dump(summary, fh, indent=2)
        click.echo(
            "mean over seeds: "
            + ", ".join(f"{k}={v['mean']:.4f}±{v['std']:.4f}" for k, v in summary.items())
        )


@main.command("eval")
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path())
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
def eval_cmd(ckpt_path, data_path, out_path):
    """Evaluate a checkpoint on a dataset file; writes metrics JSON."""
    if not Path(ckpt_path).exists():
        _fail(f"checkpoint not found: {ckpt_path}", 1)
    dataset = _read_dataset(data_path)
    try:
        checkpoint = Checkpoint.load(ckpt_path)
        report = trainer_mod.evaluate(checkpoint, dataset)
    except MmclError as exc:
        _fail(str(exc), 1)
    report.save_json(out_path)
    click.echo(json.dumps(report.as_dict(), indent=2))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option(
    "--suite", required=True, type=click.Choice(["losses", "modalities", "weights"])
)
@click.option("--out", "out_path", required=True, type=click.Path())
def ablate(config_path, data_path, suite, out_path):
    """Run an ablation suite; writes a results CSV."""
    config = _load_section(config_path, "train", TrainConfig)
    try:
        config.validate()
    except ConfigurationError as exc:
        _fail(str(exc), 2)
    dataset = _read_dataset(data_path)
    train_set, val_set, test_set = _split_for_run(dataset, config, config.seeds[0])
    try:
        rows = trainer_mod.ablate(config, suite, train_set, val_set, test_set)
    except MmclError as exc:
        _fail(str(exc), 1)
    trainer_mod.write_results_csv(rows, out_path)
    click.echo(f"wrote {len(rows)} rows to {out_path}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
def grid(config_path, data_path, out_path):
    """Grid search over the `grid` config section (dotted train-config keys)."""
    config = _load_section(config_path, "train", TrainConfig)
    try:
        config.validate()
        doc = load_config_file(config_path)
    except ConfigurationError as exc:
        _fail(str(exc), 2)
    grid_spec = doc.get("grid")
    if not isinstance(grid_spec, dict) or not grid_spec:
        _fail("config must hold a non-empty `grid` mapping", 2)
    dataset = _read_dataset(data_path)
    train_set, val_set, _ = _split_for_run(dataset, config, config.seeds[0])
    try:
        results = trainer_mod.grid_search(config, grid_spec, train_set, val_set)
    except MmclError as exc:
        _fail(str(exc), 1)
    with open(out_path, "w") as fh:
        json.dump(results, fh, indent=2)
    best = results[0]
    click.echo(
        f"{len(results)} configurations; best val_reg {best['val_reg']:.4f} "
        f"at {best['overrides']}"
    )


@main.command("export-embeddings")
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path())
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
def export_embeddings(ckpt_path, data_path, out_path):
    """Dump fused multimodal representations for external visualization."""
    if not Path(ckpt_path).exists():
        _fail(f"checkpoint not found: {ckpt_path}", 1)
    dataset = _read_dataset(data_path)
    try:
        checkpoint = Checkpoint.load(ckpt_path)
        trainer_mod.export_embeddings(checkpoint, dataset, out_path)
    except MmclError as exc:
        _fail(str(exc), 1)
    click.echo(f"wrote {len(dataset)} embedding rows to {out_path}")


if __name__ == "__main__":
    main()
