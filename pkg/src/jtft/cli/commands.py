"""Command implementations. Each returns 0 on success and raises JtftError otherwise."""

from __future__ import annotations

import logging
import statistics
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from jtft.constants import (
    CHECKPOINT_NAME,
    EXIT_OK,
    GRADCHECK_H,
    GRADCHECK_TOL,
    METRICS_NAME,
    RNDF_SEEDS,
    SUBSEQUENCE_LEN,
)
from jtft.cli.config import ExperimentConfig, load_experiment
from jtft.cli.output import format_table, write_jsonl, write_table
from jtft.core.errors import ConfigError, DataError, GradcheckError
from jtft.core.functional import mse_loss
from jtft.core.gradcheck import GradcheckReport, finite_diff_gradcheck
from jtft.core.reconstruction import reconstruction_benchmark
from jtft.core.tensor import Tape, Tensor, backward
from jtft.core.trainer import (
    MetricsReport,
    TrainResult,
    config_fingerprint,
    evaluate,
    naive_baseline,
    train,
)
from jtft.data.dataset import (
    Dataset,
    DatasetSplits,
    SplitSpec,
    load_csv_dataset,
    split_dataset,
)
from jtft.models.checkpoint import load_checkpoint, save_checkpoint
from jtft.models.config import ModelConfig
from jtft.models.jtft import STAGES, JTFTModel

logger = logging.getLogger("jtft.cli")

GRADCHECK_PRESETS: dict[str, ModelConfig] = {
    "tiny": ModelConfig(
        lookback=32,
        horizon=4,
        channels=3,
        patch_len=4,
        stride=2,
        n_t=4,
        n_f=3,
        d_m=8,
        heads=2,
        encoder_layers=1,
        lra_layers=1,
        d_r=2,
        dropout=0.0,
    ),
}
PARAM_GROUPS = (
    ("frequencies.", "psi"),
    ("encoder.embedding.", "embedding"),
    ("encoder.position", "embedding"),
    ("encoder.layers.", "encoder"),
    ("lra.", "lra"),
    ("head.", "head"),
)
SCALE_BENCH_LENGTHS = (256, 512, 1024, 2048)
ABLATION_VARIANTS = ("PatchS", "PatchS+JTFR", "JTFT")


# --- Training and evaluation ---


@dataclass
class TrainingRun:
    dataset: Dataset
    splits: DatasetSplits
    model: JTFTModel
    result: TrainResult
    test: MetricsReport
    fingerprint: str


def _load_for(exp: ExperimentConfig) -> Dataset:
    if not exp.dataset.path:
        raise DataError("dataset.path is required")
    return load_csv_dataset(exp.dataset.path, max_rows=exp.dataset.max_rows)


def _run_training(
    exp: ExperimentConfig, model_cfg: ModelConfig, dataset: Dataset, raw_scale: bool
) -> TrainingRun:
    model_cfg = replace(model_cfg, channels=dataset.num_channels)
    train_cfg = exp.train_config()
    split = exp.dataset.split_for(dataset.name)
    splits = split_dataset(dataset, split, model_cfg.lookback, model_cfg.horizon)
    fingerprint = config_fingerprint(
        model_cfg,
        train_cfg,
        dataset=dataset.name,
        split=list(split.ratios),
        max_rows=exp.dataset.max_rows,
    )
    model = JTFTModel(model_cfg, seed=exp.seed)
    result = train(model, splits, train_cfg, dataset=dataset.name, fingerprint=fingerprint)
    test = evaluate(
        model,
        splits.test,
        dataset=dataset.name,
        raw_scale=raw_scale,
        standardizer=splits.standardizer,
        epoch=result.best_epoch,
        fingerprint=fingerprint,
    )
    baseline = naive_baseline(
        splits.test, model_cfg.lookback, model_cfg.horizon, dataset=dataset.name
    )
    logger.info(
        "%s T=%d test mse %.6f mae %.6f (repeat-last-value mse %.6f)",
        dataset.name,
        model_cfg.horizon,
        test.mse,
        test.mae,
        baseline.mse,
    )
    return TrainingRun(dataset, splits, model, result, test, fingerprint)


def cmd_train(
    config_path: str | Path | None,
    overrides: list[str] | None = None,
    raw_scale: bool = False,
) -> int:
    """Train, evaluate on the test split, and write checkpoint plus metrics."""
    exp = load_experiment(config_path, overrides)
    dataset = _load_for(exp)
    run = _run_training(exp, exp.model, dataset, raw_scale)

    out = Path(exp.output_dir)
    save_checkpoint(
        out / CHECKPOINT_NAME,
        run.model,
        extras={
            "dataset": dataset.name,
            "split_ratios": list(exp.dataset.split_for(dataset.name).ratios),
            "max_rows": exp.dataset.max_rows,
            "seed": exp.seed,
            "fingerprint": run.fingerprint,
            "best_epoch": run.result.best_epoch,
            "test_mse": run.test.mse,
            "test_mae": run.test.mae,
        },
    )
    records = [r.to_record() for r in run.result.history] + [run.test.to_record()]
    write_jsonl(out / METRICS_NAME, records)
    print(
        f"test mse={run.test.mse:.6f} mae={run.test.mae:.6f} "
        f"(best epoch {run.result.best_epoch})"
    )
    return EXIT_OK


def cmd_eval(
    checkpoint: str | Path,
    dataset_path: str | Path,
    horizon: int,
    raw_scale: bool = False,
    output: str | Path | None = None,
) -> int:
    """Score a checkpoint on the test split of a dataset."""
    model, extras = load_checkpoint(checkpoint)
    cfg = model.cfg
    dataset = load_csv_dataset(dataset_path, max_rows=extras.get("max_rows"))
    if dataset.num_channels != cfg.channels:
        raise DataError(
            f"Dataset {dataset.name} has {dataset.num_channels} channels, "
            f"checkpoint expects {cfg.channels}"
        )
    ratios = extras.get("split_ratios")
    spec = SplitSpec(tuple(ratios)) if ratios else SplitSpec.for_dataset(dataset.name)
    splits = split_dataset(dataset, spec, cfg.lookback, horizon)
    if horizon != cfg.horizon:
        raise ConfigError(f"Checkpoint predicts {cfg.horizon} steps, --horizon asked for {horizon}")
    report = evaluate(
        model,
        splits.test,
        dataset=dataset.name,
        raw_scale=raw_scale,
        standardizer=splits.standardizer,
        epoch=extras.get("best_epoch"),
        fingerprint=extras.get("fingerprint", ""),
    )
    target = Path(output) if output else Path(checkpoint).with_name("eval.jsonl")
    write_jsonl(target, [report.to_record()])
    print(f"test mse={report.mse:.6f} mae={report.mae:.6f}")
    return EXIT_OK


# --- Reconstruction benchmark ---


def cmd_reconstruct_bench(
    dataset_path: str | Path,
    k_max_list: tuple[int, ...] = (4, 8, 16),
    subsequence_length: int = SUBSEQUENCE_LEN,
    seeds: int = RNDF_SEEDS,
    *,
    output_dir: str | Path = "runs/reconstruction",
    max_rows: int | None = None,
    lrnf_steps: int | None = None,
    seed: int = 0,
) -> int:
    """LRNF / RNDF / TOPF reconstruction error for each k_max."""
    dataset = load_csv_dataset(dataset_path, max_rows=max_rows)
    kwargs = {"lrnf_steps": lrnf_steps} if lrnf_steps is not None else {}
    reports = reconstruction_benchmark(
        dataset.values, subsequence_length, tuple(k_max_list), seeds, seed=seed, **kwargs
    )
    out = Path(output_dir)
    write_jsonl(out / "reconstruction.jsonl", [r for report in reports for r in report.records()])
    rows = [report.table_row() for report in reports]
    write_table(out / "reconstruction.csv", rows, ["method", "k_max", "nmse", "std"])
    print(format_table(rows, ["method", "k_max", "nmse", "std"]))
    return EXIT_OK


# --- Gradient check ---


def _group_of(name: str) -> str:
    for prefix, group in PARAM_GROUPS:
        if name.startswith(prefix):
            return group
    return "other"


def run_model_gradcheck(
    cfg: ModelConfig,
    *,
    h: float = GRADCHECK_H,
    tol: float = GRADCHECK_TOL,
    seed: int = 0,
) -> tuple[GradcheckReport, dict[str, float]]:
    """Finite-difference check of the MSE loss against every model parameter."""
    rng = np.random.default_rng(seed)
    model = JTFTModel(cfg, seed=seed)
    x = Tensor(rng.normal(size=(cfg.channels, cfg.lookback)))
    y = Tensor(rng.normal(size=(cfg.channels, cfg.horizon)))
    # move ψ off the grid so the frequency gradient is exercised away from k/M
    if model.frequencies is not None:
        psi = model.frequencies.psi.data
        psi[1:] += rng.uniform(0.1, 0.4, psi.size - 1) / cfg.patch_count
        model.constrain_frequencies()

    named = list(model.named_parameters())
    report = finite_diff_gradcheck(
        lambda: mse_loss(model.forward(x, training=False), y),
        [p for _, p in named],
        h,
        tol,
        names=[name for name, _ in named],
        rng=rng,
    )
    groups: dict[str, float] = {}
    for name, err in report.per_param.items():
        group = _group_of(name)
        groups[group] = max(groups.get(group, 0.0), err)
    return report, groups


def cmd_gradcheck(preset: str = "tiny", h: float = GRADCHECK_H, tol: float = GRADCHECK_TOL) -> int:
    if preset not in GRADCHECK_PRESETS:
        raise ConfigError(
            f"Unknown gradcheck preset {preset!r}; choose from {sorted(GRADCHECK_PRESETS)}"
        )
    report, groups = run_model_gradcheck(GRADCHECK_PRESETS[preset], h=h, tol=tol)
    for group, err in groups.items():
        print(f"{group:<10} max rel err {err:.3e}")
    print(f"checked {report.checked} coordinates, max rel err {report.max_rel_error:.3e}")
    if not report.passed:
        worst = report.worst
        raise GradcheckError(
            f"Gradient check failed: {worst.param}{list(worst.index)} "
            f"rel err {worst.rel_error:.3e}",
            f"analytic={worst.analytic!r} numeric={worst.numeric!r} "
            f"failures={len(report.failures)}",
        )
    return EXIT_OK


# --- Scaling benchmark ---


def r_squared(xs: np.ndarray, ys: np.ndarray, slope: float, intercept: float) -> float:
    residual = ys - (slope * xs + intercept)
    total = float(np.sum((ys - ys.mean()) ** 2))
    return 1.0 - float(np.sum(residual**2)) / total if total > 0 else 1.0


def scale_benchmark(
    lengths: tuple[int, ...] = SCALE_BENCH_LENGTHS,
    repeats: int = 5,
    *,
    base: ModelConfig | None = None,
    batch_size: int = 8,
    seed: int = 0,
) -> tuple[list[dict], dict]:
    """Median forward+backward time per look-back with everything else fixed."""
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    base = base or ModelConfig(channels=7, d_m=64, heads=4, encoder_layers=2)
    rng = np.random.default_rng(seed)
    configs = [replace(base, lookback=length) for length in lengths]
    records = []
    for cfg in configs:
        length = cfg.lookback
        model = JTFTModel(cfg, seed=seed)
        params = model.parameters()
        x = Tensor(rng.normal(size=(batch_size, cfg.channels, length)))
        y = Tensor(rng.normal(size=(batch_size, cfg.channels, cfg.horizon)))
        totals, stages = [], {stage: [] for stage in STAGES}
        for _ in range(repeats):
            timings: dict[str, float] = {}
            start = time.perf_counter()
            with Tape() as tape:
                loss = mse_loss(model.forward(x, timings=timings), y)
            backward(loss, tape)
            totals.append(time.perf_counter() - start)
            for p in params:
                p.grad = None
            for stage in STAGES:
                stages[stage].append(timings.get(stage, 0.0))
        record = {
            "lookback": length,
            "patches": cfg.patch_count,
            "L_hat": cfg.seq_len,
            "median_ms": statistics.median(totals) * 1000.0,
        }
        record.update({f"{stage}_ms": statistics.median(v) * 1000.0 for stage, v in stages.items()})
        records.append(record)
        logger.info("L=%d L_hat=%d median %.2f ms", length, cfg.seq_len, record["median_ms"])

    xs = np.array([r["lookback"] for r in records], dtype=np.float64)
    ys = np.array([r["median_ms"] for r in records])
    if len(records) >= 2:
        slope, intercept = np.polyfit(xs, ys, 1)
        fit = {"slope_ms_per_step": float(slope), "intercept_ms": float(intercept)}
        fit["r2"] = r_squared(xs, ys, slope, intercept)
    else:
        fit = {"slope_ms_per_step": None, "intercept_ms": None, "r2": None}
    return records, fit


def cmd_scalebench(
    lengths: tuple[int, ...] = SCALE_BENCH_LENGTHS,
    repeats: int = 5,
    *,
    output_dir: str | Path = "runs/scalebench",
    seed: int = 0,
) -> int:
    records, fit = scale_benchmark(tuple(lengths), repeats, seed=seed)
    write_jsonl(Path(output_dir) / "scalebench.jsonl", [*records, {"fit": fit}])
    print(format_table(records, ["lookback", "L_hat", "median_ms", *[f"{s}_ms" for s in STAGES]]))
    if fit["r2"] is not None:
        print(
            f"time ≈ {fit['slope_ms_per_step']:.4f}·L + {fit['intercept_ms']:.2f} ms, "
            f"R²={fit['r2']:.4f}"
        )
    return EXIT_OK


# --- Ablation ---


def ablation_configs(cfg: ModelConfig) -> dict[str, ModelConfig]:
    """PatchS (no frequency part, no LRA), PatchS+JTFR (no LRA) and the full model."""
    return {
        "PatchS": replace(cfg, n_f=0, lra_layers=0),
        "PatchS+JTFR": replace(cfg, lra_layers=0),
        "JTFT": cfg if cfg.lra_layers > 0 else replace(cfg, lra_layers=1),
    }


def cmd_ablate(
    config_path: str | Path | None,
    overrides: list[str] | None = None,
    raw_scale: bool = False,
) -> int:
    exp = load_experiment(config_path, overrides)
    dataset = _load_for(exp)
    rows = []
    for variant, model_cfg in ablation_configs(exp.model).items():
        logger.info("Ablation variant %s", variant)
        run = _run_training(exp, model_cfg, dataset, raw_scale)
        rows.append(
            {
                "variant": variant,
                "L_hat": run.model.cfg.seq_len,
                "test_mse": run.test.mse,
                "test_mae": run.test.mae,
            }
        )
    out = Path(exp.output_dir)
    columns = ["variant", "L_hat", "test_mse", "test_mae"]
    write_jsonl(out / "ablation.jsonl", rows)
    write_table(out / "ablation.csv", rows, columns)
    print(format_table(rows, columns))
    return EXIT_OK
