# gtpc/cli/commands.py
"""Implementations of the command-line verbs; each returns its result for programmatic use."""
import math
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple

import pandas as pd

from gtpc.cli.report import RunRecord, metrics_table, plot_gate_sweep, save_error_map, write_table
from gtpc.config import (
    DEVICE,
    OUT_DIR,
    VARIANT_LABELS,
    ExperimentConfig,
    FPTarget,
    Variant,
    apply_overrides,
    config_hash,
    load_config,
)
from gtpc.data.dataset import DatasetDescriptor, load_mask, load_samples
from gtpc.data.split import SplitManifest, make_split
from gtpc.data.synth import synth_generate, write_dataset
from gtpc.engine.evaluation import Metrics, evaluate, predict_masks
from gtpc.engine.trainer import train
from gtpc.errors import GTPCError
from gtpc.model.network import count_parameters
from gtpc.model.types import ImagePair
from gtpc.services.checkpoint_store import load_checkpoint

FP_LABELS = {FPTarget.D1: "FP(d1)", FPTarget.D4: "FP(d4)", FPTarget.D1_AND_D4: "FP(d1, d4)"}
DEFAULT_QUANTILES = (0.25, 0.5, 0.75)


def run_directory(config: ExperimentConfig, out_dir: str | Path | None = None) -> Path:
    return Path(out_dir or OUT_DIR) / f"{config.variant.value}-{config_hash(config)}"


def resolve_manifest(
    config: ExperimentConfig,
    samples: Mapping[str, ImagePair],
    subsets: Mapping[str, str],
    run_dir: Path,
) -> Tuple[SplitManifest, Path]:
    """Reuses ``data.manifest`` when it exists, otherwise creates the split and saves it."""
    data = config.data
    path = Path(data.manifest) if data.manifest else run_dir / "manifest.yaml"
    if path.exists():
        manifest = SplitManifest.load(path)
        manifest.check_against(samples.keys())
        return manifest, path
    manifest = make_split(
        samples.keys(),
        data.ratio,
        data.split_seed,
        val_fraction=data.val_fraction,
        test_fraction=data.test_fraction,
        subsets=subsets or None,
    )
    return manifest, manifest.save(path)


def cmd_split(
    dataset_root: str | Path,
    ratio: float,
    seed: int,
    out: str | Path,
    patch_size: int = 256,
    val_fraction: float = 0.0,
    test_fraction: float = 0.0,
) -> Path:
    samples, subsets = load_samples(DatasetDescriptor(root=str(dataset_root), patch_size=patch_size))
    manifest = make_split(samples.keys(), ratio, seed, val_fraction, test_fraction, subsets=subsets or None)
    path = manifest.save(out)
    print(
        f"✅ Split written to {path}: {len(manifest.labeled_ids)} labeled, {len(manifest.unlabeled_ids)} unlabeled, "
        f"{len(manifest.val_ids)} val, {len(manifest.test_ids)} test"
    )
    return path


def cmd_synth(out: str | Path, n: int = 500, size: int = 64, seed: int = 0) -> Path:
    root = write_dataset(synth_generate(n, size, seed), out)
    print(f"✅ {n} synthetic pairs of {size}x{size} written to {root}")
    return root


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None) -> RunRecord:
    """Trains one configuration and evaluates its best checkpoint on the test split."""
    run_dir = run_directory(config, out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    samples, subsets = load_samples(config.data)
    manifest, manifest_path = resolve_manifest(config, samples, subsets, run_dir)
    result = train(config, samples, manifest, run_dir)
    test_samples = [samples[i] for i in manifest.test_ids]
    test = evaluate(result.model, test_samples, config.data.eval_batch_size, device=DEVICE) if test_samples else None
    if test is not None:
        print(f"---EVAL: test | {test.summary()}---")
    record = RunRecord(
        config_hash=config_hash(config),
        variant=config.variant.value,
        seed=config.seed,
        run_dir=str(run_dir),
        manifest=str(manifest_path),
        checkpoint=str(result.checkpoint) if result.checkpoint else None,
        last_checkpoint=str(result.last_checkpoint) if result.last_checkpoint else None,
        history=str(run_dir / "history.jsonl"),
        best_epoch=result.best_epoch,
        best_val=result.best_metrics.model_dump() if result.best_metrics else None,
        test=test.model_dump() if test else None,
        parameters=count_parameters(result.model, "deployed"),
        wall_clock=result.history.wall_clock,
    )
    record.save()
    return record


def cmd_train(config_path: str | Path | None, overrides: Sequence[str] = (), out_dir: str | Path | None = None) -> RunRecord:
    config = load_config(config_path, overrides)
    record = run_experiment(config, out_dir)
    print(f"✅ Run {record.config_hash} stored in {record.run_dir}")
    return record


def _split_ids(manifest: SplitManifest, split: str, samples: Mapping[str, ImagePair]) -> List[str]:
    choices = {
        "labeled": manifest.labeled_ids,
        "unlabeled": manifest.unlabeled_ids,
        "val": manifest.val_ids,
        "test": manifest.test_ids,
        "all": sorted(samples),
    }
    if split not in choices:
        raise ValueError(f"unknown split {split!r}; expected one of {', '.join(choices)}")
    return choices[split]


def cmd_eval(
    checkpoint: str | Path,
    split: str = "test",
    render_dir: str | Path | None = None,
    manifest_path: str | Path | None = None,
) -> Metrics:
    model, config, payload = load_checkpoint(checkpoint)
    model = model.to(DEVICE)
    samples, subsets = load_samples(config.data)
    if manifest_path is not None:
        manifest = SplitManifest.load(manifest_path)
    elif payload.get("manifest"):
        manifest = SplitManifest.model_validate(payload["manifest"])
    else:
        manifest, _ = resolve_manifest(config, samples, subsets, Path(checkpoint).parent)
    manifest.check_against(samples.keys())
    selected = [samples[i] for i in _split_ids(manifest, split, samples)]
    metrics = evaluate(model, selected, config.data.eval_batch_size, device=DEVICE)
    if render_dir is not None:
        for sample, prediction in predict_masks(model, selected, config.data.eval_batch_size, device=DEVICE):
            save_error_map(prediction, sample.label, Path(render_dir) / f"{sample.id.replace('/', '__')}.png")
    print(f"---EVAL: {split} ({len(selected)} samples) | {metrics.summary()}---")
    return metrics


def _mean_over_seeds(config: ExperimentConfig, seeds: Sequence[int], out_dir) -> Dict[str, object]:
    ious, oas, failures = [], [], []
    for seed in seeds:
        try:
            record = run_experiment(apply_overrides(config, [f"seed={seed}"]), out_dir)
        except (GTPCError, ValueError, RuntimeError) as exc:
            print(f"⚠️ WARNING: {config.variant.value} seed {seed} failed: {exc}")
            failures.append(f"seed {seed}: {exc}")
            continue
        metrics = record.test or record.best_val
        if metrics is None:
            failures.append(f"seed {seed}: no labeled evaluation split")
            continue
        ious.append(metrics["iou"])
        oas.append(metrics["oa"])
    return {
        "IoU": sum(ious) / len(ious) if ious else math.nan,
        "OA": sum(oas) / len(oas) if oas else math.nan,
        "seeds": len(ious),
        "status": "ok" if not failures else "; ".join(failures),
    }


def cmd_ablate(
    config: ExperimentConfig,
    variants: Sequence[Variant | str] = tuple(Variant),
    fp_targets: Sequence[FPTarget | str] = (),
    seeds: Sequence[int] | None = None,
    out_dir: str | Path | None = None,
) -> pd.DataFrame:
    """Trains each variant (and optional FP-target arm) under the same seeds; one table row each."""
    seeds = list(seeds) if seeds else [config.seed]
    arms = [(VARIANT_LABELS[Variant(v)], apply_overrides(config, [f"variant={Variant(v).value}"])) for v in variants]
    arms += [
        (FP_LABELS[FPTarget(t)], apply_overrides(config, ["variant=gtpc", f"fp_target={FPTarget(t).value}"]))
        for t in fp_targets
    ]
    rows = []
    for label, arm in arms:
        print(f"---ABLATE: {label}---")
        rows.append({"variant": label, **_mean_over_seeds(arm, seeds, out_dir)})
    frame = metrics_table(rows, "variant")
    write_table(frame, Path(out_dir or OUT_DIR) / "ablation")
    print(frame.to_string(float_format=lambda v: f"{v:.2f}"))
    return frame


def cmd_gate_sweep(
    config: ExperimentConfig,
    quantiles: Sequence[float] = DEFAULT_QUANTILES,
    seeds: Sequence[int] | None = None,
    out_dir: str | Path | None = None,
) -> pd.DataFrame:
    """Trains the full method at each gate quantile; writes a table and an IoU-vs-quantile plot."""
    seeds = list(seeds) if seeds else [config.seed]
    rows = []
    for quantile in quantiles:
        print(f"---GATE SWEEP: quantile {quantile}---")
        arm = apply_overrides(config, ["variant=gtpc", "gate.enabled=true", f"gate.quantile={quantile}"])
        rows.append({"quantile": float(quantile), **_mean_over_seeds(arm, seeds, out_dir), "default": quantile == 0.5})
    frame = metrics_table(rows, "quantile")
    out = Path(out_dir or OUT_DIR)
    write_table(frame, out / "gate_sweep")
    plot_gate_sweep(frame, out / "gate_sweep.png")
    print(frame.to_string(float_format=lambda v: f"{v:.2f}"))
    return frame


def cmd_render(prediction: str | Path, label: str | Path, out: str | Path) -> Path:
    path = save_error_map(load_mask(Path(prediction)), load_mask(Path(label)), out)
    print(f"✅ Error map written to {path}")
    return path
