# tests/test_cli.py
from unittest.mock import patch

import numpy as np
import pytest
import torch
from PIL import Image

from gtpc.cli.commands import cmd_ablate, cmd_eval, cmd_gate_sweep
from gtpc.cli.main import main
from gtpc.cli.report import RunRecord, render_error_map
from gtpc.config import ExperimentConfig, Variant
from gtpc.data.split import SplitManifest, make_split
from gtpc.data.synth import synth_generate, write_dataset
from gtpc.services.checkpoint_store import save_checkpoint


def _record(config: ExperimentConfig, out_dir=None, iou: float = 0.5) -> RunRecord:
    return RunRecord(
        config_hash="0" * 12,
        variant=config.variant.value,
        seed=config.seed,
        run_dir=str(out_dir or "."),
        manifest="manifest.yaml",
        best_epoch=0,
        test={"iou": iou, "oa": 0.9},
        parameters=1,
    )


@pytest.fixture
def dataset_root(tmp_path):
    return write_dataset(synth_generate(100, 32, seed=0), tmp_path / "dataset")


def test_split_command_is_repeatable(dataset_root, tmp_path):
    out = tmp_path / "split.yaml"
    args = ["split", str(dataset_root), "--ratio", "0.05", "--seed", "1", "--out", str(out), "--patch-size", "32"]
    assert main(args) == 0
    manifest = SplitManifest.load(out)
    assert len(manifest.labeled_ids) == 5 and len(manifest.unlabeled_ids) == 95
    first = out.read_bytes()
    assert main(args) == 0
    assert out.read_bytes() == first


def test_split_with_zero_ratio_is_a_user_error(dataset_root, tmp_path):
    args = ["split", str(dataset_root), "--ratio", "0", "--out", str(tmp_path / "s.yaml"), "--patch-size", "32"]
    assert main(args) == 1
    assert not (tmp_path / "s.yaml").exists()


def test_usage_and_config_errors_exit_with_one(tmp_path):
    assert main(["frobnicate"]) == 1
    assert main(["split", "somewhere"]) == 1
    assert main(["train", "--config", str(tmp_path / "missing.yaml")]) == 1


def test_internal_errors_exit_with_two():
    with patch("gtpc.cli.commands.run_experiment", side_effect=RuntimeError("boom")):
        assert main(["train"]) == 2


def test_synth_command_writes_triples(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--n", "3", "--size", "32"]) == 0
    assert len(list((tmp_path / "label").glob("*.png"))) == 3


def test_train_variant_flag_overrides_the_config_file(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text("variant: gtpc\nepochs: 2\n")
    with patch("gtpc.cli.commands.run_experiment", side_effect=lambda config, out_dir: _record(config)) as run:
        assert main(["train", "--config", str(path), "--variant", "sup_only", "--seed", "4"]) == 0
    config = run.call_args.args[0]
    assert config.variant is Variant.SUP_ONLY
    assert (config.epochs, config.seed) == (2, 4)
    assert config.effective_weights == (1.0, 0.0, 0.0)


def test_error_map_colours():
    ones = np.ones((4, 4), dtype=bool)
    assert (render_error_map(ones, ones) == 255).all()
    red = render_error_map(ones, ~ones)
    assert (red[..., 0] == 255).all() and (red[..., 1:] == 0).all()
    generator = torch.Generator().manual_seed(0)
    prediction = torch.rand(16, 16, generator=generator) > 0.5
    label = torch.rand(16, 16, generator=generator) > 0.5
    image = render_error_map(prediction, label)
    expected = {(1, 1): (255, 255, 255), (0, 0): (0, 0, 0), (1, 0): (255, 0, 0), (0, 1): (0, 255, 0)}
    for r in range(16):
        for c in range(16):
            assert tuple(image[r, c]) == expected[(int(prediction[r, c]), int(label[r, c]))]


def test_render_command(tmp_path):
    prediction = np.zeros((8, 8), dtype=np.uint8)
    prediction[:4] = 255
    label = np.zeros((8, 8), dtype=np.uint8)
    label[:, :4] = 255
    Image.fromarray(prediction).save(tmp_path / "pred.png")
    Image.fromarray(label).save(tmp_path / "label.png")
    out = tmp_path / "map.png"
    assert main(["render", str(tmp_path / "pred.png"), str(tmp_path / "label.png"), "--out", str(out)]) == 0
    image = np.asarray(Image.open(out))
    assert tuple(image[0, 0]) == (255, 255, 255)
    assert tuple(image[0, 7]) == (255, 0, 0)
    assert tuple(image[7, 0]) == (0, 255, 0)
    assert tuple(image[7, 7]) == (0, 0, 0)


def test_eval_of_a_perfect_predictor(small_config, tiny_model, synthetic_samples, tmp_path):
    manifest = make_split(synthetic_samples.keys(), 0.2, 0, 0.1, 0.1)
    checkpoint = save_checkpoint(
        tmp_path / "best.pt", tiny_model, small_config, epoch=0, manifest=manifest.model_dump(mode="json")
    )

    def oracle(model, samples, *args, **kwargs):
        return ((sample, sample.label.bool()) for sample in samples)

    with patch("gtpc.engine.evaluation.predict_masks", side_effect=oracle):
        metrics = cmd_eval(checkpoint, "test")
    assert metrics.iou == 1.0 and metrics.oa == 1.0
    assert metrics.total == len(manifest.test_ids) * 64 * 64


def test_ablate_emits_one_row_per_variant(tmp_path):
    config = ExperimentConfig(variant="sup_only")
    with patch("gtpc.cli.commands.run_experiment", side_effect=lambda c, out_dir: _record(c, out_dir)) as run:
        frame = cmd_ablate(config, seeds=[0, 1], out_dir=tmp_path)
    assert list(frame.index) == ["Sup-only", "Feature", "Image", "Feature + Image", "GTPC"]
    weights = {c.variant.value: c.effective_weights for c in (call.args[0] for call in run.call_args_list)}
    assert weights["sup_only"] == (1.0, 0.0, 0.0)
    assert weights["gtpc"] == weights["image"] == (0.5, 0.25, 0.25)
    assert np.allclose(frame["IoU"], 50.0) and np.allclose(frame["OA"], 90.0)
    assert (frame["seeds"] == 2).all()
    assert (tmp_path / "ablation.txt").exists() and (tmp_path / "ablation.csv").exists()


def test_ablate_keeps_going_after_a_failed_variant(tmp_path):
    def flaky(config, out_dir):
        if config.variant is Variant.IMAGE:
            raise RuntimeError("out of memory")
        return _record(config, out_dir)

    with patch("gtpc.cli.commands.run_experiment", side_effect=flaky):
        frame = cmd_ablate(ExperimentConfig(), ["image", "gtpc"], ["d4"], out_dir=tmp_path)
    assert list(frame.index) == ["Image", "GTPC", "FP(d4)"]
    assert "out of memory" in frame.loc["Image", "status"]
    assert frame.loc["GTPC", "status"] == "ok"
    assert np.isnan(frame.loc["Image", "IoU"])


def test_gate_sweep_table_and_plot(tmp_path):
    seen = []

    def record(config, out_dir):
        seen.append(config.gate.quantile)
        return _record(config, out_dir, iou=1.0 - abs(config.gate.quantile - 0.5))

    with patch("gtpc.cli.commands.run_experiment", side_effect=record):
        frame = cmd_gate_sweep(ExperimentConfig(), out_dir=tmp_path)
    assert seen == [0.25, 0.5, 0.75]
    assert len(frame) == 3
    assert frame["default"].tolist() == [False, True, False]
    assert frame["IoU"].idxmax() == 0.5
    assert (tmp_path / "gate_sweep.png").stat().st_size > 0
    assert (tmp_path / "gate_sweep.csv").exists()
