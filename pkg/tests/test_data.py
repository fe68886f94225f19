# tests/test_data.py
import numpy as np
import pytest
import torch
from PIL import Image
from pydantic import ValidationError

from gtpc.data.dataset import DatasetDescriptor, crop_patches, ingest, load_mask, load_samples
from gtpc.data.split import SplitManifest, make_split
from gtpc.data.synth import synth_generate, synth_scene, write_dataset
from gtpc.errors import DatasetError, SplitError
from gtpc.model.types import ImagePair
from gtpc.utils.seeding import numpy_rng

from conftest import make_pair


def _write_triple(root, stem, size=32, label_value=255, label_size=None, with_label=True):
    rng = np.random.default_rng(sum(map(ord, stem)))
    for part in ("A", "B", "label"):
        (root / part).mkdir(parents=True, exist_ok=True)
    for part in ("A", "B"):
        Image.fromarray(rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)).save(root / part / f"{stem}.png")
    if with_label:
        side = label_size or size
        mask = np.zeros((side, side), dtype=np.uint8)
        mask[: side // 2, : side // 2] = label_value
        Image.fromarray(mask).save(root / "label" / f"{stem}.png")


def test_ingest_flat_layout(tmp_path):
    """Three complete triples load; a triple without a label is reported, not loaded."""
    for stem in ("a", "b", "c"):
        _write_triple(tmp_path, stem)
    _write_triple(tmp_path, "d", with_label=False)
    result = ingest(tmp_path)
    assert [s.id for s in result.samples] == ["a", "b", "c"]
    assert len(result.rejects) == 1 and result.rejects[0].startswith("d")
    sample = result.samples[0]
    assert sample.image_a.shape == (3, 32, 32)
    assert 0.0 <= sample.image_a.min() and sample.image_a.max() <= 1.0
    assert set(sample.label.unique().tolist()) == {0, 1}
    assert sample.label.sum().item() == 16 * 16


def test_ingest_accepts_zero_one_masks(tmp_path):
    _write_triple(tmp_path, "a", label_value=1)
    assert ingest(tmp_path).samples[0].label.sum().item() == 16 * 16


def test_ingest_rejects_mismatched_dimensions(tmp_path):
    _write_triple(tmp_path, "a", label_size=16)
    with pytest.raises(DatasetError):
        ingest(tmp_path)


def test_ingest_subset_directories(tmp_path):
    _write_triple(tmp_path / "train", "x")
    _write_triple(tmp_path / "test", "y")
    result = ingest(tmp_path)
    assert result.subsets == {"train/x": "train", "test/y": "test"}


def test_ingest_missing_root(tmp_path):
    with pytest.raises(DatasetError):
        ingest(tmp_path / "nowhere")


def test_load_mask_rejects_non_binary(tmp_path):
    path = tmp_path / "m.png"
    Image.fromarray(np.full((4, 4), 7, dtype=np.uint8)).save(path)
    with pytest.raises(DatasetError):
        load_mask(path)


def test_crop_tiles_and_reassembles():
    sample = make_pair(512, sample_id="big")
    patches = crop_patches(sample, 256)
    assert [p.id for p in patches] == ["big_0_0", "big_0_1", "big_1_0", "big_1_1"]
    rows = [torch.cat([patches[2 * r].image_a, patches[2 * r + 1].image_a], dim=2) for r in range(2)]
    assert torch.equal(torch.cat(rows, dim=1), sample.image_a)
    label_rows = [torch.cat([patches[2 * r].label, patches[2 * r + 1].label], dim=1) for r in range(2)]
    assert torch.equal(torch.cat(label_rows, dim=0), sample.label)


def test_crop_drops_the_remainder_and_keeps_exact_samples():
    patches = crop_patches(make_pair(300, sample_id="odd"), 256)
    assert len(patches) == 1 and patches[0].size == (256, 256)
    exact = make_pair(256)
    assert crop_patches(exact, 256) == [exact]


def test_crop_pads_small_samples():
    patches = crop_patches(make_pair(200, sample_id="small"), 256)
    assert len(patches) == 1 and patches[0].size == (256, 256)
    assert patches[0].label[:28].sum() == 0


def test_crop_pads_only_the_short_dimension():
    sample = ImagePair(torch.rand(3, 200, 600), torch.rand(3, 200, 600), torch.ones(200, 600, dtype=torch.long), id="strip")
    patches = crop_patches(sample, 256)
    assert [p.id for p in patches] == ["strip_0_0", "strip_0_1"]
    assert all(p.size == (256, 256) for p in patches)
    assert patches[0].label[:28].sum() == 0 and patches[0].label[228:].sum() == 0
    assert torch.equal(patches[1].image_a[:, 28:228], sample.image_a[:, :, 256:512])


def test_split_counts_and_disjointness():
    ids = [f"s{i:03d}" for i in range(100)]
    manifest = make_split(ids, ratio=0.05, seed=0)
    assert len(manifest.labeled_ids) == 5
    assert len(manifest.unlabeled_ids) == 95
    assert set(manifest.labeled_ids).isdisjoint(manifest.unlabeled_ids)
    assert manifest.train_ids == sorted(ids)


def test_split_is_deterministic_under_its_seed():
    ids = [f"s{i:03d}" for i in range(100)]
    assert make_split(ids, 0.1, seed=4) == make_split(reversed(ids), 0.1, seed=4)
    assert make_split(ids, 0.1, seed=4).labeled_ids != make_split(ids, 0.1, seed=5).labeled_ids


def test_split_with_val_and_test_fractions():
    manifest = make_split([f"s{i}" for i in range(100)], 0.1, seed=0, val_fraction=0.1, test_fraction=0.2)
    assert (len(manifest.val_ids), len(manifest.test_ids)) == (10, 20)
    assert len(manifest.labeled_ids) == 7


def test_split_honours_predefined_subsets():
    subsets = {f"t{i}": "train" for i in range(20)} | {"v0": "val", "x0": "test"}
    manifest = make_split(subsets, 0.1, seed=0, subsets=subsets)
    assert manifest.val_ids == ["v0"] and manifest.test_ids == ["x0"]
    assert len(manifest.labeled_ids) == 2


def test_split_rejects_degenerate_ratios():
    with pytest.raises(SplitError):
        make_split([f"s{i}" for i in range(10)], ratio=0.01, seed=0)
    with pytest.raises(SplitError):
        make_split(["a", "b"], ratio=0.9, seed=0)
    with pytest.raises(SplitError):
        make_split(["a", "b"], ratio=0.0, seed=0)


def test_manifest_round_trip_and_validation(tmp_path):
    manifest = make_split([f"s{i}" for i in range(20)], 0.25, seed=1)
    path = manifest.save(tmp_path / "split.yaml")
    assert SplitManifest.load(path) == manifest
    with pytest.raises(DatasetError):
        manifest.check_against(["s0"])
    with pytest.raises(ValidationError):
        SplitManifest(ratio=0.5, seed=0, labeled_ids=["a"], unlabeled_ids=["a"])


def test_synthetic_label_is_the_footprint_difference():
    scene = synth_scene(numpy_rng(0, 3), 64)
    assert np.array_equal(scene.label, scene.footprint_a != scene.footprint_b)
    unchanged = ~scene.label
    assert scene.image_a.shape == (3, 64, 64)
    assert 0.0 <= scene.image_a.min() and scene.image_b.max() <= 1.0
    assert unchanged.any()


def test_synthetic_prevalence_and_zero_change_samples(synthetic_samples):
    for index, sample in enumerate(synthetic_samples.values()):
        prevalence = sample.label.float().mean().item()
        if index % 10 == 9:
            assert prevalence == 0.0, sample.id
        else:
            assert 0.02 <= prevalence <= 0.30, sample.id


def test_synthetic_generation_is_deterministic():
    first, second = synth_generate(5, 64, seed=3), synth_generate(5, 64, seed=3)
    for a, b in zip(first, second):
        assert a.id == b.id
        assert torch.equal(a.image_a, b.image_a) and torch.equal(a.label, b.label)
    assert not torch.equal(first[0].image_a, synth_generate(1, 64, seed=4)[0].image_a)


def test_written_synthetic_dataset_loads_back(tmp_path):
    samples = synth_generate(4, 64, seed=0)
    write_dataset(samples, tmp_path)
    loaded, subsets = load_samples(DatasetDescriptor(root=str(tmp_path), patch_size=64))
    assert sorted(loaded) == [s.id for s in samples]
    assert subsets == {}
    for sample in samples:
        assert torch.equal(loaded[sample.id].label, sample.label)
        assert torch.allclose(loaded[sample.id].image_a, sample.image_a, atol=1 / 255)


def test_descriptor_validation():
    assert DatasetDescriptor().synthetic is not None
    with pytest.raises(ValidationError):
        DatasetDescriptor(root="x", synthetic={"n": 4})
    with pytest.raises(ValidationError):
        DatasetDescriptor(patch_size=100)
