# gtpc/data/dataset.py
"""Reading bi-temporal change-detection datasets from disk.

Three layouts are recognised under a dataset root:

* flat: ``A/``, ``B/`` and ``label/`` holding files with matching stems;
* split subdirectories: ``train/``, ``val/`` and ``test/``, each in the flat layout;
* index files: the flat layout plus ``list/{train,val,test}.txt`` naming the files of each subset.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from pydantic import BaseModel, ConfigDict, Field, model_validator

from gtpc.errors import DatasetError, DimensionError
from gtpc.model.backbone import DEEP_STRIDE
from gtpc.model.types import ImagePair

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp"}
SUBSETS = ("train", "val", "test")


class SynthSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(default=500, ge=1, description="Number of generated pairs.")
    size: int = Field(default=64, ge=DEEP_STRIDE, description="Side length of each square image.")
    seed: int = Field(default=0, description="Generator seed, independent of the training seed.")


class DatasetDescriptor(BaseModel):
    """Where samples come from and how they are patched and split."""

    model_config = ConfigDict(extra="forbid")

    root: str | None = Field(default=None, description="Dataset root in one of the supported layouts.")
    synthetic: SynthSpec | None = Field(default=None, description="Generate samples in memory instead of reading root.")
    patch_size: int = Field(default=256, ge=DEEP_STRIDE)
    channels: Literal["rgb"] = "rgb"
    manifest: str | None = Field(default=None, description="Split manifest to reuse; generated when absent.")
    ratio: float = Field(default=0.05, gt=0.0, lt=1.0, description="Labeled fraction of the training pool.")
    split_seed: int = 0
    val_fraction: float = Field(default=0.1, ge=0.0, lt=1.0)
    test_fraction: float = Field(default=0.1, ge=0.0, lt=1.0)
    eval_batch_size: int = Field(default=8, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if self.root is not None and self.synthetic is not None:
            raise ValueError("set either data.root or data.synthetic, not both")
        if self.root is None and self.synthetic is None:
            self.synthetic = SynthSpec()
        if self.patch_size % DEEP_STRIDE:
            raise ValueError(f"patch_size must be divisible by {DEEP_STRIDE}")
        if self.synthetic is not None and self.synthetic.size % DEEP_STRIDE:
            raise ValueError(f"synthetic size must be divisible by {DEEP_STRIDE}")
        if self.val_fraction + self.test_fraction >= 1.0:
            raise ValueError("val_fraction + test_fraction must leave a training pool")
        return self


@dataclass
class IngestResult:
    samples: List[ImagePair] = field(default_factory=list)
    rejects: List[str] = field(default_factory=list)
    subsets: Dict[str, str] = field(default_factory=dict)


def load_image(path: Path) -> torch.Tensor:
    """An RGB file as a float tensor (3, H, W) in [0, 1]."""
    with Image.open(path) as image:
        array = np.asarray(image.convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(array.copy()).permute(2, 0, 1).contiguous()


def load_mask(path: Path) -> torch.Tensor:
    """A single-channel change mask as a long tensor (H, W); {0, 255} and {0, 1} both map to {0, 1}."""
    with Image.open(path) as image:
        if image.mode in ("1", "L", "P", "I", "I;16"):
            array = np.asarray(image)
        else:
            array = np.asarray(image.convert("L"))
    array = array.astype(np.int64)
    values = set(np.unique(array).tolist())
    if not values <= {0, 1, 255}:
        raise DatasetError(f"{path}: label values {sorted(values)[:6]} are not binary")
    if 255 in values and 1 in values:
        raise DatasetError(f"{path}: label mixes 1 and 255 as change markers")
    return torch.from_numpy((array > 0).astype(np.int64))


def _index(directory: Path) -> Dict[str, Path]:
    if not directory.is_dir():
        return {}
    return {p.stem: p for p in sorted(directory.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}


def _ingest_flat(base: Path, prefix: str = "", only: Sequence[str] | None = None) -> IngestResult:
    result = IngestResult()
    files = {part: _index(base / part) for part in ("A", "B", "label")}
    stems = sorted(set().union(*files.values()))
    if only is not None:
        stems = [stem for stem in stems if stem in set(only)]
    for stem in stems:
        missing = [part for part in ("A", "B", "label") if stem not in files[part]]
        if missing:
            result.rejects.append(f"{prefix}{stem}: missing {', '.join(missing)}")
            continue
        image_a = load_image(files["A"][stem])
        image_b = load_image(files["B"][stem])
        label = load_mask(files["label"][stem])
        try:
            result.samples.append(ImagePair(image_a, image_b, label, id=f"{prefix}{stem}"))
        except DimensionError as exc:
            raise DatasetError(f"dimension mismatch in {base}: {exc}") from exc
    return result


def ingest(root: str | Path) -> IngestResult:
    """Loads every complete triple under ``root``; incomplete ones are listed in ``rejects``."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    if (root / "list").is_dir():
        result = IngestResult()
        for subset in SUBSETS:
            listing = root / "list" / f"{subset}.txt"
            if not listing.exists():
                continue
            stems = [Path(line.strip()).stem for line in listing.read_text().splitlines() if line.strip()]
            part = _ingest_flat(root, only=stems)
            result.samples += part.samples
            result.rejects += part.rejects
            result.subsets.update({sample.id: subset for sample in part.samples})
        return result
    if any((root / subset / "A").is_dir() for subset in SUBSETS):
        result = IngestResult()
        for subset in SUBSETS:
            if not (root / subset / "A").is_dir():
                continue
            part = _ingest_flat(root / subset, prefix=f"{subset}/")
            result.samples += part.samples
            result.rejects += part.rejects
            result.subsets.update({sample.id: subset for sample in part.samples})
        return result
    if not (root / "A").is_dir():
        raise DatasetError(f"{root} has neither A/B/label folders nor train/val/test subsets")
    return _ingest_flat(root)


def _pad_to(x: torch.Tensor, height: int, width: int) -> torch.Tensor:
    pad_h, pad_w = height - x.shape[-2], width - x.shape[-1]
    padding = (pad_w // 2, pad_w - pad_w // 2, pad_h // 2, pad_h - pad_h // 2)
    return F.pad(x, padding, value=0)


def crop_patches(sample: ImagePair, patch_size: int = 256) -> List[ImagePair]:
    """Tiles a sample into non-overlapping patches in row-major order, dropping the remainder.

    Patches are named ``<id>_<row>_<col>``; a sample already of patch size is returned as-is.
    Only the dimensions shorter than a patch are zero-padded, symmetrically, up to the patch size;
    a longer dimension is tiled as usual, so a 200x600 sample gives two 256x256 patches.
    """
    height, width = sample.size
    if (height, width) == (patch_size, patch_size):
        return [sample]
    if height < patch_size or width < patch_size:
        print(f"⚠️ WARNING: {sample.id} is {height}x{width}, padding to {patch_size}x{patch_size}")
        target_h, target_w = max(height, patch_size), max(width, patch_size)
        sample = sample.replace(
            image_a=_pad_to(sample.image_a, target_h, target_w),
            image_b=_pad_to(sample.image_b, target_h, target_w),
            label=None if sample.label is None else _pad_to(sample.label, target_h, target_w),
        )
        height, width = target_h, target_w
    patches = []
    for row in range(height // patch_size):
        for col in range(width // patch_size):
            window = (slice(row * patch_size, (row + 1) * patch_size), slice(col * patch_size, (col + 1) * patch_size))
            patches.append(
                ImagePair(
                    image_a=sample.image_a[(slice(None), *window)],
                    image_b=sample.image_b[(slice(None), *window)],
                    label=None if sample.label is None else sample.label[window],
                    id=f"{sample.id}_{row}_{col}",
                )
            )
    return patches


def save_pair(sample: ImagePair, root: str | Path) -> None:
    """Writes a sample into the flat layout as 8-bit PNGs, labels as {0, 255}."""
    root = Path(root)
    for part in ("A", "B", "label"):
        (root / part).mkdir(parents=True, exist_ok=True)
    for part, image in (("A", sample.image_a), ("B", sample.image_b)):
        array = (image.clamp(0, 1).permute(1, 2, 0).numpy() * 255.0).round().astype(np.uint8)
        Image.fromarray(array).save(root / part / f"{sample.id}.png")
    if sample.label is not None:
        mask = (sample.label.numpy() == 1).astype(np.uint8) * 255
        Image.fromarray(mask).save(root / "label" / f"{sample.id}.png")


def load_samples(descriptor: DatasetDescriptor) -> tuple[Dict[str, ImagePair], Dict[str, str]]:
    """All patches of the described dataset keyed by id, plus any predefined subset of each id."""
    from gtpc.data.synth import synth_generate

    if descriptor.synthetic is not None:
        spec = descriptor.synthetic
        samples = synth_generate(spec.n, spec.size, spec.seed)
        return {sample.id: sample for sample in samples}, {}
    print(f"---DATA: ingesting {descriptor.root}---")
    result = ingest(descriptor.root)
    for reject in result.rejects:
        print(f"⚠️ WARNING: skipped {reject}")
    if not result.samples:
        raise DatasetError(f"no complete samples under {descriptor.root}")
    samples: Dict[str, ImagePair] = {}
    subsets: Dict[str, str] = {}
    for sample in result.samples:
        for patch in crop_patches(sample, descriptor.patch_size):
            samples[patch.id] = patch
            if sample.id in result.subsets:
                subsets[patch.id] = result.subsets[sample.id]
    print(f"✅ {len(result.samples)} pairs, {len(samples)} patches, {len(result.rejects)} rejected")
    return samples, subsets
