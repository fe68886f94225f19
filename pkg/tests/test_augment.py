# tests/test_augment.py
import torch
import torch.nn.functional as F

from gtpc.augment.cutmix import cutmix_batch, derangement
from gtpc.augment.geometric import apply_geometry, sample_weak_geometry, weak_augment
from gtpc.augment.photometric import strong_augment
from gtpc.augment.views import make_views
from gtpc.config import AugmentConfig
from gtpc.model.types import ImagePair

from conftest import make_pair


def _block_pair(generator: torch.Generator, size: int = 32) -> ImagePair:
    label = torch.zeros(size, size, dtype=torch.long)
    top, left = torch.randint(0, size - 8, (2,), generator=generator).tolist()
    h, w = torch.randint(4, 9, (2,), generator=generator).tolist()
    label[top : top + h, left : left + w] = 1
    image = label.float().expand(3, size, size).clone()
    return ImagePair(image, image.clone(), label, id="tracer")


def test_weak_transform_moves_image_and_label_together():
    """Tracer block: wherever the label says 1 the images say bright, up to a thin rim."""
    generator = torch.Generator().manual_seed(0)
    border = torch.ones(32, 32, dtype=torch.bool)
    border[2:-2, 2:-2] = False
    for _ in range(1000):
        pair = _block_pair(generator)
        out = weak_augment(pair, generator, crop_size=32)
        assert torch.equal(out.image_a, out.image_b)
        label = out.label.float()[None, None]
        dilated = F.max_pool2d(label, 5, stride=1, padding=2)
        eroded = -F.max_pool2d(-label, 5, stride=1, padding=2)
        rim = (dilated != eroded)[0, 0] | border
        mismatch = (out.image_a[0] > 0.5) != out.label.bool()
        assert not (mismatch & ~rim).any()


def test_weak_output_has_crop_size_and_binary_label(generator):
    pair = make_pair(64)
    for _ in range(20):
        out = weak_augment(pair, generator, crop_size=48, scale_range=(0.5, 2.0))
        assert out.size == (48, 48)
        assert set(out.label.unique().tolist()) <= {0, 1}


def test_flip_twice_is_identity():
    pair = make_pair(32)
    geometry = sample_weak_geometry(32, 32, torch.Generator().manual_seed(0), scale_range=(1.0, 1.0), flip_prob=1.0)
    once = apply_geometry(pair.image_a, geometry)
    assert torch.equal(apply_geometry(once, geometry), pair.image_a)


def test_small_scale_is_reflect_padded_to_crop(generator):
    pair = make_pair(32)
    out = weak_augment(pair, generator, crop_size=64, scale_range=(0.5, 0.5))
    assert out.size == (64, 64)
    assert torch.isfinite(out.image_a).all()


def test_strong_augment_keeps_range_and_label(generator):
    pair = make_pair(32)
    out = strong_augment(pair, generator)
    assert out.image_a.min() >= 0 and out.image_a.max() <= 1
    assert out.label is pair.label


def test_strong_augment_identity_parameters(generator):
    pair = make_pair(32)
    out = strong_augment(pair, generator, jitter_range=(1.0, 1.0), jitter_prob=1.0, blur_prob=0.0)
    assert torch.allclose(out.image_a, pair.image_a, atol=1e-6)
    assert torch.allclose(out.image_b, pair.image_b, atol=1e-6)


def test_strong_augment_independent_draws_differ():
    pair = make_pair(32)
    first = strong_augment(pair, torch.Generator().manual_seed(1), jitter_prob=1.0)
    second = strong_augment(pair, torch.Generator().manual_seed(2), jitter_prob=1.0)
    assert not torch.equal(first.image_a, second.image_a)


def test_views_share_the_weak_geometry(generator):
    views = make_views(make_pair(64), generator, AugmentConfig(crop_size=64))
    assert views.strong1.size == views.weak.size == views.strong2.size
    assert views.strong1.label is views.weak.label


def test_derangement_has_no_fixed_points(generator):
    for size in range(2, 9):
        donor = derangement(size, generator)
        assert sorted(donor.tolist()) == list(range(size))
        assert (donor != torch.arange(size)).all()


def test_cutmix_consistency_over_random_batches():
    """Mixed images and pseudo-labels share one rectangle; pixels inside come from the donor."""
    generator = torch.Generator().manual_seed(7)
    for _ in range(200):
        image_a, image_b = torch.rand(4, 3, 32, 32, generator=generator), torch.rand(4, 3, 32, 32, generator=generator)
        pseudo = (torch.rand(4, 32, 32, generator=generator) > 0.5).long()
        result = cutmix_batch(image_a, image_b, pseudo, generator)
        for i in range(4):
            inside = result.mask[i].bool()
            donor = int(result.donor[i])
            if donor < 0:
                assert not inside.any()
                assert torch.equal(result.image_a[i], image_a[i])
                continue
            assert donor != i
            rows, cols = inside.nonzero(as_tuple=True)
            area = inside.sum().item()
            assert area == (rows.max() - rows.min() + 1) * (cols.max() - cols.min() + 1)
            ratio = area / (32 * 32)
            assert 0.1 - 2 / 32 <= ratio <= 0.5 + 2 / 32
            assert torch.equal(result.image_a[i][:, inside], image_a[donor][:, inside])
            assert torch.equal(result.image_b[i][:, inside], image_b[donor][:, inside])
            assert torch.equal(result.pseudo_label[i][inside], pseudo[donor][inside])
            assert torch.equal(result.image_a[i][:, ~inside], image_a[i][:, ~inside])
            assert torch.equal(result.pseudo_label[i][~inside], pseudo[i][~inside])


def test_cutmix_single_sample_is_noop(generator):
    image = torch.rand(1, 3, 16, 16)
    pseudo = torch.ones(1, 16, 16, dtype=torch.long)
    result = cutmix_batch(image, image, pseudo, generator, prob=1.0)
    assert result.mask.sum() == 0 and result.donor.item() == -1
    assert torch.equal(result.image_a, image)
