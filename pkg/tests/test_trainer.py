import csv
import os
from dataclasses import replace

import numpy as np
import pytest

from tests.conftest import ball
from voxcascade.config.settings import LABEL_TRANSFORMS, LOSS_COLUMNS
from voxcascade.exceptions import TrainingError
from voxcascade.logic.scale_plan import plan_scales
from voxcascade.logic.trainer import (TrainConfig, _sample_start,
                                      augment_patch, balance_dataset,
                                      build_scale_networks,
                                      draw_augmentations, prepare_sample,
                                      train_cascade, train_scale,
                                      training_pairs)
from voxcascade.logic.volume import Volume3
from voxcascade.nn.checkpoint import checkpoint_bytes, load_checkpoint

SMALL_D = {"base_channels": 2, "layers": 3}
LR_CFG = TrainConfig(epochs=2, seed=5, generator={"base_channels": 2}, discriminator=SMALL_D)
HR_CFG = TrainConfig(epochs=1, seed=5, patches_per_volume=3, generator={"channels": 2, "res_blocks": 1},
                     discriminator=SMALL_D)


@pytest.fixture
def volume():
    inside, _ = ball((32, 32, 32), (16, 16, 16), 9)
    return Volume3(0.2 + 0.6 * inside)


@pytest.fixture
def mask(ball_mask):
    return ball_mask((32, 32, 32), (18, 16, 14), 3)


@pytest.fixture
def plan():
    return plan_scales((32, 32, 32), lr_side=16, patch_side=8)


class TestConfig:
    @pytest.mark.parametrize("kwargs", [{"blur_probability": 1.5}, {"label_patch_share": -0.1},
                                        {"noise_std": -1.0}, {"epochs": 0}, {"patches_per_volume": 0}])
    def test_rejected(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestAugmentation:
    def test_draw_frequencies(self):
        cfg = TrainConfig(blur_probability=0.3, halve_probability=0.2)
        rng = np.random.default_rng(0)
        draws = [draw_augmentations(cfg, rng) for _ in range(5000)]
        blur = np.array([d.blur for d in draws])
        halve = np.array([d.halve for d in draws])
        assert blur.mean() == pytest.approx(0.3, abs=0.03)
        assert halve.mean() == pytest.approx(0.2, abs=0.03)
        assert (blur & halve).mean() == pytest.approx(0.06, abs=0.02)
        assert all(cfg.blur_sigma_range[0] <= d.sigma <= cfg.blur_sigma_range[1] for d in draws)

    def test_halving_keeps_block_means(self, rng):
        cfg = TrainConfig(noise_std=0.0, blur_probability=0.0, halve_probability=1.0)
        prev, sketch = rng.random((8, 8, 8)), rng.random((8, 8, 8))
        prev_out, sketch_out = augment_patch(prev, sketch, cfg, rng)
        assert np.array_equal(sketch_out, sketch)
        blocks = prev_out.reshape(4, 2, 4, 2, 4, 2)
        assert np.allclose(blocks, blocks[:, :1, :, :1, :, :1])
        assert np.allclose(blocks[:, 0, :, 0, :, 0], prev.reshape(4, 2, 4, 2, 4, 2).mean(axis=(1, 3, 5)))

    def test_noise_is_clamped(self, rng):
        cfg = TrainConfig(noise_std=0.5, blur_probability=0.0, halve_probability=0.0)
        prev, sketch = rng.random((8, 8, 8)), np.zeros((8, 8, 8))
        prev_out, sketch_out = augment_patch(prev, sketch, cfg, rng)
        for patch in (prev_out, sketch_out):
            assert patch.min() >= 0 and patch.max() <= 1
        assert not np.array_equal(prev_out, prev)

    def test_patch_shapes_must_match(self, rng):
        with pytest.raises(ValueError):
            augment_patch(np.zeros((8, 8, 8)), np.zeros((4, 4, 4)), TrainConfig(), rng)


class TestSamples:
    def test_prepare_sample(self, volume, mask, plan):
        sample = prepare_sample(volume, plan, mask)
        assert [i.shape for i in sample.images] == [(16, 16, 16), (32, 32, 32)]
        assert [s.shape for s in sample.sketches] == [(32, 32, 32), (32, 32, 32)]
        for labels, side in zip(sample.labels, (16, 32)):
            assert len(labels) > 0
            assert labels.min() >= 0 and labels.max() < side
        assert all(len(labels) == 0 for labels in prepare_sample(volume, plan).labels)

    def test_forced_patches_cover_a_label(self):
        start = _sample_start(32, 8, np.array([[20, 20, 20]]), True, np.random.default_rng(0))
        assert start == (16, 16, 16)

    def test_random_starts_are_even_and_inside(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            start = _sample_start(32, 8, np.zeros((0, 3), dtype=np.int64), True, rng)
            assert all(s % 2 == 0 and 0 <= s <= 24 for s in start)

    def test_pair_shapes(self, volume, plan, rng):
        sample = prepare_sample(volume, plan)
        (g_input, condition, real), = training_pairs(sample, plan, 0, LR_CFG, rng)
        assert g_input.shape == (1, 1, 32, 32, 32)
        assert condition.shape == real.shape == (1, 1, 16, 16, 16)

        pairs = list(training_pairs(sample, plan, 1, TrainConfig(patches_per_volume=3, use_edges=False), rng))
        assert len(pairs) == 3
        for g_input, condition, real in pairs:
            assert g_input.shape == (1, 2, 8, 8, 8)
            assert real.shape == (1, 1, 8, 8, 8)
            assert not condition[0, 0].any()

    def test_balance_dataset(self, volume, mask):
        empty = Volume3(np.zeros((32, 32, 32)))
        balanced = balance_dataset([(volume, mask), (volume, None), (volume, empty)])
        assert [t for _, _, t in balanced] == ["identity"] * 3 + list(LABEL_TRANSFORMS[1:])
        assert all(m is mask for _, m, _ in balanced[3:])


class TestTraining:
    def test_networks_per_scale(self, plan):
        g0, d0 = build_scale_networks(plan, 0, LR_CFG)
        g1, d1 = build_scale_networks(plan, 1, HR_CFG)
        assert (g0.family, g1.family) == ("lr_unet", "hr_resnet")
        assert (d0.in_channels, d1.in_channels) == (2, 3)
        assert g1.config["patch_side"] == 8 and g0.config["lr_side"] == 16

    def test_same_seed_same_checkpoint(self, volume, plan):
        a = train_scale([(volume, None)], plan, 0, LR_CFG)
        b = train_scale([(volume, None)], plan, 0, LR_CFG)
        assert checkpoint_bytes(a) == checkpoint_bytes(b)
        c = train_scale([(volume, None)], plan, 0, replace(LR_CFG, seed=6))
        assert checkpoint_bytes(a) != checkpoint_bytes(c)

    def test_outputs_on_disk(self, tmp_path, volume, plan):
        out = str(tmp_path / "run")
        train_scale([(volume, None)], plan, 0, LR_CFG, out)
        assert sorted(os.listdir(out)) == ["losses_scale0.csv", "scale0.ckpt", "scale0_epoch0.ckpt",
                                           "scale0_epoch1.ckpt"]
        with open(os.path.join(out, "losses_scale0.csv")) as f:
            rows = list(csv.reader(f))
        assert tuple(rows[0]) == LOSS_COLUMNS
        assert [row[0] for row in rows[1:]] == ["1", "2"]
        assert all(np.isfinite(float(value)) for row in rows[1:] for value in row[1:])
        checkpoint = load_checkpoint(os.path.join(out, "scale0.ckpt"))
        assert checkpoint.epoch == 1
        assert checkpoint.generator.family == "lr_unet"

    def test_hr_scale_with_labels(self, tmp_path, volume, mask, plan):
        out = str(tmp_path / "run")
        checkpoint = train_scale([(volume, mask)], plan, 1, HR_CFG, out)
        assert checkpoint.scale == 1
        assert checkpoint.generator.config["patch_side"] == 8
        with open(os.path.join(out, "losses_scale1.csv")) as f:
            assert len(f.read().splitlines()) == 1 + 3

    def test_empty_dataset(self, plan):
        with pytest.raises(TrainingError):
            train_scale([], plan, 0, LR_CFG)

    def test_cascade_trains_every_scale(self, volume, plan):
        cfg = TrainConfig(epochs=1, patches_per_volume=1, generator={"base_channels": 2}, discriminator=SMALL_D)
        checkpoints = train_cascade([(volume, None)], plan, cfg)
        assert [c.scale for c in checkpoints] == [0, 1]
        assert [c.generator.family for c in checkpoints] == ["lr_unet", "hr_resnet"]
