import numpy as np
import pytest

from voxcascade import VoxCascade
from voxcascade.logic.metrics import mae, ssim3d
from voxcascade.logic.phantom import PhantomSpec, gen_phantom
from voxcascade.logic.scale_plan import plan_scales
from voxcascade.logic.trainer import TrainConfig, train_scale

pytestmark = pytest.mark.slow

TINY = {"generator": {"base_channels": 2, "channels": 2, "res_blocks": 1},
        "discriminator": {"base_channels": 2, "layers": 3}}

# lr_side 32 and one HR scale up to the 64^3 phantoms
DESK = {"lr_side": 32, "patch_side": 16, "seed": 5, "threads": 2, "canny": {"sigma": 2.0},
        "training": {"epochs": 20, "patches_per_volume": 4, "lr": 1e-3,
                     "generator": {"base_channels": 8, "channels": 8, "res_blocks": 1},
                     "discriminator": {"base_channels": 8, "layers": 3}}}
TRAIN_SEEDS = range(20)
TEST_SEEDS = range(20, 25)


def test_losses_stay_finite_for_500_steps():
    volume, mask = gen_phantom(PhantomSpec(seed=11, lesion_radius=5))
    plan = plan_scales(volume.shape, lr_side=32, patch_side=16)
    cfg = TrainConfig(epochs=10, patches_per_volume=50, seed=2, **TINY)
    checkpoint = train_scale([(volume, mask)], plan, 1, cfg)
    assert checkpoint.epoch == 9


def test_balanced_training_with_lesions(tmp_path):
    config = {"lr_side": 32, "patch_side": 16, "seed": 4, "training": {"epochs": 2, "patches_per_volume": 4, **TINY}}
    vc = VoxCascade(config)
    dataset = [gen_phantom(PhantomSpec(seed=s, domain="smooth", lesion_radius=4)) for s in range(2)]
    checkpoints = vc.train(dataset, str(tmp_path / "run"), balance=True)
    assert [c.scale for c in checkpoints] == [0, 1]
    source, mask = gen_phantom(PhantomSpec(seed=9, domain="noisy", lesion_radius=4))
    outputs = vc.translate(source, checkpoints, mask)
    assert [o.shape for o in outputs] == [(32, 32, 32), (64, 64, 64)]
    for name, value in vc.evaluate(outputs[-1], source).items():
        assert np.isfinite(value) or name == "psnr"


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    """
    Cascade trained on the smooth rendering of 20 phantoms, with 5 unseen phantoms in both renderings.
    """
    vc = VoxCascade(DESK)
    dataset = [gen_phantom(PhantomSpec(seed=seed, domain="smooth")) for seed in TRAIN_SEEDS]
    checkpoints = vc.train(dataset, str(tmp_path_factory.mktemp("desk")))
    held_out = [(gen_phantom(PhantomSpec(seed=seed, domain="noisy"))[0],
                 gen_phantom(PhantomSpec(seed=seed, domain="smooth"))[0]) for seed in TEST_SEEDS]
    return vc, checkpoints, held_out


def mean_scores(outputs, held_out):
    ssim = np.mean([ssim3d(out, target) for out, (_, target) in zip(outputs, held_out)])
    error = np.mean([mae(out, target) for out, (_, target) in zip(outputs, held_out)])
    return ssim, error


def test_translation_moves_noisy_volumes_towards_smooth(desk_run):
    vc, checkpoints, held_out = desk_run
    assert [c.scale for c in checkpoints] == [0, 1]
    translated = [vc.translate(noisy, checkpoints)[-1] for noisy, _ in held_out]
    assert all(out.shape == (64, 64, 64) for out in translated)

    ssim, error = mean_scores(translated, held_out)
    source_ssim, source_error = mean_scores([noisy for noisy, _ in held_out], held_out)
    assert ssim >= source_ssim + 0.05
    assert error <= source_error


def test_dropping_an_input_lowers_ssim(desk_run):
    vc, checkpoints, held_out = desk_run

    def score(**ablation):
        return mean_scores([vc.translate(noisy, checkpoints, **ablation)[-1] for noisy, _ in held_out], held_out)[0]

    both = score()
    assert score(use_edges=False) < both
    assert score(use_prev_scale=False) < both


def test_translation_is_reproducible(desk_run):
    vc, checkpoints, held_out = desk_run
    noisy, _ = held_out[0]
    first = vc.translate(noisy, checkpoints)[-1]
    again = VoxCascade({**DESK, "threads": 1}).translate(noisy, checkpoints)[-1]
    assert np.array_equal(first.voxels, again.voxels)
    assert 0 <= first.voxels.min() and first.voxels.max() <= 1
