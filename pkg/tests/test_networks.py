import numpy as np
import pytest

from voxcascade.base_classes.base_network import get_network
from voxcascade.exceptions import GeometryError
from voxcascade.network_handler.discriminator import PatchDiscriminator
from voxcascade.network_handler.hr_resnet import HRResNetGenerator
from voxcascade.network_handler.identity import IdentityGenerator
from voxcascade.network_handler.lr_unet import LRUNetGenerator
from voxcascade.nn.tensor import Tensor, no_grad


def cube(rng, channels, side):
    return Tensor(rng.random((1, channels, side, side, side)).astype(np.float32))


class TestLRUNet:
    @pytest.fixture
    def net(self):
        return LRUNetGenerator(lr_side=16, base_channels=2).eval()

    def test_halves_the_sketch_side(self, net, rng):
        with no_grad():
            out = net(cube(rng, 1, 32)).data
        assert out.shape == (1, 1, 16, 16, 16)
        assert out.min() >= 0 and out.max() <= 1
        assert net.output_side(32) == 16

    def test_zero_head_outputs_one_half(self, rng):
        net = LRUNetGenerator(lr_side=16, base_channels=2, zero_head=True).eval()
        with no_grad():
            assert np.allclose(net(cube(rng, 1, 32)).data, 0.5)

    def test_evaluation_is_deterministic(self, net, rng):
        x = cube(rng, 1, 32)
        with no_grad():
            assert np.array_equal(net(x).data, net(x).data)

    def test_dropout_acts_in_training(self, rng):
        net = LRUNetGenerator(lr_side=16, base_channels=2).train()
        x = cube(rng, 1, 32)
        with no_grad():
            assert not np.array_equal(net(x).data, net(x).data)

    def test_wrong_sketch_side(self, net, rng):
        with pytest.raises(GeometryError, match="side 32"):
            net(cube(rng, 1, 16))

    def test_side_must_halve_to_the_bottleneck(self):
        with pytest.raises(GeometryError):
            LRUNetGenerator(lr_side=20)
        with pytest.raises(GeometryError):
            LRUNetGenerator(lr_side=8, levels=4)


class TestHRResNet:
    def test_keeps_the_patch_side(self, rng):
        net = HRResNetGenerator(patch_side=8, channels=3, res_blocks=2)
        with no_grad():
            out = net(cube(rng, 2, 8)).data
        assert out.shape == (1, 1, 8, 8, 8)
        assert out.min() >= 0 and out.max() <= 1

    def test_valid_margin_follows_the_padded_layers(self):
        assert HRResNetGenerator().valid_margin == 4
        assert HRResNetGenerator(patch_side=8, channels=2, res_blocks=2).valid_margin == 2

    def test_output_only_depends_on_nearby_voxels(self, rng):
        # two patches cut 4 slices apart along z; radius 1 + 2 * res_blocks = 5
        net = HRResNetGenerator(patch_side=16, channels=3, res_blocks=2, seed=7, dtype="float64")
        volume = rng.random((1, 2, 20, 16, 16))
        with no_grad():
            a = net(Tensor(volume[:, :, 0:16])).data[0, 0]
            b = net(Tensor(volume[:, :, 4:20])).data[0, 0]
        # global z 9 and 10 are at least 5 slices from every border of both patches
        assert np.allclose(a[9:11], b[5:7], rtol=0, atol=1e-12)
        # at the first slice of the second patch the padding shows
        assert np.abs(a[4] - b[0]).max() > 0

    def test_input_channels_are_checked(self, rng):
        with pytest.raises(GeometryError, match="2 input channels"):
            HRResNetGenerator(patch_side=8, channels=2, res_blocks=1)(cube(rng, 1, 8))


class TestDiscriminator:
    @pytest.mark.parametrize("side, grid", [(32, 2), (64, 4)])
    def test_score_grid(self, side, grid, rng):
        net = PatchDiscriminator(in_channels=2, base_channels=2)
        assert net.output_side(side) == grid
        if side == 32:
            with no_grad():
                scores = net(cube(rng, 2, side)).data
            assert scores.shape == (1, 1, grid, grid, grid)
            assert np.all((scores > 0) & (scores < 1))

    def test_side_must_divide_by_the_downsampling(self, rng):
        with pytest.raises(GeometryError):
            PatchDiscriminator(base_channels=2)(cube(rng, 2, 24))

    def test_five_axes_required(self):
        with pytest.raises(GeometryError):
            PatchDiscriminator(base_channels=2)(Tensor(np.zeros((2, 16, 16, 16), dtype=np.float32)))


class TestIdentity:
    def test_scale_zero_averages_the_sketch(self):
        x = Tensor(np.ones((1, 1, 8, 8, 8)))
        out = IdentityGenerator(0)(x)
        assert out.shape == (1, 1, 4, 4, 4)
        assert np.all(out.data == 1)
        assert IdentityGenerator(0).parameters() == []

    def test_higher_scales_pass_the_previous_channel(self, rng):
        x = Tensor(rng.random((1, 2, 6, 6, 6)))
        assert np.array_equal(IdentityGenerator(1)(x).data, x.data[:, 1:2])


class TestSummary:
    def test_padded_convolution_has_its_own_row(self):
        rows = HRResNetGenerator(patch_side=8, channels=2, res_blocks=1).summary(8)
        names = [row.name for row in rows]
        assert names[:2] == ["stem.pad", "stem"]
        assert rows[0].spatial == (10, 10, 10)
        assert rows[1].spatial == (8, 8, 8)
        assert rows[0].params == 0

    def test_summary_parameters_match_the_network(self):
        net = LRUNetGenerator(lr_side=16, base_channels=2)
        assert sum(row.params for row in net.summary(32)) == net.parameter_count()


def test_registry():
    assert get_network("hr_resnet") is HRResNetGenerator
    assert get_network("discriminator") is PatchDiscriminator
    with pytest.raises(TypeError, match="Unsupported network family"):
        get_network("transformer")


def test_config_rebuilds_the_network():
    net = HRResNetGenerator(patch_side=8, channels=2, res_blocks=1, seed=5)
    twin = get_network(net.family)(**net.config)
    for a, b in zip(net.parameters(), twin.parameters()):
        assert np.array_equal(a.data, b.data)
