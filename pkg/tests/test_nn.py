import numpy as np
import pytest

import voxcascade.nn.functional as F
from voxcascade.exceptions import GeometryError
from voxcascade.nn.gradcheck import (NETWORK_CHECKS, check_gradients,
                                     failing, network_check, op_checks)
from voxcascade.nn.optim import Adam, AdamState, adam_step
from voxcascade.nn.tensor import Tensor, no_grad


def leaf(rng, *shape):
    return Tensor(rng.uniform(-1, 1, shape), requires_grad=True)


class TestGradients:
    @pytest.mark.parametrize("name", sorted(op_checks(np.random.default_rng(0))))
    @pytest.mark.parametrize("seed", range(5))
    def test_op_matches_finite_differences(self, name, seed):
        assert op_checks(np.random.default_rng(seed))[name]() < 1e-4

    def test_conv_example(self, rng):
        x, w, b = leaf(rng, 1, 2, 5, 5, 5), leaf(rng, 3, 2, 3, 3, 3), leaf(rng, 3)
        weights = rng.normal(size=(1, 3, 3, 3, 3))
        error = check_gradients(lambda: F.weighted_sum(F.conv3d(x, w, b), weights), [x, w, b], rng,
                                samples=20, h=1e-5)
        assert error < 1e-4

    @pytest.mark.parametrize("family", sorted(NETWORK_CHECKS))
    @pytest.mark.parametrize("seed", range(5))
    def test_network_matches_finite_differences(self, family, seed):
        assert network_check(family, np.random.default_rng(seed), seed=seed) < 1e-4

    def test_failing_lists_checks_over_tolerance(self):
        assert failing({"a": 1e-6, "b": 2e-4, "c": float("nan")}) == ["b", "c"]


class TestOps:
    def test_unit_kernel_is_the_identity(self, rng):
        x = Tensor(rng.random((1, 1, 4, 5, 6)))
        assert np.allclose(F.conv3d(x, Tensor(np.ones((1, 1, 1, 1, 1))), Tensor(np.zeros(1))).data, x.data)
        assert np.allclose(F.conv3d_transpose(x, Tensor(np.ones((1, 1, 1, 1, 1)))).data, x.data)

    def test_ones_kernel_sums_27_neighbours(self):
        x = Tensor(np.full((1, 1, 5, 5, 5), 0.5))
        out = F.conv3d(x, Tensor(np.ones((1, 1, 3, 3, 3))), padding=1).data
        assert np.allclose(out[0, 0, 1:-1, 1:-1, 1:-1], 27 * 0.5)
        assert np.isclose(out[0, 0, 0, 0, 0], 8 * 0.5)
        replicated = F.conv3d(x, Tensor(np.ones((1, 1, 3, 3, 3))), padding=1, pad_mode="replicate").data
        assert np.allclose(replicated, 27 * 0.5)

    def test_strided_and_transposed_shapes(self, rng):
        x = Tensor(rng.random((1, 2, 8, 8, 8)))
        assert F.conv3d(x, Tensor(rng.random((4, 2, 4, 4, 4))), stride=2, padding=1).shape == (1, 4, 4, 4, 4)
        assert F.conv3d_transpose(x, Tensor(rng.random((2, 3, 2, 2, 2))), stride=2).shape == (1, 3, 16, 16, 16)
        assert F.conv3d_transpose(x, Tensor(rng.random((2, 3, 4, 4, 4))), stride=2, padding=1).shape == \
            (1, 3, 16, 16, 16)

    def test_channel_mismatch_is_described(self, rng):
        with pytest.raises(GeometryError, match="channels"):
            F.conv3d(Tensor(rng.random((1, 2, 4, 4, 4))), Tensor(rng.random((1, 3, 3, 3, 3))))
        with pytest.raises(GeometryError):
            F.conv3d(Tensor(rng.random((1, 1, 2, 2, 2))), Tensor(rng.random((1, 1, 3, 3, 3))))

    def test_instance_norm_standardizes(self, rng):
        x = Tensor(rng.normal(3, 2, (2, 3, 6, 6, 6)))
        out = F.instance_norm(x, Tensor(np.ones(3)), Tensor(np.zeros(3)), eps=0.0).data
        assert np.allclose(out.mean(axis=(2, 3, 4)), 0, atol=1e-6)
        assert np.allclose(out.var(axis=(2, 3, 4)), 1, atol=1e-6)

    def test_bounded_activations(self, rng):
        x = Tensor(rng.normal(0, 10, (1, 1, 4, 4, 4)))
        assert np.all(np.abs(F.tanh(x).data) <= 1)
        s = F.sigmoid(x).data
        assert np.all((s >= 0) & (s <= 1))
        assert np.all(F.relu(x).data >= 0)
        assert np.allclose(F.leaky_relu(x, 0.2).data, np.where(x.data > 0, x.data, 0.2 * x.data))

    def test_dropout_is_seeded_and_off_in_eval(self, rng):
        x = Tensor(np.ones((1, 2, 4, 4, 4)))
        a = F.dropout(x, 0.5, np.random.default_rng(9)).data
        b = F.dropout(x, 0.5, np.random.default_rng(9)).data
        assert np.array_equal(a, b)
        assert set(np.unique(a)) <= {0.0, 2.0}
        assert F.dropout(x, 0.5, rng, training=False) is x

    def test_resampling_ops(self):
        x = Tensor(np.arange(8.0).reshape(1, 1, 2, 2, 2))
        up = F.nearest_upsample(x)
        assert up.shape == (1, 1, 4, 4, 4)
        assert np.array_equal(F.avg_downsample(up).data, x.data)

    def test_losses(self):
        scores = Tensor(np.full((1, 1, 2, 2, 2), 0.25))
        assert float(F.binary_cross_entropy(scores, 1.0).data) == pytest.approx(-np.log(0.25))
        assert float(F.binary_cross_entropy(scores, 0.0).data) == pytest.approx(-np.log(0.75))
        a, b = Tensor(np.zeros((1, 1, 2, 2, 2))), Tensor(np.full((1, 1, 2, 2, 2), -0.5))
        assert float(F.l1_loss(a, b).data) == pytest.approx(0.5)

    def test_branches_are_recorded(self):
        x = Tensor(np.array([-1.0, 2.0]).reshape(1, 1, 1, 1, 2))
        with F.record_branches() as branches:
            F.relu(x)
        assert len(branches) == 1
        assert branches[0].ravel().tolist() == [False, True]


class TestTensor:
    def test_backward_accumulates_shared_inputs(self):
        x = Tensor(np.array(3.0), requires_grad=True)
        y = x * x + x
        y.backward()
        assert float(x.grad) == pytest.approx(7.0)

    def test_backward_needs_a_scalar(self, rng):
        with pytest.raises(ValueError):
            (Tensor(rng.random(3), requires_grad=True) * 2.0).backward()

    def test_no_grad_builds_no_graph(self, rng):
        x = Tensor(rng.random((1, 1, 2, 2, 2)), requires_grad=True)
        with no_grad():
            y = F.tanh(x)
        assert not y.requires_grad
        assert F.tanh(x).requires_grad


class TestAdam:
    def test_zero_gradient_changes_nothing(self):
        p = np.array([1.0, -2.0, 3.0])
        adam_step([p], [np.zeros(3)], AdamState(lr=0.1))
        assert p.tolist() == [1.0, -2.0, 3.0]

    def test_first_step_moves_by_lr(self):
        p = np.zeros(4)
        state = AdamState(lr=0.01)
        adam_step([p], [np.full(4, 0.5)], state)
        assert np.allclose(p, -0.01, atol=1e-6)
        assert state.step == 1

    def test_descends_a_quadratic_bowl(self, rng):
        w = Tensor(rng.uniform(0.5, 1.0, 10) * rng.choice([-1, 1], 10), requires_grad=True)
        opt = Adam([w], lr=1e-2)
        norms = [np.linalg.norm(w.data)]
        for _ in range(300):
            opt.zero_grad()
            loss = F.total(w * w * 0.5)
            loss.backward()
            opt.step()
            norms.append(np.linalg.norm(w.data))
        assert norms[-1] < 0.5 * norms[0]

    def test_shapes_are_checked(self):
        with pytest.raises(ValueError):
            adam_step([np.zeros(3)], [np.zeros(4)], AdamState())
