import numpy as np
import pytest

from voxcascade.logic.losses import (discriminator_loss, gan_losses,
                                     generator_loss)
from voxcascade.nn.tensor import Tensor


def scores(value):
    return Tensor(np.full((1, 1, 2, 2, 2), value), requires_grad=True)


def test_discriminator_loss_closed_form():
    loss = discriminator_loss(scores(0.8), scores(0.3))
    assert float(loss.data) == pytest.approx(-np.log(0.8) - np.log(0.7))


def test_generator_loss_adds_the_weighted_l1():
    fake = Tensor(np.zeros((1, 1, 4, 4, 4)), requires_grad=True)
    target = Tensor(np.full((1, 1, 4, 4, 4), 0.5))
    total, adversarial, l1 = generator_loss(scores(0.25), fake, target, lambda_l1=10.0)
    assert float(adversarial.data) == pytest.approx(-np.log(0.25))
    assert float(l1.data) == pytest.approx(0.5)
    assert float(total.data) == pytest.approx(-np.log(0.25) + 5.0)


def test_generator_gradient_pushes_fake_toward_target():
    fake = Tensor(np.zeros((1, 1, 2, 2, 2)), requires_grad=True)
    target = Tensor(np.ones((1, 1, 2, 2, 2)))
    total, _, _ = generator_loss(scores(0.5), fake, target)
    total.backward()
    assert np.all(fake.grad < 0)


def test_gan_losses_pair():
    fake = Tensor(np.zeros((1, 1, 2, 2, 2)))
    loss_d, loss_g = gan_losses(scores(0.9), scores(0.1), fake, fake, lambda_l1=100.0)
    assert float(loss_d.data) == pytest.approx(-2 * np.log(0.9))
    assert float(loss_g.data) == pytest.approx(-np.log(0.1))
