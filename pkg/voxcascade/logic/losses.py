from typing import Tuple

from voxcascade.config.settings import LAMBDA_L1
from voxcascade.nn.functional import binary_cross_entropy, l1_loss
from voxcascade.nn.tensor import Tensor


def discriminator_loss(real_scores: Tensor, fake_scores: Tensor) -> Tensor:
    """
    -mean log D(real) - mean log(1 - D(fake)).
    """
    return binary_cross_entropy(real_scores, 1.0) + binary_cross_entropy(fake_scores, 0.0)


def generator_loss(fake_scores: Tensor, fake: Tensor, target: Tensor,
                   lambda_l1: float = LAMBDA_L1) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Non-saturating adversarial term plus the weighted L1 distance to the target.

    :return: (total, adversarial, l1) with total = adversarial + lambda_l1 * l1.
    """
    adversarial = binary_cross_entropy(fake_scores, 1.0)
    l1 = l1_loss(fake, target)
    return adversarial + l1 * lambda_l1, adversarial, l1


def gan_losses(real_scores: Tensor, fake_scores: Tensor, fake: Tensor, target: Tensor,
               lambda_l1: float = LAMBDA_L1) -> Tuple[Tensor, Tensor]:
    """
    Both objectives of one conditional GAN step.

    :param real_scores: D on (condition, real) pairs.
    :param fake_scores: D on (condition, generated) pairs.
    :param fake: generated image.
    :param target: real image.
    :param lambda_l1: weight of the L1 term.
    :return: (loss_D, loss_G).
    """
    loss_g, _, _ = generator_loss(fake_scores, fake, target, lambda_l1)
    return discriminator_loss(real_scores, fake_scores), loss_g
