"""Finite-difference validation of every differentiable operation and of
the composed network + loss.

Each check builds the op's output, collapses it to a scalar with a fixed
random weighting, computes the analytic gradient with one backward pass,
and compares against central differences.  Dropout is disabled (its mask
would change between the two perturbed evaluations).
"""

from __future__ import annotations

from typing import Callable, Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, finite_difference, relative_error
from .losses import LossWeights, combined_loss_t
from .tcn import TcnConfig, init_tcn_params, tcn_forward


def _check(
    build: Callable[[list[Tensor]], Tensor],
    arrays: list[np.ndarray],
    step: float,
    rng: np.random.Generator,
) -> float:
    """Max relative error between backprop and finite differences.

    ``build`` maps input tensors to the op output; the output is reduced
    to a scalar via a weight drawn once, so repeated evaluations see the
    same function.
    """
    weight: dict[str, np.ndarray] = {}

    def run() -> tuple[Tensor, list[Tensor]]:
        tensors = [Tensor(a) for a in arrays]
        out = build(tensors)
        if "w" not in weight:
            weight["w"] = rng.normal(size=out.shape)
        return ad.tsum(ad.mul(out, weight["w"])), tensors

    scalar, tensors = run()
    scalar.backward()
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.values) for t in tensors]
    numeric = finite_difference(lambda: run()[0].item(), arrays, step=step)
    return max(relative_error(a, n) for a, n in zip(analytic, numeric))


def primitive_checks(seed: int = 0, step: float = 1e-5) -> Iterator[tuple[str, float]]:
    """Yield (name, max relative error) for each primitive operation."""
    rng = np.random.default_rng(seed)

    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(3, 4))
    c = rng.normal(size=(4,))  # broadcasts against (3, 4)
    yield "add", _check(lambda ts: ad.add(ts[0], ts[1]), [a.copy(), b.copy()], step, rng)
    yield "add broadcast", _check(lambda ts: ad.add(ts[0], ts[1]), [a.copy(), c.copy()], step, rng)
    yield "sub", _check(lambda ts: ad.sub(ts[0], ts[1]), [a.copy(), b.copy()], step, rng)
    yield "mul", _check(lambda ts: ad.mul(ts[0], ts[1]), [a.copy(), b.copy()], step, rng)
    denom = rng.normal(size=(3, 4)) + 3.0
    yield "div", _check(lambda ts: ad.div(ts[0], ts[1]), [a.copy(), denom.copy()], step, rng)
    yield "exp", _check(lambda ts: ad.exp(ts[0]), [a.copy()], step, rng)
    pos = np.abs(rng.normal(size=(3, 4))) + 0.5
    yield "sqrt", _check(lambda ts: ad.sqrt(ts[0]), [pos.copy()], step, rng)
    away = rng.normal(size=(3, 4))
    away += np.where(np.abs(away) < 0.1, 0.3, 0.0)  # keep clear of the |.| kink
    yield "abs", _check(lambda ts: ad.absolute(ts[0]), [away.copy()], step, rng)
    yield "relu", _check(lambda ts: ad.relu(ts[0]), [away.copy()], step, rng)
    yield "sigmoid", _check(lambda ts: ad.sigmoid(ts[0]), [a.copy()], step, rng)
    yield "sum axis", _check(lambda ts: ad.tsum(ts[0], axis=1), [a.copy()], step, rng)
    yield "mean keepdims", _check(
        lambda ts: ad.tmean(ts[0], axis=(0,), keepdims=True), [a.copy()], step, rng)
    yield "reshape", _check(lambda ts: ad.reshape(ts[0], (4, 3)), [a.copy()], step, rng)
    x3 = rng.normal(size=(2, 3, 6))
    yield "slice_time", _check(lambda ts: ad.slice_time(ts[0], 1, 5), [x3.copy()], step, rng)
    yield "take_joints", _check(
        lambda ts: ad.take_joints(ts[0], [1], axis=1), [x3.copy()], step, rng)
    vecs = rng.normal(size=(4, 3)) + 0.5  # keep norms well away from zero
    yield "l2norm", _check(lambda ts: ad.l2norm(ts[0], axis=1), [vecs.copy()], step, rng)

    x = rng.normal(size=(2, 3, 8))
    k = rng.normal(size=(4, 3, 3))
    bias = rng.normal(size=(4,))
    yield "conv1d", _check(
        lambda ts: ad.conv1d(ts[0], ts[1], ts[2]), [x.copy(), k.copy(), bias.copy()], step, rng)
    yield "conv1d stride2", _check(
        lambda ts: ad.conv1d(ts[0], ts[1], ts[2], stride=2),
        [x.copy(), k.copy(), bias.copy()], step, rng)

    scale = rng.normal(size=(3,)) + 1.5
    shift = rng.normal(size=(3,))
    yield "batchnorm train", _check(
        lambda ts: ad.batchnorm_1d(ts[0], ts[1], ts[2], np.zeros(3), np.ones(3), "train"),
        [x.copy(), scale.copy(), shift.copy()], step, rng)
    rm_eval = rng.normal(size=3)
    rv_eval = np.abs(rng.normal(size=3)) + 0.5
    yield "batchnorm eval", _check(
        lambda ts: ad.batchnorm_1d(ts[0], ts[1], ts[2], rm_eval, rv_eval, "eval"),
        [x.copy(), scale.copy(), shift.copy()], step, rng)

    kp = rng.normal(size=(2, 6, 5))
    logits = rng.normal(size=(2, 3, 5)) * 3.0
    logits += np.where(np.abs(logits) < 0.05, 0.2, 0.0)  # keep probs off the gate threshold
    yield "occlusion_gate", _check(
        lambda ts: ad.occlusion_gate(ts[0], ts[1], 0.5)[0], [kp.copy(), logits.copy()], step, rng)


def composed_network_check(
    n_joints: int = 3,
    channels: int = 8,
    blocks: int = 1,
    variant: str = "many_vectors",
    seed: int = 0,
    step: float = 1e-5,
) -> float:
    """Finite-difference check of d(combined loss)/d(every parameter).

    Runs the full network in train mode with dropout off, so batch
    statistics are exercised while the forward stays deterministic.  The
    hard occlusion gate is piecewise constant in the logits, so away from
    the threshold the analytic gradient (mask held fixed) and the
    numerical one agree.
    """
    cfg = TcnConfig(kernel_w=3, channels=channels, blocks=blocks,
                    dropout_p=0.0, variant=variant)
    rng = np.random.default_rng(seed)
    rf = cfg.receptive_field
    batch = 2
    x = rng.normal(size=(batch, 2 * n_joints, rf))
    # occlusion inputs live in [0, 1]; exact binary values with zero-init
    # biases park logits exactly on the gate threshold, where the hard
    # mask is discontinuous and finite differences are meaningless
    occ_in = rng.uniform(0.0, 1.0, size=(batch, n_joints, rf))
    gt3 = rng.normal(size=(batch, 3 * n_joints))
    occ_gt = (occ_in if variant == "many_vectors" else occ_in[:, :, rf // 2]).round()
    weights = LossWeights(lambda1=1.0, lambda2=1.0)

    params = init_tcn_params(cfg, n_joints, seed=seed)

    def loss_value() -> float:
        pose3d, occ_pred = tcn_forward(x, occ_in, cfg, params, mode="train")
        return combined_loss_t(pose3d, gt3, occ_pred, occ_gt, weights, 0).item()

    params.zero_grad()
    pose3d, occ_pred = tcn_forward(x, occ_in, cfg, params, mode="train")
    loss = combined_loss_t(pose3d, gt3, occ_pred, occ_gt, weights, 0)
    loss.backward()
    grads = params.gradients()

    worst = 0.0
    for name, tensor in params.trainable_items():
        numeric = finite_difference(loss_value, [tensor.values], step=step)[0]
        worst = max(worst, relative_error(grads[name], numeric))
    return worst
