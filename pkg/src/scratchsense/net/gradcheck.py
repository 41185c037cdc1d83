"""Finite-difference check of ScratchNet's reverse-mode gradients."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .. import oracles
from .model import ModelConfig, ScratchNet
from .train import cross_entropy_loss, loss_and_gradients

log = logging.getLogger(__name__)

TINY = ModelConfig(in_channels=2, feature_dim=4, kernel_width=3, window=60, lookahead=10,
                   encoder_channels=(2, 3, 4))


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_parameter: str
    n_parameters: int
    seed: int
    draws: int

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error <= tol


def _pattern(model: ScratchNet, x: np.ndarray) -> tuple[list[np.ndarray], float]:
    probe: list = []
    out = model.graph(x, probe=probe)
    feats = out["features"].data
    return [z > 0 for z in probe], float(np.sqrt((feats ** 2).sum(axis=1)).min())


def _draw(cfg: ModelConfig, seed: int):
    model = ScratchNet.create(cfg, seed, np.float64)
    rng = np.random.default_rng([seed, 7])
    # nonzero biases: with zero biases every masked TSM cell sits exactly on a ReLU kink
    for name in model.params:
        if name.endswith(".b"):
            model.params[name] = rng.uniform(-0.2, 0.2, model.params[name].shape)
    x = rng.standard_normal((1, cfg.in_channels, cfg.window))
    y = rng.integers(0, 3, (1, cfg.window))
    return model, x, y


def gradient_check(cfg: ModelConfig = TINY, seed: int = 0, h: float = 1e-4, max_draws: int = 20) -> GradCheckResult:
    """Max relative error between backprop and central differences over every parameter.

    Central differences only approximate the gradient where the loss is
    smooth on [p - h, p + h].  A draw is discarded, before any comparison,
    if some coordinate step flips a ReLU or the tick norm can reach zero;
    the next seed is tried instead.
    """
    for draw in range(max_draws):
        model, x, y = _draw(cfg, seed + draw)
        base, min_norm = _pattern(model, x)
        smooth = min_norm > 10 * h

        def loss(params):
            nonlocal smooth
            if smooth:
                pat, norm = _pattern(model, x)
                if norm <= 10 * h or any(not np.array_equal(a, b) for a, b in zip(pat, base)):
                    smooth = False
            return cross_entropy_loss(model.graph(x)["logits"].data, y)

        numeric = oracles.finite_difference_gradients(loss, model.params, h)
        if not smooth:
            log.info("draw %d crosses a kink within h; redrawing", seed + draw)
            continue
        _, analytic = loss_and_gradients(model, x, y)
        worst, worst_name = 0.0, ""
        for name in analytic:
            err = float(oracles.relative_error(analytic[name], numeric[name]).max())
            if err > worst:
                worst, worst_name = err, name
        return GradCheckResult(worst, worst_name, model.n_parameters(), seed + draw, draw + 1)
    raise RuntimeError(f"no kink-free evaluation point in {max_draws} draws")
