"""Loss, gradients, Adam and the mini-batch trainer for ScratchNet."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .model import N_CLASSES, ScratchNet

log = logging.getLogger(__name__)


def extract_features(model: ScratchNet, window: np.ndarray) -> np.ndarray:
    """(T, C) or (B, C, T) window(s) -> features (B, D, T)."""
    return model.graph(_channels_first(window))["features"].data


def compute_tsm(features: np.ndarray, lookahead: int) -> np.ndarray:
    """Cosine TSM for features shaped (T, D) or (B, D, T); returns (T, L) or (B, T, L)."""
    f = np.asarray(features, dtype=float)
    single = f.ndim == 2
    if single:
        f = f.T[None]
    out = ad.similarity_matrix(ad.constant(f), lookahead).data
    return out[0] if single else out


def _channels_first(window: np.ndarray) -> np.ndarray:
    w = np.asarray(window)
    if w.ndim == 2:
        # a MotionTrace slice is (ticks, channels)
        return w.T[None]
    return w


def forward(model: ScratchNet, window: np.ndarray) -> np.ndarray:
    """Logits (B, 3, T) in class order Static, Scratch, Motion."""
    return model.graph(_channels_first(window))["logits"].data


def softmax(logits: np.ndarray, axis: int = 1) -> np.ndarray:
    return np.exp(ad.log_softmax(logits, axis=axis))


def cross_entropy_loss(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean over ticks of -log softmax(logits)[label]; logits (T, 3) or (B, 3, T)."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    if logits.ndim == 2:
        logits = logits.T[None]
        labels = labels[None]
    return float(ad.softmax_cross_entropy(ad.constant(logits), labels).data)


def loss_and_gradients(model: ScratchNet, windows: np.ndarray, labels: np.ndarray,
                       loss_scale: float = 1.0) -> tuple[float, dict[str, np.ndarray]]:
    """Reverse-mode gradients of the (scaled) cross-entropy w.r.t. every parameter."""
    x = _channels_first(windows)
    labels = np.asarray(labels)
    if labels.ndim == 1:
        labels = labels[None]
    leaves = {k: ad.Tensor(v, requires_grad=True, name=k) for k, v in model.params.items()}
    logits = model.graph(x, leaves)["logits"]
    loss = ad.softmax_cross_entropy(logits, labels)
    if loss_scale != 1.0:
        loss = ad.scale(loss, loss_scale)
    loss.backward()
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in leaves.items()}
    return float(loss.data), grads


def backward(model: ScratchNet, window: np.ndarray, labels: np.ndarray) -> dict[str, np.ndarray]:
    return loss_and_gradients(model, window, labels)[1]


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState
              ) -> tuple[dict[str, np.ndarray], AdamState]:
    """Bias-corrected Adam; updates ``params`` and ``state`` in place and returns both."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return params, state


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    iterations: int = 3000
    lr: float = 1e-3
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")


class TrainingDataError(ValueError):
    pass


def batch_indices(n: int, batch_size: int, seed: int, iteration: int) -> np.ndarray:
    """Indices for a 0-based iteration: epoch-wise seeded permutations, read cyclically.

    Depends only on (n, batch, seed, iteration) so a resumed run replays the
    same batches as an uninterrupted one.
    """
    start = iteration * batch_size
    out = np.empty(batch_size, dtype=np.intp)
    filled = 0
    while filled < batch_size:
        epoch, offset = divmod(start + filled, n)
        perm = np.random.default_rng([seed, epoch]).permutation(n)
        take = min(batch_size - filled, n - offset)
        out[filled:filled + take] = perm[offset:offset + take]
        filled += take
    return out


@dataclass
class TrainState:
    model: ScratchNet
    adam: AdamState
    iteration: int = 0
    losses: list[float] = field(default_factory=list)


def check_training_data(windows: np.ndarray, labels: np.ndarray) -> None:
    if len(windows) == 0:
        raise TrainingDataError("training set is empty")
    if len(windows) != len(labels):
        raise TrainingDataError("windows and labels differ in count")
    if not np.any(labels == 1):
        raise TrainingDataError("training split has no Scratch ticks")


def train(windows: np.ndarray, labels: np.ndarray, model: ScratchNet, config: TrainConfig,
          state: TrainState | None = None, callback=None) -> TrainState:
    """Adam on shuffled mini-batches until ``config.iterations``.

    windows: (N, C, T), labels: (N, T).  Passing a saved ``state`` resumes
    from its iteration; ``callback(state)`` runs after every step.
    """
    check_training_data(windows, labels)
    dtype = np.dtype(config.dtype)
    if state is None:
        model.params = {k: v.astype(dtype) for k, v in model.params.items()}
        state = TrainState(model, AdamState(lr=config.lr))
    x_all = np.asarray(windows, dtype=dtype)
    y_all = np.asarray(labels)
    while state.iteration < config.iterations:
        idx = batch_indices(len(x_all), config.batch_size, config.seed, state.iteration)
        loss, grads = loss_and_gradients(state.model, x_all[idx], y_all[idx])
        adam_step(state.model.params, grads, state.adam)
        state.losses.append(loss)
        state.iteration += 1
        if state.iteration % 100 == 0:
            log.info("iteration %d loss %.4f", state.iteration, loss)
        if callback is not None:
            callback(state)
    return state


def tile_windows(trace: np.ndarray, window: int) -> tuple[np.ndarray, int]:
    """(ticks, C) -> (n_windows, C, window); the tail is padded with the last tick."""
    trace = np.asarray(trace)
    n = trace.shape[0]
    if n < window:
        raise ValueError(f"trace has {n} ticks, shorter than one {window}-tick window")
    n_win = -(-n // window)
    pad = n_win * window - n
    if pad:
        trace = np.concatenate([trace, np.repeat(trace[-1:], pad, axis=0)], axis=0)
    return trace.reshape(n_win, window, -1).transpose(0, 2, 1), pad


def predict_night(model: ScratchNet, trace, batch_size: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Per-tick Scratch probability and argmax label over a whole night."""
    data = trace.data if hasattr(trace, "data") else np.asarray(trace)
    n = data.shape[0]
    windows, _ = tile_windows(data, model.cfg.window)
    probs = []
    for i in range(0, len(windows), batch_size):
        logits = forward(model, windows[i:i + batch_size].astype(model.dtype))
        probs.append(softmax(logits.astype(np.float64), axis=1))
    p = np.concatenate(probs, axis=0).transpose(0, 2, 1).reshape(-1, N_CLASSES)[:n]
    return p[:, 1].copy(), p.argmax(axis=1).astype(np.int8)
