"""Scratch detector: conv1d feature extractor -> TSM -> conv2d pyramid -> decoder.

Class order of the logits is fixed: 0 Static, 1 Scratch, 2 Motion.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

N_CLASSES = 3
N_FEATURE_LAYERS = 7


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 8
    feature_dim: int = 32
    kernel_width: int = 7
    window: int = 900
    lookahead: int = 45
    encoder_channels: tuple[int, int, int] = (16, 32, 64)
    decoder_channels: tuple[int, int, int] | None = None
    decoder_kernel: int = 3
    feature_skip: bool = True

    def __post_init__(self):
        object.__setattr__(self, "encoder_channels", tuple(int(c) for c in self.encoder_channels))
        if self.decoder_channels is not None:
            object.__setattr__(self, "decoder_channels", tuple(int(c) for c in self.decoder_channels))
        problems = []
        if self.in_channels < 1:
            problems.append("in_channels must be >= 1")
        if self.feature_dim < 1:
            problems.append("feature_dim must be >= 1")
        if self.kernel_width < 1 or self.kernel_width % 2 == 0:
            problems.append("kernel_width must be a positive odd integer")
        if self.window < 4:
            problems.append("window must be >= 4")
        if not 1 <= self.lookahead <= self.window:
            problems.append("lookahead must be in [1, window]")
        if len(self.encoder_channels) != 3 or min(self.encoder_channels) < 1:
            problems.append("encoder_channels must be three positive widths")
        if self.decoder_channels is not None and (len(self.decoder_channels) != 3 or min(self.decoder_channels) < 1):
            problems.append("decoder_channels must be three positive widths")
        if self.decoder_kernel < 1 or self.decoder_kernel % 2 == 0:
            problems.append("decoder_kernel must be a positive odd integer")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def decoder_widths(self) -> tuple[int, int, int]:
        return self.decoder_channels or self.encoder_channels

    def level_shapes(self) -> list[tuple[int, int]]:
        """(time, lookahead) extent of each pyramid level."""
        shapes = [(self.window, self.lookahead)]
        for _ in range(2):
            t, l = shapes[-1]
            shapes.append(((t + 1) // 2, (l + 1) // 2))
        return shapes

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder_channels"] = list(self.encoder_channels)
        d["decoder_channels"] = None if self.decoder_channels is None else list(self.decoder_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["encoder_channels"] = tuple(d["encoder_channels"])
        if d.get("decoder_channels") is not None:
            d["decoder_channels"] = tuple(d["decoder_channels"])
        return cls(**d)


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    D, K = cfg.feature_dim, cfg.kernel_width
    cin = cfg.in_channels
    for i in range(N_FEATURE_LAYERS):
        shapes[f"feat.{i}.w"] = (D, cin, K)
        shapes[f"feat.{i}.b"] = (D,)
        cin = D
    c0, c1, c2 = cfg.encoder_channels
    shapes["enc.0.w"] = (c0, 2, 3, 3)
    shapes["enc.0.b"] = (c0,)
    shapes["enc.1.w"] = (c1, c0, 3, 3)
    shapes["enc.1.b"] = (c1,)
    shapes["enc.2.w"] = (c2, c1, 3, 3)
    shapes["enc.2.b"] = (c2,)
    (_, l0), (_, l1), (_, l2) = cfg.level_shapes()
    h0, h1, h2 = cfg.decoder_widths
    kd = cfg.decoder_kernel
    shapes["dec.2.w"] = (h2, c2 * l2, kd)
    shapes["dec.2.b"] = (h2,)
    shapes["dec.1.w"] = (h1, h2 + c1 * l1, kd)
    shapes["dec.1.b"] = (h1,)
    skip = D if cfg.feature_skip else 0
    shapes["dec.0.w"] = (h0, h1 + c0 * l0 + skip, kd)
    shapes["dec.0.b"] = (h0,)
    shapes["head.w"] = (N_CLASSES, h0, 1)
    shapes["head.b"] = (N_CLASSES,)
    return shapes


def init_parameters(cfg: ModelConfig, seed: int, dtype=np.float64) -> dict[str, np.ndarray]:
    """He-style uniform fan-in initialisation; biases start at zero."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in parameter_shapes(cfg).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return params


@dataclass
class ScratchNet:
    cfg: ModelConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(cls, cfg: ModelConfig, seed: int = 0, dtype=np.float64) -> "ScratchNet":
        return cls(cfg, init_parameters(cfg, seed, dtype))

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "ScratchNet":
        return ScratchNet(self.cfg, {k: v.copy() for k, v in self.params.items()})

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3:
            raise ValueError(f"expected (batch, channels, ticks) input, got shape {x.shape}")
        _, c, t = x.shape
        if t != self.cfg.window:
            raise ValueError(f"window must be exactly {self.cfg.window} ticks, got {t}")
        if c != self.cfg.in_channels:
            raise ValueError(f"model expects {self.cfg.in_channels} channels, got {c}")
        if not np.all(np.isfinite(x)):
            raise ValueError("input window contains non-finite values")
        return x

    def graph(self, x: np.ndarray, leaves: dict[str, Tensor] | None = None,
              probe: list | None = None) -> dict[str, Tensor]:
        """Build the forward graph; returns named intermediates incl. 'logits'.

        ``probe``, if given, collects every ReLU input array in graph order.
        """
        x = self._check_input(x)
        cfg = self.cfg
        if leaves is None:
            leaves = {k: ad.constant(v) for k, v in self.params.items()}
        p = leaves

        def relu(z: Tensor) -> Tensor:
            if probe is not None:
                probe.append(z.data)
            return ad.relu(z)
        h = ad.constant(x)
        for i in range(N_FEATURE_LAYERS):
            h = ad.conv1d(h, p[f"feat.{i}.w"], p[f"feat.{i}.b"])
            # last layer stays linear: a ReLU here leaves ticks with all-zero features
            if i < N_FEATURE_LAYERS - 1:
                h = relu(h)
        features = h

        tsm = ad.similarity_matrix(features, cfg.lookahead)
        B, T, L = tsm.shape
        valid = valid_mask(T, L).astype(x.dtype)
        enc_in = ad.concat([ad.reshape(tsm, (B, 1, T, L)), ad.constant(np.broadcast_to(valid, (B, 1, T, L)))], axis=1)
        e0 = relu(ad.conv2d(enc_in, p["enc.0.w"], p["enc.0.b"], stride=1))
        e1 = relu(ad.conv2d(e0, p["enc.1.w"], p["enc.1.b"], stride=2))
        e2 = relu(ad.conv2d(e1, p["enc.2.w"], p["enc.2.b"], stride=2))

        def flat(e: Tensor) -> Tensor:
            b, c, t, l = e.shape
            return ad.reshape(ad.transpose(e, (0, 1, 3, 2)), (b, c * l, t))

        d2 = relu(ad.conv1d(flat(e2), p["dec.2.w"], p["dec.2.b"]))
        u1 = ad.upsample_time(d2, e1.shape[2])
        d1 = relu(ad.conv1d(ad.concat([u1, flat(e1)], axis=1), p["dec.1.w"], p["dec.1.b"]))
        u0 = ad.upsample_time(d1, e0.shape[2])
        parts = [u0, flat(e0)] + ([features] if cfg.feature_skip else [])
        d0 = relu(ad.conv1d(ad.concat(parts, axis=1), p["dec.0.w"], p["dec.0.b"]))
        logits = ad.conv1d(d0, p["head.w"], p["head.b"])
        return {"features": features, "tsm": tsm, "e0": e0, "e1": e1, "e2": e2, "logits": logits}


def valid_mask(T: int, L: int) -> np.ndarray:
    """True where t + l < T."""
    t = np.arange(T)[:, None]
    lag = np.arange(L)[None, :]
    return (t + lag) < T
