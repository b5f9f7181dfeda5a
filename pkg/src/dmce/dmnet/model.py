"""Lightweight convolutional noise predictor with a shared sinusoidal time embedding.

Architecture (all kernels 3x3, same padding, NHWC internally)::

    2 -> enc[0] -> ... -> enc[-1] = C_max     ReLU after every encoder conv
    feature * t_s + t_b                       per-channel affine from the time embedding
    C_max -> dec[0] -> ... -> dec[-1] -> 2    ReLU everywhere except the output conv

The time embedding is a sinusoidal position code of length ``C_init`` mapped
by one linear layer to ``2*C_max`` values, split into ``(t_s, t_b)``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..diffusion import NoiseSchedule, posterior_coefficients
from ..fileformat import CorruptFileError, read_container, write_container
from ..numerics import channels_to_complex, complex_to_channels
from .layers import conv_backward, conv_forward

WEIGHTS_MAGIC = b"DMNW"
WEIGHTS_VERSION = 1


@dataclass(frozen=True)
class DMNetConfig:
    n_rx: int = 16
    n_tx: int = 4
    c_init: int = 16
    c_max: int = 64
    encoder_widths: tuple[int, ...] = (32, 64)
    decoder_widths: tuple[int, ...] = (32, 16)
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "encoder_widths", tuple(int(c) for c in self.encoder_widths))
        object.__setattr__(self, "decoder_widths", tuple(int(c) for c in self.decoder_widths))
        if self.c_init <= 0 or self.c_init % 2:
            raise ValueError(f"c_init must be a positive even number, got {self.c_init}")
        if not self.encoder_widths or self.encoder_widths[-1] != self.c_max:
            raise ValueError("the last encoder width must equal c_max")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"unsupported dtype {self.dtype}")

    @classmethod
    def from_dict(cls, d: dict) -> "DMNetConfig":
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder_widths"] = list(self.encoder_widths)
        d["decoder_widths"] = list(self.decoder_widths)
        return d

    def conv_shapes(self) -> list[tuple[str, int, int, bool]]:
        """``(name, in_ch, out_ch, relu)`` for every conv layer in evaluation order."""
        layers = []
        prev = 2
        for i, c in enumerate(self.encoder_widths):
            layers.append((f"enc{i}", prev, c, True))
            prev = c
        widths = self.decoder_widths + (2,)
        for i, c in enumerate(widths):
            layers.append((f"dec{i}", prev, c, i < len(widths) - 1))
            prev = c
        return layers

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        """Parameter names and shapes in the order they are serialized."""
        shapes = {}
        for name, cin, cout, _ in self.conv_shapes():
            shapes[f"{name}.weight"] = (cout, cin, 3, 3)
            shapes[f"{name}.bias"] = (cout,)
        shapes["emb.weight"] = (2 * self.c_max, self.c_init)
        shapes["emb.bias"] = (2 * self.c_max,)
        return shapes

    def check_input(self, n_rx: int, n_tx: int) -> None:
        if (n_rx, n_tx) != (self.n_rx, self.n_tx):
            raise ValueError(f"network trained for {self.n_rx}x{self.n_tx}, got {n_rx}x{n_tx}")


@dataclass
class DMNetParams:
    config: DMNetConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name):
        return self.params[name]

    def astype(self, dtype) -> "DMNetParams":
        return DMNetParams(self.config, {k: v.astype(dtype) for k, v in self.params.items()})

    def copy(self) -> "DMNetParams":
        return DMNetParams(self.config, {k: v.copy() for k, v in self.params.items()})

    def compute_params(self) -> dict[str, np.ndarray]:
        dt = np.dtype(self.config.dtype)
        return {k: v if v.dtype == dt else v.astype(dt) for k, v in self.params.items()}


def init_params(config: DMNetConfig, rng) -> DMNetParams:
    """He-normal conv kernels, zero biases, embedding starting near the identity FiLM."""
    params = {}
    for name, cin, cout, relu in config.conv_shapes():
        std = np.sqrt((2.0 if relu else 1.0) / (9 * cin))
        params[f"{name}.weight"] = rng.normal(0.0, std, (cout, cin, 3, 3))
        params[f"{name}.bias"] = np.zeros(cout)
    params["emb.weight"] = rng.normal(0.0, 0.1 / np.sqrt(config.c_init), (2 * config.c_max, config.c_init))
    params["emb.bias"] = np.concatenate([np.ones(config.c_max), np.zeros(config.c_max)])
    return DMNetParams(config, params)


def embed_time(t, c_init: int) -> np.ndarray:
    """Sinusoidal position code: ``[sin(t w_0), cos(t w_0), sin(t w_1), ...]``, ``w_i = 1e4^(-2i/c_init)``.

    Scalar ``t`` gives a vector of length ``c_init``; an array gives one row per entry.
    """
    if c_init % 2:
        raise ValueError(f"embedding width must be even, got {c_init}")
    t = np.asarray(t, dtype=np.float64)
    freqs = 10000.0 ** (-np.arange(c_init // 2) * 2.0 / c_init)
    arg = t[..., None] * freqs
    out = np.empty(t.shape + (c_init,))
    out[..., 0::2] = np.sin(arg)
    out[..., 1::2] = np.cos(arg)
    return out


def count_params(params: DMNetParams) -> int:
    return int(sum(v.size for v in params.params.values()))


def analytic_param_count(config: DMNetConfig) -> int:
    convs = sum(9 * cin * cout + cout for _, cin, cout, _ in config.conv_shapes())
    return convs + config.c_init * 2 * config.c_max + 2 * config.c_max


def _forward(x, t, p, config, keep):
    """NHWC forward. Returns the output and (if ``keep``) the cache for backward."""
    b = x.shape[0]
    t = np.broadcast_to(np.asarray(t), (b,))
    emb = embed_time(t, config.c_init).astype(x.dtype)
    u = emb @ p["emb.weight"].T + p["emb.bias"]
    scale, shift = u[:, :config.c_max], u[:, config.c_max:]
    cache = {"emb": emb, "scale": scale, "layers": []}
    h = x
    n_enc = len(config.encoder_widths)
    for i, (name, _, _, relu) in enumerate(config.conv_shapes()):
        if i == n_enc:
            cache["film_in"] = h
            h = h * scale[:, None, None, :] + shift[:, None, None, :]
        out, cols = conv_forward(h, p[f"{name}.weight"], p[f"{name}.bias"])
        if relu:
            out = np.maximum(out, 0)
        if keep:
            cache["layers"].append((name, cols, h.shape, out if relu else None))
        h = out
    return h, (cache if keep else None)


def _backward(gout, cache, p, config):
    grads = {}
    g = gout
    n_enc = len(config.encoder_widths)
    for i in range(len(cache["layers"]) - 1, -1, -1):
        name, cols, in_shape, act = cache["layers"][i]
        if act is not None:
            g = g * (act > 0)
        g, grads[f"{name}.weight"], grads[f"{name}.bias"] = conv_backward(
            g, cols, p[f"{name}.weight"], in_shape, need_input_grad=i > 0)
        if i == n_enc:
            a = cache["film_in"]
            gscale = np.einsum("bhwc,bhwc->bc", g, a)
            gshift = g.sum(axis=(1, 2))
            g = g * cache["scale"][:, None, None, :]
            gu = np.concatenate([gscale, gshift], axis=1)
            grads["emb.weight"] = gu.T @ cache["emb"]
            grads["emb.bias"] = gu.sum(axis=0)
    return grads


def net_forward(x: np.ndarray, t, params: DMNetParams) -> np.ndarray:
    """Noise prediction for a ``(B, 2, H, W)`` real tensor (real/imag channels).

    ``t`` is a step index or one per batch element.  Computation runs in the
    configured dtype; the result is returned as float64.
    """
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[1] != 2:
        raise ValueError(f"expected input of shape (B, 2, H, W), got {x.shape}")
    p = params.compute_params()
    xh = np.ascontiguousarray(x.transpose(0, 2, 3, 1), dtype=params.config.dtype)
    out, _ = _forward(xh, t, p, params.config, keep=False)
    return out.transpose(0, 3, 1, 2).astype(np.float64)


def predict_eps(h_t: np.ndarray, t, params: DMNetParams) -> np.ndarray:
    """Complex noise estimate for complex latents of shape ``(..., n_rx, n_tx)``."""
    x = complex_to_channels(h_t.reshape((-1,) + h_t.shape[-2:]))
    return channels_to_complex(net_forward(x, t, params)).reshape(h_t.shape)


def mean_from_eps(h_t: np.ndarray, eps_hat: np.ndarray, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """Reverse-step mean with ``h0`` replaced by its noise-prediction estimate."""
    ab = schedule.alpha_bar_at(schedule.check_step(t))
    h0_hat = (h_t - np.sqrt(1 - ab) * eps_hat) / np.sqrt(ab)
    if t == 1:
        return h0_hat
    c0, ct = posterior_coefficients(t, schedule)
    return c0 * h0_hat + ct * h_t


def predict_mean(h_t: np.ndarray, t: int, params: DMNetParams, schedule: NoiseSchedule) -> np.ndarray:
    """One learned reverse step ``h_t -> h_{t-1}`` on angular-domain latents."""
    schedule.check_step(t)
    params.config.check_input(*h_t.shape[-2:])
    return mean_from_eps(h_t, predict_eps(h_t, t, params), t, schedule)


def save_params(params: DMNetParams, path) -> None:
    shapes = params.config.param_shapes()
    payload = np.concatenate([params.params[k].astype(np.float64).ravel() for k in shapes])
    write_container(path, WEIGHTS_MAGIC, WEIGHTS_VERSION,
                    {"config": params.config.to_dict(), "layers": list(shapes)}, payload)


def load_params(path, expect: DMNetConfig | None = None) -> DMNetParams:
    """Load weights; with ``expect`` the stored architecture must match it."""
    meta, payload = read_container(path, WEIGHTS_MAGIC, WEIGHTS_VERSION)
    try:
        config = DMNetConfig.from_dict(meta["config"])
    except (KeyError, TypeError) as exc:
        raise CorruptFileError(f"{path}: missing or invalid network config") from exc
    if expect is not None:
        mismatch = {k for k, v in expect.to_dict().items() if k != "dtype" and config.to_dict()[k] != v}
        if mismatch:
            raise ValueError(f"{path}: network config mismatch in {sorted(mismatch)}")
    shapes = config.param_shapes()
    total = sum(int(np.prod(s)) for s in shapes.values())
    if payload.size != total:
        raise CorruptFileError(f"{path}: expected {total} parameters, found {payload.size}")
    params, off = {}, 0
    for name, shape in shapes.items():
        n = int(np.prod(shape))
        params[name] = payload[off:off + n].reshape(shape).copy()
        off += n
    return DMNetParams(config, params)
