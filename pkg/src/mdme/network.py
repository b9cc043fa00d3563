"""Dual-encoder motion embedding network and its ablation variants.

The structured branch runs three conv1d+batchnorm+ELU stages over the
goal window (channels = goal dims, length = history), decomposes the
resulting phase-channel matrix with a multi-level db2 DWT, and compresses
each subband to its Shannon entropy (1 + 3*levels values). The
unstructured branch is an MLP emitting a diagonal Gaussian sampled with
the reparameterization trick. The decoder fuses both latents with the
latest goal frame, proprioception, and the previous action.

All forward paths accept a single window (history, goal_dim) or a batch
(B, history, goal_dim) and are recorded on the active gradient tape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from . import wavelet as W
from .errors import ConfigError, DimensionError, NumericError
from .rng import Rng
from .tensor import Tensor

ABLATION_KEYS = (
    "full",
    "no-entropy",
    "no-history",
    "no-latest-frame",
    "wavelet-only",
    "vae-only",
    "fft-instead-of-dwt",
)

_LOG2 = math.log(2.0)
_LOGSIG_MIN, _LOGSIG_MAX = -6.0, 3.0


@dataclass(frozen=True)
class MdmeConfig:
    """Architecture hyperparameters for one platform preset."""

    history: int
    goal_dim: int
    phase_channels: int            # conv output channels feeding the DWT
    levels: int                    # DWT decomposition levels
    latent_dim: int
    enc_hidden: tuple[int, ...]
    dec_hidden: tuple[int, ...]
    action_dim: int
    proprio_dim: int
    kernel_size: int = 5
    conv_channels: tuple[int, ...] = ()   # defaults to (2*phase, phase, phase)
    ablation: str = "full"
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        if self.ablation not in ABLATION_KEYS:
            raise ConfigError(
                f"unknown ablation {self.ablation!r}; valid keys: {', '.join(ABLATION_KEYS)}"
            )
        if not self.conv_channels:
            object.__setattr__(
                self, "conv_channels",
                (2 * self.phase_channels, self.phase_channels, self.phase_channels),
            )
        if len(self.conv_channels) != 3:
            raise ConfigError(f"expected 3 conv stages, got {self.conv_channels}")
        if self.conv_channels[-1] != self.phase_channels:
            raise ConfigError("last conv stage must emit the phase-channel count")
        if self.history < 1 or self.goal_dim < 1:
            raise ConfigError("history and goal_dim must be >= 1")

    @property
    def entropy_count(self) -> int:
        return 1 + 3 * self.levels

    @property
    def pyramid_count(self) -> int:
        return W.coefficient_count(self.phase_channels, self.history, self.levels)

    @property
    def spectrum_count(self) -> int:
        return self.phase_channels * (self.history // 2 + 1)

    def structured_width(self) -> int:
        if self.ablation == "vae-only":
            return 0
        if self.ablation == "no-entropy":
            return self.pyramid_count
        if self.ablation == "fft-instead-of-dwt":
            return self.spectrum_count
        return self.entropy_count

    def latent_width(self) -> int:
        return 0 if self.ablation == "wavelet-only" else self.latent_dim

    def decoder_input_width(self) -> int:
        width = self.structured_width() + self.latent_width()
        if self.ablation != "no-latest-frame":
            width += self.goal_dim
        return width + self.proprio_dim + self.action_dim


def quadruped_preset(**overrides) -> MdmeConfig:
    """12-joint quadruped: 25-frame window over 16 raw goal dims."""
    cfg = MdmeConfig(
        history=25, goal_dim=16, phase_channels=25, levels=4, latent_dim=32,
        enc_hidden=(512, 256), dec_hidden=(512, 256, 128),
        action_dim=12, proprio_dim=33,
    )
    return replace(cfg, **overrides) if overrides else cfg


def humanoid_preset(**overrides) -> MdmeConfig:
    """Humanoid: 5-frame window over axis-angle joints + base state (75 dims)."""
    cfg = MdmeConfig(
        history=5, goal_dim=75, phase_channels=15, levels=2, latent_dim=64,
        enc_hidden=(512, 256), dec_hidden=(512, 256, 128),
        action_dim=19, proprio_dim=47,
    )
    return replace(cfg, **overrides) if overrides else cfg


def synth_preset(**overrides) -> MdmeConfig:
    """Desk-scale surrogate sized for the bundled synthetic corpus."""
    cfg = MdmeConfig(
        history=25, goal_dim=16, phase_channels=8, levels=4, latent_dim=16,
        enc_hidden=(128, 64), dec_hidden=(128, 64, 32),
        action_dim=12, proprio_dim=0,
    )
    return replace(cfg, **overrides) if overrides else cfg


def tiny_preset(**overrides) -> MdmeConfig:
    """Small enough for exhaustive finite-difference checks."""
    cfg = MdmeConfig(
        history=5, goal_dim=4, phase_channels=4, levels=1, latent_dim=4,
        enc_hidden=(8, 8), dec_hidden=(8, 8, 8),
        action_dim=3, proprio_dim=2,
    )
    return replace(cfg, **overrides) if overrides else cfg


MODEL_PRESETS = {
    "quadruped": quadruped_preset,
    "humanoid": humanoid_preset,
    "synth-quadruped": synth_preset,
    "tiny": tiny_preset,
}


@dataclass
class StochasticLatent:
    """Diagonal Gaussian embedding; sigma is kept via log-sigma internally."""

    mu: Tensor
    sigma: Tensor
    log_sigma: Tensor
    z: Tensor


@dataclass
class EntropyVector:
    """Per-subband Shannon entropies in canonical subband order."""

    values: np.ndarray
    levels: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape[-1] != 1 + 3 * self.levels:
            raise DimensionError(
                f"entropy vector length {self.values.shape[-1]} != 1+3*{self.levels}"
            )


def subband_entropy(coeffs) -> Tensor:
    """Shannon entropy (bits) of the normalized squared coefficients.

    p_i = w_i^2 / sum w^2 over every element of the subband; p is clamped at
    1e-12 inside the log and an all-zero subband scores 0 by convention.
    """
    coeffs = coeffs if isinstance(coeffs, Tensor) else Tensor(coeffs)
    if coeffs.ndim < 2:
        coeffs = T.reshape(coeffs, (1, -1))
    ent = _entropy_tail2(coeffs)
    return T.reshape(ent, ent.shape[:-2]) if ent.ndim > 2 else T.reshape(ent, ())


def _entropy_tail2(band: Tensor) -> Tensor:
    """Entropy over the last two axes, keepdims; batch axes pass through."""
    w2 = T.square(band)
    total = T.clamp_min(T.sum_tail2(w2), 1e-300)  # zero subband -> p = 0 -> S = 0
    p = T.div_bcast(w2, total)
    plog = T.mul(p, T.mul(T.log(p), 1.0 / _LOG2))
    return T.neg(T.sum_tail2(plog))


def pyramid_entropies(pyramid: W.WaveletPyramid) -> Tensor:
    """Entropies of every subband in canonical order; shape (..., 1+3J)."""
    pieces = []
    for _, band in pyramid.subbands():
        ent = _entropy_tail2(band)
        pieces.append(T.reshape(ent, ent.shape[:-2] + (1,)))
    return T.concat(pieces, axis=-1)


_DFT_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _dft_matrices(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _DFT_CACHE:
        k = np.arange(n // 2 + 1)[:, None]
        t = np.arange(n)[None, :]
        ang = 2.0 * np.pi * k * t / n
        _DFT_CACHE[n] = (np.cos(ang), -np.sin(ang))
    return _DFT_CACHE[n]


def magnitude_spectrum(x: Tensor) -> Tensor:
    """|DFT| along the last axis, one-sided; (..., C, T) -> (..., C*(T//2+1))."""
    cos_m, sin_m = _dft_matrices(x.shape[-1])
    re = T.const_axis_matmul(x, cos_m, -1)
    im = T.const_axis_matmul(x, sin_m, -1)
    mag = T.sqrt(T.add(T.square(re), T.square(im)))
    lead = mag.shape[:-2]
    return T.reshape(mag, lead + (mag.shape[-2] * mag.shape[-1],))


def kl_to_standard_normal(latent: StochasticLatent) -> Tensor:
    """0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2), meaned over any batch."""
    mu2 = T.square(latent.mu)
    sig2 = T.square(latent.sigma)
    inner = T.sub(T.sub(T.add(mu2, sig2), 1.0), T.mul(latent.log_sigma, 2.0))
    total = T.mul(T.tsum(inner), 0.5)
    batch = latent.mu.size // latent.mu.shape[-1]
    return T.mul(total, 1.0 / batch) if batch > 1 else total


def he_uniform(rng: Rng, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(cfg: MdmeConfig, rng: Rng) -> dict[str, Tensor]:
    """Fresh parameter set; creation order is fixed so seeds reproduce bit-for-bit."""
    params: dict[str, Tensor] = {}

    def conv(name: str, c_in: int, c_out: int):
        k = cfg.kernel_size
        params[f"{name}.w"] = Tensor(he_uniform(rng, (c_out, c_in, k), c_in * k))
        params[f"{name}.b"] = Tensor(np.zeros(c_out))
        params[f"{name}.bn.gamma"] = Tensor(np.ones(c_out))
        params[f"{name}.bn.beta"] = Tensor(np.zeros(c_out))
        params[f"{name}.bn.run_mean"] = Tensor(np.zeros(c_out))
        params[f"{name}.bn.run_var"] = Tensor(np.ones(c_out))

    def dense(name: str, d_in: int, d_out: int, scale: float = 1.0):
        # the draw always happens so the seed stream is identical across variants
        w = scale * he_uniform(rng, (d_in, d_out), d_in)
        params[f"{name}.w"] = Tensor(w)
        params[f"{name}.b"] = Tensor(np.zeros(d_out))

    if cfg.ablation != "vae-only":
        c_prev = cfg.goal_dim
        for i, c_out in enumerate(cfg.conv_channels, start=1):
            conv(f"conv{i}", c_prev, c_out)
            c_prev = c_out
    if cfg.ablation != "wavelet-only":
        d_prev = cfg.goal_dim * cfg.history
        for i, d_out in enumerate(cfg.enc_hidden, start=1):
            dense(f"enc{i}", d_prev, d_out)
            d_prev = d_out
        dense("enc_mu", d_prev, cfg.latent_dim)
        dense("enc_logsig", d_prev, cfg.latent_dim)
    d_prev = cfg.decoder_input_width()
    for i, d_out in enumerate(cfg.dec_hidden, start=1):
        dense(f"dec{i}", d_prev, d_out)
        d_prev = d_out
    dense("dec_out", d_prev, cfg.action_dim, scale=0.0)  # zero action at init
    return params


def trainable_names(params: dict[str, Tensor]) -> list[str]:
    return [k for k in params if not k.endswith((".run_mean", ".run_var"))]


def _window_batch(windows, cfg: MdmeConfig) -> tuple[Tensor, bool]:
    """Normalize window input to a (B, history, goal_dim) tensor.

    Accepts a GoalWindow, an array, or a Tensor; tensors stay on the tape so
    gradients flow back to the caller's window.
    """
    if isinstance(windows, Tensor):
        t, single = windows, windows.ndim == 2
        if single:
            t = T.reshape(t, (1,) + t.shape)
    else:
        arr = (windows.frames if hasattr(windows, "frames")
               else np.asarray(windows, dtype=np.float64))
        single = arr.ndim == 2
        if single:
            arr = arr[None]
        t = Tensor(arr)
    if t.ndim != 3 or t.shape[1] != cfg.history or t.shape[2] != cfg.goal_dim:
        raise ConfigError(
            f"window batch shape {t.shape} does not match "
            f"(history={cfg.history}, goal_dim={cfg.goal_dim})"
        )
    return t, single


class MdmeModel:
    """Configured parameter set plus the differentiable forward paths."""

    def __init__(self, cfg: MdmeConfig, params: dict[str, Tensor] | None = None,
                 init_rng: Rng | None = None):
        self.cfg = cfg
        self.filters = W.db2_filters()
        self.params = params if params is not None else init_params(cfg, init_rng or Rng(0))

    def _bn(self, prefix: str, x: Tensor, train: bool, update_stats: bool) -> Tensor:
        p = self.params
        gamma, beta = p[f"{prefix}.gamma"], p[f"{prefix}.beta"]
        rm, rv = p[f"{prefix}.run_mean"], p[f"{prefix}.run_var"]
        if train:
            y, mean, var = T.batchnorm_train(x, gamma, beta, self.cfg.bn_eps)
            if update_stats:
                m = self.cfg.bn_momentum
                rm.data = (1.0 - m) * rm.data + m * mean
                rv.data = (1.0 - m) * rv.data + m * var
            return y
        return T.batchnorm_eval(x, gamma, beta, rm.data, rv.data, self.cfg.bn_eps)

    def _conv_frontend(self, x: Tensor, train: bool, update_stats: bool) -> Tensor:
        for i in range(1, 4):
            x = T.conv1d(x, self.params[f"conv{i}.w"], self.params[f"conv{i}.b"])
            x = self._bn(f"conv{i}.bn", x, train, update_stats)
            x = T.elu(x)
        return x

    def structured_features(self, windows, train: bool = False,
                            update_stats: bool = False) -> Tensor:
        """Ablation-aware structured branch; (B, structured_width())."""
        cfg = self.cfg
        if cfg.ablation == "vae-only":
            raise ConfigError("vae-only variant has no structured branch")
        win, single = _window_batch(windows, cfg)
        x = T.transpose_last2(win)  # (B, goal_dim, history)
        phase = self._conv_frontend(x, train, update_stats)
        if cfg.ablation == "fft-instead-of-dwt":
            feats = magnitude_spectrum(phase)
        else:
            pyramid = W.dwt2d_multilevel(phase, cfg.levels, self.filters)
            feats = pyramid.flatten() if cfg.ablation == "no-entropy" else pyramid_entropies(pyramid)
        return T.reshape(feats, feats.shape[1:]) if single else feats

    def encode_structured(self, windows, train: bool = False,
                          update_stats: bool = False) -> Tensor:
        """Wavelet-entropy embedding, always 1+3J values regardless of ablation."""
        cfg = self.cfg
        if cfg.ablation == "vae-only":
            raise ConfigError("vae-only variant has no structured branch")
        win, single = _window_batch(windows, cfg)
        x = T.transpose_last2(win)
        phase = self._conv_frontend(x, train, update_stats)
        pyramid = W.dwt2d_multilevel(phase, cfg.levels, self.filters)
        ents = pyramid_entropies(pyramid)
        return T.reshape(ents, (cfg.entropy_count,)) if single else ents

    def encode_unstructured(self, windows, rng: Rng | None = None,
                            mode: str = "sample") -> StochasticLatent:
        cfg = self.cfg
        if cfg.ablation == "wavelet-only":
            raise ConfigError("wavelet-only variant has no stochastic branch")
        if mode not in ("sample", "mean"):
            raise ConfigError(f"mode must be 'sample' or 'mean', got {mode!r}")
        win, single = _window_batch(windows, cfg)
        h = T.reshape(win, (win.shape[0], cfg.history * cfg.goal_dim))
        for i in range(1, len(cfg.enc_hidden) + 1):
            h = T.elu(T.linear(h, self.params[f"enc{i}.w"], self.params[f"enc{i}.b"]))
        mu = T.linear(h, self.params["enc_mu.w"], self.params["enc_mu.b"])
        log_sigma = T.clamp(
            T.linear(h, self.params["enc_logsig.w"], self.params["enc_logsig.b"]),
            _LOGSIG_MIN, _LOGSIG_MAX,
        )
        for name, t in (("enc_mu", mu), ("enc_logsig", log_sigma)):
            if not np.isfinite(t.data).all():
                raise NumericError(f"non-finite output at layer {name}")
        sigma = T.exp(log_sigma)
        if mode == "sample":
            if rng is None:
                raise ConfigError("sample mode needs an Rng")
            eps = Tensor(rng.normal(size=mu.shape))
            z = T.add(mu, T.mul(sigma, eps))
        else:
            z = mu
        if single:
            mu, sigma, log_sigma, z = (T.reshape(t, (cfg.latent_dim,))
                                       for t in (mu, sigma, log_sigma, z))
        return StochasticLatent(mu=mu, sigma=sigma, log_sigma=log_sigma, z=z)

    def decode(self, structured, latent, latest_goal, proprio, prev_action) -> Tensor:
        """Fuse embeddings with state context and emit joint position targets."""
        cfg = self.cfg
        pieces: list[Tensor] = []
        if cfg.ablation != "vae-only":
            pieces.append(_lift2d(structured, cfg.structured_width(), "structured features"))
        if cfg.ablation != "wavelet-only":
            z = latent.z if isinstance(latent, StochasticLatent) else latent
            pieces.append(_lift2d(z, cfg.latent_dim, "stochastic latent"))
        if cfg.ablation != "no-latest-frame":
            pieces.append(_lift2d(latest_goal, cfg.goal_dim, "latest goal frame"))
        if cfg.proprio_dim:
            pieces.append(_lift2d(proprio, cfg.proprio_dim, "proprioception"))
        pieces.append(_lift2d(prev_action, cfg.action_dim, "previous action"))
        batches = {p.shape[0] for p in pieces}
        if len(batches) != 1:
            raise ConfigError(f"decoder inputs disagree on batch size: {sorted(batches)}")
        h = T.concat(pieces, axis=-1)
        for i in range(1, len(cfg.dec_hidden) + 1):
            h = T.elu(T.linear(h, self.params[f"dec{i}.w"], self.params[f"dec{i}.b"]))
        return T.linear(h, self.params["dec_out.w"], self.params["dec_out.b"])

    def forward(self, windows, proprio=None, prev_action=None, rng: Rng | None = None,
                mode: str = "mean", train: bool = False, update_stats: bool = False):
        """Full pipeline; returns (actions, latent or None, structured or None)."""
        cfg = self.cfg
        win, single = _window_batch(windows, cfg)
        if not np.isfinite(win.data).all():
            raise NumericError("goal window contains non-finite values")
        b = win.shape[0]
        structured = None
        if cfg.ablation != "vae-only":
            structured = self.structured_features(win, train=train, update_stats=update_stats)
        latent = None
        if cfg.ablation != "wavelet-only":
            latent = self.encode_unstructured(win, rng=rng, mode=mode)
        latest = T.last_along_axis1(win)
        proprio = np.zeros((b, cfg.proprio_dim)) if proprio is None else np.asarray(proprio, float)
        prev_action = (np.zeros((b, cfg.action_dim)) if prev_action is None
                       else np.asarray(prev_action, float))
        if proprio.ndim == 1:
            proprio = proprio[None]
        if prev_action.ndim == 1:
            prev_action = prev_action[None]
        actions = self.decode(structured, latent, latest, proprio, prev_action)
        if single:
            actions = T.reshape(actions, (cfg.action_dim,))
        return actions, latent, structured


def _lift2d(x, width: int, what: str) -> Tensor:
    t = x if isinstance(x, Tensor) else Tensor(x)
    if t.ndim == 1:
        t = T.reshape(t, (1, t.shape[0]))
    if t.ndim != 2 or t.shape[-1] != width:
        raise ConfigError(f"{what}: expected width {width}, got shape {t.shape}")
    return t


def build_ablation(key: str, cfg: MdmeConfig) -> MdmeConfig:
    """Config for one named model variant; 'no-history' collapses the window."""
    if key not in ABLATION_KEYS:
        raise ConfigError(f"unknown ablation {key!r}; valid keys: {', '.join(ABLATION_KEYS)}")
    if key == "no-history":
        return replace(cfg, ablation=key, history=1)
    return replace(cfg, ablation=key)
