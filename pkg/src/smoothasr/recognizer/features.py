"""Differentiable log-power front end with context stacking.

Works on a single waveform of shape (n,) or a batch of shape (B, n); the
frame axis is always second to last on the output.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..enhance import hann


EDGE_MODES = ("replicate", "log-kappa")


@dataclass(frozen=True)
class FeatureConfig:
    frame_length: int = 200
    hop_length: int = 100
    context: int = 2
    kappa: float = 1e-6
    edge: str = "replicate"  # context padding: "replicate" edge frames or constant "log-kappa"

    def __post_init__(self):
        if self.edge not in EDGE_MODES:
            raise ValueError(f"edge must be one of {EDGE_MODES}")

    @property
    def n_bins(self) -> int:
        return self.frame_length // 2 + 1

    @property
    def dim(self) -> int:
        return self.n_bins * (2 * self.context + 1)

    def n_frames(self, n_samples: int) -> int:
        return 1 + (n_samples - self.frame_length) // self.hop_length


@dataclass
class _Cache:
    cfg: FeatureConfig
    n_samples: int
    spectrum: np.ndarray
    power: np.ndarray


def _frames(x, cfg):
    view = np.lib.stride_tricks.sliding_window_view(x, cfg.frame_length, axis=-1)
    return view[..., :: cfg.hop_length, :]


def log_power(x, cfg: FeatureConfig = FeatureConfig()):
    """Return (log(|rfft(w*frame)|^2 + kappa), cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < cfg.frame_length:
        raise ValueError(f"input of {x.shape[-1]} samples shorter than frame_length {cfg.frame_length}")
    spectrum = np.fft.rfft(_frames(x, cfg) * hann(cfg.frame_length), axis=-1)
    power = spectrum.real**2 + spectrum.imag**2
    return np.log(power + cfg.kappa), _Cache(cfg, x.shape[-1], spectrum, power)


def log_power_backward(grad, cache: _Cache) -> np.ndarray:
    cfg = cache.cfg
    n, hop = cfg.frame_length, cfg.hop_length
    g_power = grad / (cache.power + cfg.kappa)
    # d|X_k|^2/du_m = 2 Re(conj(X_k) e^{-2pi i k m / n}), so the frame gradient is
    # 2 Re sum_k c_k e^{+2pi i k m / n} with c = g * X.  Doubling the DC and
    # Nyquist terms turns that one-sided sum into (n/2) * irfft.
    coeffs = g_power * cache.spectrum
    coeffs[..., 0] *= 2.0
    if n % 2 == 0:
        coeffs[..., -1] *= 2.0
    g_frames = n * np.fft.irfft(coeffs, n=n, axis=-1) * hann(n)
    lead = g_frames.shape[:-2]
    n_frames = g_frames.shape[-2]
    out = np.zeros(lead + (cache.n_samples,))
    if n % hop == 0:
        # overlap-add in n/hop strided passes instead of one pass per frame
        k = n // hop
        chunks = g_frames.reshape(lead + (n_frames, k, hop))
        span = (n_frames - 1) * hop + n
        body = out[..., :span].reshape(lead + (n_frames + k - 1, hop))
        for j in range(k):
            body[..., j : j + n_frames, :] += chunks[..., :, j, :]
        return out
    for t in range(n_frames):
        start = t * hop
        out[..., start : start + n] += g_frames[..., t, :]
    return out


def _sources(t: int, c: int) -> np.ndarray:
    """Input frame read by context slot i of output frame j, shape (2c+1, t)."""
    return np.clip(np.arange(t)[None, :] + np.arange(-c, c + 1)[:, None], 0, t - 1)


def stack_context(feats, cfg: FeatureConfig = FeatureConfig(), pad_value: float | None = None):
    """Concatenate each frame with its +-context neighbours.

    Edges repeat the first/last frame, or use the constant ``pad_value``
    (default log(kappa)) when ``cfg.edge == "log-kappa"``.
    """
    c = cfg.context
    t = feats.shape[-2]
    if cfg.edge == "replicate" and pad_value is None:
        src = _sources(t, c)
        return np.concatenate([feats[..., src[i], :] for i in range(2 * c + 1)], axis=-1)
    if pad_value is None:
        pad_value = float(np.log(cfg.kappa))
    pad = [(0, 0)] * (feats.ndim - 2) + [(c, c), (0, 0)]
    padded = np.pad(feats, pad, constant_values=pad_value)
    return np.concatenate([padded[..., i : i + t, :] for i in range(2 * c + 1)], axis=-1)


def stack_context_backward(grad, cfg: FeatureConfig = FeatureConfig(), replicate: bool | None = None):
    c = cfg.context
    t = grad.shape[-2]
    b = cfg.n_bins
    if replicate is None:
        replicate = cfg.edge == "replicate"
    out = np.zeros(grad.shape[:-1] + (b,))
    for i in range(2 * c + 1):
        # slot i of output frame j reads input frame j + i - c
        shift = i - c
        lo, hi = max(0, -shift), min(t, t - shift)
        out[..., lo + shift : hi + shift, :] += grad[..., lo:hi, i * b : (i + 1) * b]
        if replicate:
            # frames that read past an edge read the edge frame itself
            if lo > 0:
                out[..., 0, :] += grad[..., :lo, i * b : (i + 1) * b].sum(-2)
            if hi < t:
                out[..., t - 1, :] += grad[..., hi:, i * b : (i + 1) * b].sum(-2)
    return out


def featurize(x, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Context-stacked log-power frames, shape (..., T, (2c+1)*bins)."""
    feats, _ = log_power(x, cfg)
    return stack_context(feats, cfg)
