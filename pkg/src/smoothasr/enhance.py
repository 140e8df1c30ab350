"""STFT analysis/synthesis and a-priori-SNR Wiener enhancement.

The gain follows the decision-directed estimator of Scalart & Filho (1996):

    xi(t, k) = alpha * |S(t-1, k)|^2 / lambda_N(k) + (1 - alpha) * max(gamma(t, k) - 1, 0)
    G(t, k)  = clip(xi / (1 + xi), gain_floor, 1)

where ``gamma = |Y|^2 / lambda_N`` is the a-posteriori SNR.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NOISE_PSD_MODES = ("analytic-sigma", "leading-frames")
LEADING_FRAMES = 6


@dataclass(frozen=True)
class EnhanceConfig:
    frame_length: int = 512
    hop_length: int = 128
    dd_alpha: float = 0.98
    gain_floor: float = 0.1
    noise_psd_mode: str = "analytic-sigma"

    def __post_init__(self):
        if not 0.0 <= self.dd_alpha <= 1.0:
            raise ValueError("dd_alpha must lie in [0, 1]")
        if not 0.0 <= self.gain_floor <= 1.0:
            raise ValueError("gain_floor must lie in [0, 1]")
        if self.hop_length <= 0 or self.frame_length % self.hop_length:
            raise ValueError("hop_length must divide frame_length")
        if self.noise_psd_mode not in NOISE_PSD_MODES:
            raise ValueError(f"noise_psd_mode must be one of {NOISE_PSD_MODES}")


@dataclass(frozen=True)
class Spectrogram:
    frames: np.ndarray  # (..., F, B) complex
    frame_length: int
    hop_length: int
    length: int  # original signal length
    window: str = "hann"


def hann(n: int) -> np.ndarray:
    """Periodic Hann window; its square is COLA at hop n/4."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _padding(length: int, cfg: EnhanceConfig) -> tuple[int, int]:
    # Left pad of frame-hop gives every original sample the full overlap count.
    left = cfg.frame_length - cfg.hop_length
    total = length + 2 * left
    extra = (-(total - cfg.frame_length)) % cfg.hop_length
    return left, left + extra


def stft(x, cfg: EnhanceConfig = EnhanceConfig()) -> Spectrogram:
    """Frames along the second-to-last axis; leading batch axes pass through."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < cfg.frame_length:
        raise ValueError(f"signal of {x.shape[-1]} samples shorter than frame_length {cfg.frame_length}")
    left, right = _padding(x.shape[-1], cfg)
    padded = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(left, right)])
    frames = np.lib.stride_tricks.sliding_window_view(padded, cfg.frame_length, axis=-1)[..., :: cfg.hop_length, :]
    spec = np.fft.rfft(frames * hann(cfg.frame_length), axis=-1)
    return Spectrogram(spec, cfg.frame_length, cfg.hop_length, x.shape[-1])


def _overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    lead = frames.shape[:-2]
    n_frames, n = frames.shape[-2:]
    total = n + hop * (n_frames - 1)
    out = np.zeros(lead + (total,))
    if n % hop == 0:
        k = n // hop
        chunks = frames.reshape(lead + (n_frames, k, hop))
        body = out.reshape(lead + (n_frames + k - 1, hop))
        for j in range(k):
            body[..., j : j + n_frames, :] += chunks[..., :, j, :]
        return out
    for i in range(n_frames):
        out[..., i * hop : i * hop + n] += frames[..., i, :]
    return out


def istft(spec: Spectrogram, cfg: EnhanceConfig = EnhanceConfig()) -> np.ndarray:
    if spec.frame_length != cfg.frame_length or spec.hop_length != cfg.hop_length:
        raise ValueError("spectrogram was produced with a different frame/hop configuration")
    n, hop = cfg.frame_length, cfg.hop_length
    if spec.frames.shape[-1] != n // 2 + 1:
        raise ValueError("spectrogram bin count does not match frame_length")
    window = hann(n)
    frames = np.fft.irfft(spec.frames, n=n, axis=-1) * window
    out = _overlap_add(frames, hop)
    norm = _overlap_add(np.broadcast_to(window**2, (frames.shape[-2], n)), hop)
    left, _ = _padding(spec.length, cfg)
    return out[..., left : left + spec.length] / norm[left : left + spec.length]


def noise_psd(spec: Spectrogram, sigma: float, cfg: EnhanceConfig) -> np.ndarray:
    """Noise power per bin, shape (..., B)."""
    if cfg.noise_psd_mode == "analytic-sigma":
        energy = float(np.sum(hann(cfg.frame_length) ** 2))
        return np.full(spec.frames.shape[:-2] + spec.frames.shape[-1:], sigma**2 * energy)
    power = np.abs(spec.frames[..., :LEADING_FRAMES, :]) ** 2
    return power.mean(axis=-2)


def wiener_gains(spec: Spectrogram, lambda_n: np.ndarray, cfg: EnhanceConfig) -> np.ndarray:
    """Decision-directed gains, shape (..., F, B), each in [gain_floor, 1]."""
    power = np.abs(spec.frames) ** 2
    gains = np.ones_like(power)
    if cfg.gain_floor >= 1.0:
        return gains
    lambda_n = np.broadcast_to(lambda_n, power.shape[:-2] + power.shape[-1:])
    noisy = lambda_n > 0
    if not np.any(noisy):
        return gains
    lam = np.where(noisy, lambda_n, 1.0)
    gamma = power / lam[..., None, :]
    alpha = cfg.dd_alpha
    prev_clean = None
    for t in range(power.shape[-2]):
        ml = np.maximum(gamma[..., t, :] - 1.0, 0.0)
        if prev_clean is None:
            xi = ml
        else:
            xi = alpha * prev_clean / lam + (1.0 - alpha) * ml
        g = np.clip(xi / (1.0 + xi), cfg.gain_floor, 1.0)
        g = np.where(noisy, g, 1.0)
        gains[..., t, :] = g
        prev_clean = g**2 * power[..., t, :]
    return gains


def asnr_enhance(x, sigma: float, cfg: EnhanceConfig = EnhanceConfig()) -> np.ndarray:
    """Denoise ``x`` (shape (n,) or (B, n)) assuming white noise of deviation ``sigma``."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    spec = stft(x, cfg)
    gains = wiener_gains(spec, noise_psd(spec, sigma, cfg), cfg)
    cleaned = Spectrogram(spec.frames * gains, spec.frame_length, spec.hop_length, spec.length)
    return istft(cleaned, cfg)


def asnr_enhance_batch(xs: np.ndarray, sigma: float, cfg: EnhanceConfig = EnhanceConfig()) -> np.ndarray:
    """Enhance every row of a (B, n) array; rows are processed independently."""
    return asnr_enhance(np.atleast_2d(xs), sigma, cfg)
