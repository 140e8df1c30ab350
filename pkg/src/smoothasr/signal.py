"""Waveforms, SNR arithmetic, Gaussian noise injection, norm-ball projections and WAV I/O.

Samples are kept as float64 everywhere inside the package; quantization to
PCM16 (and clipping to [-1, 1]) only happens in :func:`write_wav`.
"""
from __future__ import annotations

import math
import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SAMPLE_RATE = 16000
PCM_SCALE = 32768.0


@dataclass(frozen=True, eq=False)
class Waveform:
    """Mono audio. ``np.asarray(wav)`` gives the float64 sample array."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).reshape(-1)
        if samples.size == 0:
            raise ValueError("waveform must be non-empty")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.samples
        return self.samples.astype(dtype)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def __add__(self, delta):
        return Waveform(self.samples + np.asarray(delta, dtype=np.float64), self.sample_rate)


@dataclass(frozen=True)
class RngStream:
    """Named random stream.

    The generator is PCG64 seeded through ``SeedSequence([seed, stream_id, *path])``;
    normals come from NumPy's ziggurat sampler.  Equal keys give equal draws.
    """

    seed: int
    stream_id: int = 0
    path: tuple = field(default=())

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + (int(index),))

    def generator(self) -> np.random.Generator:
        key = [self.seed & 0xFFFFFFFFFFFFFFFF, self.stream_id, *self.path]
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))

    def normal(self, shape) -> np.ndarray:
        return self.generator().standard_normal(shape)


def _as_samples(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def snr_db(x, delta) -> float:
    """20*log10(||x|| / ||delta||).  Returns ``inf`` for a zero perturbation."""
    x_norm = float(np.linalg.norm(_as_samples(x)))
    d_norm = float(np.linalg.norm(_as_samples(delta)))
    if x_norm == 0.0:
        raise ValueError("SNR undefined for a zero-norm signal")
    if d_norm == 0.0:
        return math.inf
    return 20.0 * math.log10(x_norm / d_norm)


def linf_bound_from_snr(x, snr: float) -> float:
    """Per-utterance bound ``||x||_2 / 10**(snr/20)``."""
    x = _as_samples(x)
    if x.size == 0:
        raise ValueError("empty signal")
    return float(np.linalg.norm(x)) / 10.0 ** (snr / 20.0)


def add_gaussian_noise(x, sigma: float, rng: RngStream) -> np.ndarray:
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    x = _as_samples(x)
    if sigma == 0:
        return x.copy()
    return x + sigma * rng.normal(x.shape)


def project_linf(delta, epsilon: float) -> np.ndarray:
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    return np.clip(_as_samples(delta), -epsilon, epsilon)


def project_l2(delta, radius: float) -> np.ndarray:
    if radius < 0:
        raise ValueError("radius must be >= 0")
    delta = _as_samples(delta)
    norm = float(np.linalg.norm(delta))
    if norm <= radius:
        return delta.copy()
    return delta * (radius / norm)


class WavFormatError(ValueError):
    """Unsupported or corrupt WAV file; ``field`` names the offending header field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def write_wav(path, wav) -> None:
    samples = _as_samples(wav)
    rate = getattr(wav, "sample_rate", SAMPLE_RATE)
    if rate != SAMPLE_RATE:
        raise WavFormatError("sample_rate", f"only {SAMPLE_RATE} Hz is supported, got {rate}")
    pcm = np.clip(np.round(samples * PCM_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(SAMPLE_RATE)
        fh.writeframes(pcm.tobytes())


def read_wav(path) -> Waveform:
    path = Path(path)
    try:
        fh = wave.open(str(path), "rb")
    except (wave.Error, EOFError, struct.error) as exc:
        raise WavFormatError("header", str(exc)) from exc
    with fh:
        if fh.getnchannels() != 1:
            raise WavFormatError("channels", f"expected mono, got {fh.getnchannels()}")
        if fh.getsampwidth() != 2:
            raise WavFormatError("sample_width", f"expected 16-bit PCM, got {8 * fh.getsampwidth()}-bit")
        if fh.getframerate() != SAMPLE_RATE:
            raise WavFormatError("sample_rate", f"expected {SAMPLE_RATE}, got {fh.getframerate()}")
        n = fh.getnframes()
        raw = fh.readframes(n)
    if len(raw) != 2 * n:
        raise WavFormatError("data", f"truncated: {len(raw)} bytes for {n} frames")
    return Waveform(np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM_SCALE)
