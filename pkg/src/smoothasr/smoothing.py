"""Smoothed recognizer: noisy copies -> optional enhancement -> greedy decode -> vote."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .enhance import EnhanceConfig, asnr_enhance_batch
from .recognizer.decode import DecodeResult, greedy_decode
from .recognizer.model import LogitsSequence, ModelParams, logits_batch, make_logits
from .signal import RngStream
from .transcript import Transcript
from .voting import MAX_HYPOTHESES, average_logits, majority_vote, rover

VOTES = ("one-sentence", "majority", "logit-avg", "rover")


@dataclass(frozen=True)
class SmoothingConfig:
    sigma: float = 0.0
    n_samples: int = 16
    enhance: bool = False
    vote: str = "rover"
    seed: int = 0
    enhance_cfg: EnhanceConfig = field(default_factory=EnhanceConfig)

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 1 <= self.n_samples <= MAX_HYPOTHESES:
            raise ValueError(f"n_samples must lie in [1, {MAX_HYPOTHESES}]")
        if self.vote not in VOTES:
            raise ValueError(f"vote must be one of {VOTES}")


@dataclass(frozen=True)
class SmoothedOutput:
    transcript: Transcript
    samples: tuple  # DecodeResult per successful noise draw
    logits: tuple  # LogitsSequence per successful noise draw


def noisy_inputs(x, sigma: float, n: int, rng: RngStream) -> np.ndarray:
    """(n, len(x)) array; row i uses stream ``rng.child(i)``."""
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0:
        return np.repeat(x[None], n, axis=0)
    return np.stack([x + sigma * rng.child(i).normal(x.shape) for i in range(n)])


def enhance_rows(xs, sigma: float, cfg: EnhanceConfig) -> np.ndarray:
    return asnr_enhance_batch(xs, sigma, cfg)


def vote(decodes, logits, vocabulary, method: str) -> Transcript:
    if method == "one-sentence":
        return decodes[0].transcript
    if method == "majority":
        return majority_vote([d.transcript for d in decodes])
    if method == "logit-avg":
        return average_logits(logits, vocabulary)
    if method == "rover":
        return rover([d.word_hyps for d in decodes])
    raise ValueError(f"unknown vote {method!r}")


def smoothed_transcribe(params: ModelParams, x, cfg: SmoothingConfig, rng: RngStream | None = None) -> SmoothedOutput:
    if rng is None:
        rng = RngStream(cfg.seed)
    xs = noisy_inputs(x, cfg.sigma, cfg.n_samples, rng)
    if cfg.enhance:
        xs = enhance_rows(xs, cfg.sigma, cfg.enhance_cfg)
    values = logits_batch(params, xs)
    decodes: list[DecodeResult] = []
    seqs: list[LogitsSequence] = []
    for row in values:
        if not np.all(np.isfinite(row)):
            continue
        seq = make_logits(row, params.features)
        seqs.append(seq)
        decodes.append(greedy_decode(seq, params.vocabulary))
    if not decodes:
        raise RuntimeError("every noisy sample failed to produce finite logits")
    transcript = vote(decodes, seqs, params.vocabulary, cfg.vote)
    return SmoothedOutput(transcript, tuple(decodes), tuple(seqs))
