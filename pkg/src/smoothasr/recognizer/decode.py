from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..transcript import Transcript, WordHypothesis
from .ctc import log_softmax
from .vocab import BLANK, Vocabulary


@dataclass(frozen=True)
class DecodeResult:
    transcript: Transcript
    chars: str
    char_alignment: tuple  # first frame of each emitted character
    word_hyps: tuple


def best_path(values) -> tuple[list[int], list[int]]:
    """Collapse the framewise argmax: returns (labels, first frame of each label's run)."""
    path = np.argmax(values, axis=-1)
    labels, frames = [], []
    prev = BLANK
    for t, lab in enumerate(path):
        lab = int(lab)
        if lab != BLANK and lab != prev:
            labels.append(lab)
            frames.append(t)
        prev = lab
    return labels, frames


def greedy_decode(logits, vocabulary: Vocabulary) -> DecodeResult:
    """Best-path decode.

    A word starts at the frame of its first character and lasts until one hop
    after the frame of its last character.
    """
    values = np.asarray(logits.values)
    labels, frames = best_path(values)
    conf = np.exp(log_softmax(values).max(axis=-1))
    chars = "".join(vocabulary.char(lab) for lab in labels)

    words, hyps = [], []
    current = []
    for ch, t in list(zip(chars, frames)) + [(" ", None)]:
        if ch != " ":
            current.append((ch, t))
            continue
        if current:
            word = "".join(c for c, _ in current)
            first, last = current[0][1], current[-1][1]
            start = float(logits.frame_times[first])
            duration = (last - first) * logits.hop_seconds + logits.hop_seconds
            confidence = float(np.mean([conf[t] for _, t in current]))
            words.append(word)
            hyps.append(WordHypothesis(word, start, duration, min(max(confidence, 0.0), 1.0)))
            current = []
    return DecodeResult(Transcript(tuple(words)), chars, tuple(frames), tuple(hyps))
