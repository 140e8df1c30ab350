"""Synthetic two-letter-word corpus.

Every word lasts 0.2 s and is spelled with two letters of 0.1 s each.  A
letter's signature is a pair of formant frequencies: vowels are a harmonic
source (random f0 per utterance) shaped by the two formant resonances,
consonants are white noise through the same kind of resonances and sit about
6 dB lower.  Words are separated by 0.05 s of silence and utterances carry
0.01 s of edge silence.  A weak white background floor plus gain and
pitch jitter keep the task from being a pure template match.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..signal import SAMPLE_RATE, RngStream, Waveform, read_wav, write_wav
from ..transcript import Transcript
from .vocab import Vocabulary

WORDS = ("ba", "de", "fo", "gu", "hi", "ka", "lo", "me", "nu", "pi")

# (F1, F2) formant pair per letter, Hz.  Vowels keep F2 below 2.3 kHz,
# consonants above 2.4 kHz.
LETTER_FORMANTS = {
    "a": (730.0, 1090.0),
    "e": (530.0, 1840.0),
    "i": (270.0, 2290.0),
    "o": (570.0, 840.0),
    "u": (320.0, 1300.0),
    "b": (350.0, 2600.0),
    "d": (450.0, 3300.0),
    "f": (1300.0, 5400.0),
    "g": (650.0, 2900.0),
    "h": (1100.0, 4300.0),
    "k": (1700.0, 3700.0),
    "l": (900.0, 2500.0),
    "m": (220.0, 3000.0),
    "n": (800.0, 3600.0),
    "p": (1500.0, 4800.0),
}
VOWELS = frozenset("aeiou")

WORD_SECONDS = 0.2
GAP_SECONDS = 0.05
PAD_SECONDS = 0.01
VOWEL_RMS = 0.1
CONSONANT_RMS = 0.05
FORMANT_BANDWIDTH = 120.0
FADE_SECONDS = 0.005
MAX_WORDS = 6


def toy_vocabulary() -> Vocabulary:
    return Vocabulary(tuple(sorted(LETTER_FORMANTS)) + (" ",))


@dataclass(frozen=True)
class Utterance:
    uid: str
    waveform: Waveform
    transcript: Transcript


@dataclass(frozen=True)
class ToyCorpus:
    train: tuple
    test: tuple
    seed: int
    vocabulary: Vocabulary
    words: tuple = WORDS


def utterance_samples(n_words: int) -> int:
    seconds = n_words * WORD_SECONDS + max(n_words - 1, 0) * GAP_SECONDS + 2 * PAD_SECONDS
    return int(round(seconds * SAMPLE_RATE))


def _envelope(freqs, formants, pitch):
    env = np.zeros_like(freqs)
    for f in formants:
        env += 1.0 / (1.0 + ((freqs - f * pitch) / FORMANT_BANDWIDTH) ** 2)
    return env


def _letter(letter, n, gen, pitch, f0, gain):
    formants = LETTER_FORMANTS[letter]
    if letter in VOWELS:
        t = np.arange(n) / SAMPLE_RATE
        harmonics = f0 * np.arange(1, int(5500 // f0) + 1)
        amps = _envelope(harmonics, formants, pitch)
        phases = gen.uniform(0, 2 * np.pi, size=harmonics.size)
        seg = (amps[:, None] * np.sin(2 * np.pi * harmonics[:, None] * t + phases[:, None])).sum(0)
        rms = VOWEL_RMS
    else:
        spec = np.fft.rfft(gen.standard_normal(n))
        spec *= _envelope(np.fft.rfftfreq(n, 1.0 / SAMPLE_RATE), formants, pitch)
        seg = np.fft.irfft(spec, n=n)
        rms = CONSONANT_RMS
    seg *= gain * rms / np.sqrt(np.mean(seg**2))
    fade = int(FADE_SECONDS * SAMPLE_RATE)
    ramp = np.linspace(0.0, 1.0, fade, endpoint=False)
    seg[:fade] *= ramp
    seg[-fade:] *= ramp[::-1]
    return seg


def synthesize(words, gen: np.random.Generator) -> np.ndarray:
    """Render a word sequence to audio with fresh jitter drawn from ``gen``."""
    words = list(words)
    out = np.zeros(utterance_samples(len(words)))
    pitch = gen.uniform(0.985, 1.015)
    f0 = gen.uniform(110.0, 200.0)
    gain = gen.uniform(0.6, 1.0)
    floor = gen.uniform(0.002, 0.008)
    letter_n = int(WORD_SECONDS * SAMPLE_RATE) // 2
    pos = int(PAD_SECONDS * SAMPLE_RATE)
    gap = int(GAP_SECONDS * SAMPLE_RATE)
    for i, word in enumerate(words):
        for letter in word:
            out[pos : pos + letter_n] = _letter(letter, letter_n, gen, pitch, f0, gain)
            pos += letter_n
        if i < len(words) - 1:
            pos += gap
    return out + floor * gen.standard_normal(out.size)


def _sentence(gen):
    n = int(gen.integers(1, MAX_WORDS + 1))
    return tuple(WORDS[i] for i in gen.integers(0, len(WORDS), size=n))


def synth_corpus(seed: int, n_train: int, n_test: int) -> ToyCorpus:
    if n_train <= 0 or n_test <= 0:
        raise ValueError("n_train and n_test must be positive")
    sent_gen = RngStream(seed, stream_id=1).generator()
    test_sents = [_sentence(sent_gen) for _ in range(n_test)]
    held_out = set(test_sents)
    train_sents = []
    while len(train_sents) < n_train:
        s = _sentence(sent_gen)
        if s not in held_out:
            train_sents.append(s)

    def render(split, sents, stream):
        out = []
        for i, words in enumerate(sents):
            gen = RngStream(seed, stream_id=stream, path=(i,)).generator()
            out.append(Utterance(f"{split}-{i:05d}", Waveform(synthesize(words, gen)), Transcript(words)))
        return tuple(out)

    return ToyCorpus(
        train=render("train", train_sents, 2),
        test=render("test", test_sents, 3),
        seed=seed,
        vocabulary=toy_vocabulary(),
    )


def save_corpus(corpus: ToyCorpus, directory) -> None:
    """WAV per utterance plus ``<split>.tsv`` manifests (utt-id TAB transcript)."""
    directory = Path(directory)
    for split in ("train", "test"):
        (directory / split).mkdir(parents=True, exist_ok=True)
        lines = []
        for utt in getattr(corpus, split):
            write_wav(directory / split / f"{utt.uid}.wav", utt.waveform)
            lines.append(f"{utt.uid}\t{utt.transcript.text}\n")
        (directory / f"{split}.tsv").write_text("".join(lines))
    meta = {"seed": corpus.seed, "words": list(corpus.words), "characters": list(corpus.vocabulary.characters)}
    (directory / "corpus.json").write_text(json.dumps(meta, indent=2))


def load_corpus(directory) -> ToyCorpus:
    directory = Path(directory)
    meta = json.loads((directory / "corpus.json").read_text())
    splits = {}
    for split in ("train", "test"):
        utts = []
        for line in (directory / f"{split}.tsv").read_text().splitlines():
            if not line.strip():
                continue
            uid, text = line.split("\t", 1)
            utts.append(Utterance(uid, read_wav(directory / split / f"{uid}.wav"), Transcript.from_text(text)))
        splits[split] = tuple(utts)
    return ToyCorpus(
        train=splits["train"],
        test=splits["test"],
        seed=meta["seed"],
        vocabulary=Vocabulary(tuple(meta["characters"])),
        words=tuple(meta["words"]),
    )
