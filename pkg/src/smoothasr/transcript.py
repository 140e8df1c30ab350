from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Transcript:
    words: tuple = ()

    def __post_init__(self):
        words = tuple(self.words)
        for w in words:
            if not isinstance(w, str) or not w or any(c.isspace() for c in w):
                raise ValueError(f"invalid word token {w!r}")
        object.__setattr__(self, "words", words)

    @classmethod
    def from_text(cls, text: str) -> "Transcript":
        return cls(tuple(text.split()))

    @property
    def text(self) -> str:
        return " ".join(self.words)

    def __str__(self):
        return self.text

    def __len__(self):
        return len(self.words)


@dataclass(frozen=True)
class WordHypothesis:
    word: str
    start: float
    duration: float
    confidence: float = 1.0

    def __post_init__(self):
        if self.start < 0:
            raise ValueError("start must be >= 0")
        if self.duration <= 0:
            raise ValueError("duration must be > 0")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")

    @property
    def end(self) -> float:
        return self.start + self.duration
