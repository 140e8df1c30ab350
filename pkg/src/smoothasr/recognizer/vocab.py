from __future__ import annotations

from dataclasses import dataclass

BLANK = 0


@dataclass(frozen=True)
class Vocabulary:
    """Character inventory; index 0 is the CTC blank, characters start at 1."""

    characters: tuple

    def __post_init__(self):
        chars = tuple(self.characters)
        if len(set(chars)) != len(chars):
            raise ValueError("duplicate characters")
        if " " not in chars:
            raise ValueError("vocabulary must contain the space character")
        if any(len(c) != 1 for c in chars):
            raise ValueError("characters must be single symbols")
        object.__setattr__(self, "characters", chars)

    @property
    def blank_index(self) -> int:
        return BLANK

    @property
    def size(self) -> int:
        """Number of output classes including blank."""
        return len(self.characters) + 1

    def encode(self, text: str) -> list[int]:
        index = {c: i + 1 for i, c in enumerate(self.characters)}
        try:
            return [index[c] for c in text]
        except KeyError as exc:
            raise ValueError(f"character {exc.args[0]!r} not in vocabulary") from None

    def decode(self, labels) -> str:
        return "".join(self.characters[i - 1] for i in labels if i != BLANK)

    def char(self, label: int) -> str:
        return self.characters[label - 1]
