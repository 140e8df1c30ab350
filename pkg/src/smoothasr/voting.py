"""Word error rate and the transcript combination strategies.

ROVER here is a self-contained re-implementation of the NIST idea: the
first hypothesis seeds a word transition network (WTN), every further
hypothesis is aligned to it by dynamic programming, and each slot then
votes by word frequency.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .recognizer.decode import greedy_decode
from .transcript import Transcript, WordHypothesis

MAX_HYPOTHESES = 50


def edit_distance(hyp, ref) -> int:
    """Word-level Levenshtein distance."""
    hyp, ref = list(hyp), list(ref)
    prev = list(range(len(ref) + 1))
    for i, h in enumerate(hyp, start=1):
        cur = [i]
        for j, r in enumerate(ref, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (h != r)))
        prev = cur
    return prev[-1]


def _words(t):
    if isinstance(t, Transcript):
        return t.words
    if isinstance(t, str):
        return tuple(t.split())
    return tuple(t)


def wer(hyp, ref) -> float:
    """Edit distance over reference length, capped at 1.0."""
    hyp, ref = _words(hyp), _words(ref)
    if not ref:
        raise ValueError("WER undefined for an empty reference")
    return min(edit_distance(hyp, ref) / len(ref), 1.0)


def majority_vote(transcripts) -> Transcript:
    """Most frequent whole sentence; ties go to the earliest first occurrence."""
    sents = [_words(t) for t in transcripts]
    if not sents:
        raise ValueError("majority_vote needs at least one transcript")
    counts = Counter(sents)
    best = max(counts.values())
    return Transcript(next(s for s in sents if counts[s] == best))


def average_logits(logits_list, vocabulary) -> Transcript:
    """Greedy decode of the framewise mean of equally shaped logit sequences."""
    logits_list = list(logits_list)
    if not logits_list:
        raise ValueError("average_logits needs at least one sequence")
    shape = logits_list[0].values.shape
    if any(l.values.shape != shape for l in logits_list):
        raise ValueError("logit sequences differ in shape")
    mean = np.mean([l.values for l in logits_list], axis=0)
    ref = logits_list[0]
    avg = type(ref)(mean, ref.frame_times, ref.hop_seconds)
    return greedy_decode(avg, vocabulary).transcript


@dataclass(frozen=True)
class Arc:
    word: str | None  # None is the NULL (omission) arc
    start: float = 0.0
    end: float = 0.0
    confidence: float = 0.0


@dataclass
class Slot:
    arcs: list = field(default_factory=list)

    def counts(self) -> dict:
        return dict(Counter(a.word for a in self.arcs))

    def words(self) -> set:
        return {a.word for a in self.arcs if a.word is not None}

    @property
    def span(self) -> tuple[float, float] | None:
        timed = [a for a in self.arcs if a.word is not None]
        if not timed:
            return None
        return min(a.start for a in timed), max(a.end for a in timed)

    def winner(self) -> str | None:
        stats = {}
        for a in self.arcs:
            n, c = stats.get(a.word, (0, 0.0))
            stats[a.word] = (n + 1, c + a.confidence)
        return min(stats, key=lambda w: (-stats[w][0], -stats[w][1], w is None, w or ""))


@dataclass
class WordTransitionNetwork:
    slots: list = field(default_factory=list)
    n_hypotheses: int = 0

    @classmethod
    def from_hypothesis(cls, hyp) -> "WordTransitionNetwork":
        slots = [Slot([_arc(h)]) for h in hyp]
        return cls(slots, 1)

    def copy(self) -> "WordTransitionNetwork":
        return WordTransitionNetwork([Slot(list(s.arcs)) for s in self.slots], self.n_hypotheses)

    def best_path(self) -> Transcript:
        return Transcript(tuple(w for w in (s.winner() for s in self.slots) if w is not None))


@dataclass(frozen=True)
class AlignCost:
    insertion: float = 1.0
    deletion: float = 1.0
    substitution: float = 1.0
    time_penalty: float = 0.5


def _arc(h) -> Arc:
    return Arc(h.word, h.start, h.start + h.duration, h.confidence)


def _overlap_ratio(a0, a1, b0, b1) -> float:
    inter = min(a1, b1) - max(a0, b0)
    union = max(a1, b1) - min(a0, b0)
    if inter <= 0 or union <= 0:
        return 0.0
    return inter / union


def _substitution_cost(slot: Slot, hyp: WordHypothesis, cost: AlignCost) -> float:
    if hyp.word in slot.words():
        return 0.0
    best = 0.0
    end = hyp.start + hyp.duration
    for a in slot.arcs:
        if a.word is not None:
            best = max(best, _overlap_ratio(a.start, a.end, hyp.start, end))
    return cost.substitution + cost.time_penalty * (1.0 - best)


def _merge(wtn: WordTransitionNetwork, hyp, cost: AlignCost) -> None:
    hyp = list(hyp)
    m, n = len(wtn.slots), len(hyp)
    d = np.zeros((m + 1, n + 1))
    d[:, 0] = np.arange(m + 1) * cost.deletion
    d[0, :] = np.arange(n + 1) * cost.insertion
    sub = [[_substitution_cost(s, h, cost) for h in hyp] for s in wtn.slots]
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            d[i, j] = min(d[i - 1, j - 1] + sub[i - 1][j - 1], d[i - 1, j] + cost.deletion,
                          d[i, j - 1] + cost.insertion)
    ops = []
    i, j = m, n
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + sub[i - 1][j - 1]:
            ops.append(("sub", i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and d[i, j] == d[i - 1, j] + cost.deletion:
            ops.append(("del", i - 1, None))
            i -= 1
        else:
            ops.append(("ins", None, j - 1))
            j -= 1
    slots = []
    for op, si, hj in reversed(ops):
        if op == "sub":
            slot = wtn.slots[si]
            slot.arcs.append(_arc(hyp[hj]))
        elif op == "del":
            slot = wtn.slots[si]
            slot.arcs.append(Arc(None))
        else:
            slot = Slot([Arc(None)] * wtn.n_hypotheses + [_arc(hyp[hj])])
        slots.append(slot)
    wtn.slots = slots
    wtn.n_hypotheses += 1


def align_wtn(wtn: WordTransitionNetwork, hyp, cost: AlignCost = AlignCost()) -> WordTransitionNetwork:
    """Return a new WTN with ``hyp`` merged in by minimum-cost alignment."""
    out = wtn.copy()
    _merge(out, hyp, cost)
    return out


def build_wtn(hyps, cost: AlignCost = AlignCost(), max_hypotheses: int = MAX_HYPOTHESES) -> WordTransitionNetwork:
    hyps = list(hyps)
    if not hyps:
        raise ValueError("rover needs at least one hypothesis")
    if len(hyps) > max_hypotheses:
        raise ValueError(f"at most {max_hypotheses} hypotheses per vote, got {len(hyps)}")
    wtn = WordTransitionNetwork.from_hypothesis(hyps[0])
    for hyp in hyps[1:]:
        _merge(wtn, hyp, cost)
    return wtn


def rover(hyps, cost: AlignCost = AlignCost(), max_hypotheses: int = MAX_HYPOTHESES) -> Transcript:
    """Vote over timed word hypotheses; the most frequent arc of each slot wins."""
    return build_wtn(hyps, cost, max_hypotheses).best_path()


def write_ctm(path, records, channel: str = "1") -> None:
    """``records`` maps utt-id -> sequence of :class:`WordHypothesis`."""
    lines = []
    for uid, hyps in records.items():
        for h in hyps:
            lines.append(f"{uid} {channel} {h.start:.3f} {h.duration:.3f} {h.word} {h.confidence:.3f}\n")
    Path(path).write_text("".join(lines))


def read_ctm(path) -> dict:
    records: dict = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip() or line.startswith(";;"):
            continue
        parts = line.split()
        if len(parts) != 6:
            raise ValueError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
        uid, _, start, dur, word, conf = parts
        records.setdefault(uid, []).append(WordHypothesis(word, float(start), float(dur), float(conf)))
    return records
