"""CTC loss with log-space forward-backward.

``logits`` are unnormalized per-frame scores of shape (T, V) or (B, T, V);
log-softmax is applied internally, so already-normalized log-probabilities
pass through unchanged.  Gradients are taken with respect to the raw scores.
"""
from __future__ import annotations

import math

import numpy as np

from .vocab import BLANK

NEG_INF = -np.inf


class InfeasibleTarget(ValueError):
    """Target cannot be aligned within the available frames."""


def log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def min_frames(labels) -> int:
    labels = list(labels)
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def _extend(labels):
    ext = [BLANK]
    for lab in labels:
        ext += [lab, BLANK]
    ext = np.asarray(ext)
    skip = np.zeros(ext.size, dtype=bool)
    skip[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])
    return ext, skip


def _forward_backward(logits, labels, need_grad):
    z = np.asarray(logits, dtype=np.float64)
    squeeze = z.ndim == 2
    if squeeze:
        z = z[None]
    B, T, V = z.shape
    labels = [int(v) for v in labels]
    if any(v == BLANK for v in labels):
        raise ValueError("target must not contain the blank label")
    if T < min_frames(labels):
        raise InfeasibleTarget(f"target needs {min_frames(labels)} frames, only {T} available")
    ext, skip = _extend(labels)
    S = ext.size
    logp = log_softmax(z)
    lp = np.ascontiguousarray(logp[:, :, ext].transpose(1, 0, 2))  # (T, B, S)
    skip_mask = np.where(skip, 0.0, NEG_INF)

    # alpha is stored with two -inf guard columns in front so that the
    # s-1 and s-2 predecessors are plain slices.
    alpha = np.full((T, B, S + 2), NEG_INF)
    alpha[0, :, 2] = lp[0, :, 0]
    if S > 1:
        alpha[0, :, 3] = lp[0, :, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        acc = np.logaddexp(prev[:, 2:], prev[:, 1:-1])
        acc = np.logaddexp(acc, prev[:, :-2] + skip_mask)
        alpha[t, :, 2:] = acc + lp[t]
    alpha = alpha[:, :, 2:]
    if S > 1:
        log_z = np.logaddexp(alpha[T - 1, :, S - 1], alpha[T - 1, :, S - 2])
    else:
        log_z = alpha[T - 1, :, 0].copy()
    loss = -log_z
    if not need_grad:
        return (loss[0] if squeeze else loss), None

    # beta excludes the emission at t; guard columns at the back.
    beta = np.full((T, B, S + 2), NEG_INF)
    beta[T - 1, :, S - 1] = 0.0
    if S > 1:
        beta[T - 1, :, S - 2] = 0.0
    # a skip into s+2 is allowed exactly when skip[s+2] holds
    skip_next = np.full(S, NEG_INF)
    skip_next[:-2] = skip_mask[2:]
    nxt = np.full((B, S + 2), NEG_INF)
    for t in range(T - 2, -1, -1):
        nxt[:, :S] = beta[t + 1, :, :S] + lp[t + 1]
        acc = np.logaddexp(nxt[:, :S], nxt[:, 1 : S + 1])
        beta[t, :, :S] = np.logaddexp(acc, nxt[:, 2:] + skip_next)
    beta = beta[:, :, :S]

    occupancy = np.exp(alpha + beta - log_z[None, :, None]).transpose(1, 0, 2)  # (B, T, S)
    onehot = np.zeros((S, V))
    onehot[np.arange(S), ext] = 1.0
    grad = np.exp(logp) - occupancy @ onehot
    if squeeze:
        return loss[0], grad[0]
    return loss, grad


def ctc_loss(logits, labels) -> float:
    """-log P(labels | logits); ``inf`` when the target cannot be aligned."""
    try:
        loss, _ = _forward_backward(logits, labels, need_grad=False)
    except InfeasibleTarget:
        return math.inf
    return float(loss) if np.ndim(loss) == 0 else loss


def ctc_loss_and_grad(logits, labels):
    """Loss and d loss / d logits.  Raises :class:`InfeasibleTarget`."""
    return _forward_backward(logits, labels, need_grad=True)
