import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoothasr.recognizer.ctc import InfeasibleTarget, ctc_loss, ctc_loss_and_grad, log_softmax, min_frames


def collapse(path):
    out, prev = [], 0
    for p in path:
        if p != 0 and p != prev:
            out.append(p)
        prev = p
    return out


def brute_force_loss(logits, target):
    """-log of the summed probability of every framewise path collapsing to target."""
    logp = log_softmax(logits)
    T, V = logp.shape
    total = 0.0
    for path in itertools.product(range(V), repeat=T):
        if collapse(path) == list(target):
            total += math.exp(sum(logp[t, k] for t, k in enumerate(path)))
    return -math.log(total) if total > 0 else math.inf


def test_two_frame_uniform_example():
    assert ctc_loss(np.zeros((2, 2)), [1]) == pytest.approx(-math.log(0.75), abs=1e-15)


def test_certain_path_has_zero_loss():
    logits = np.full((3, 3), -1e3)
    logits[0, 1] = logits[1, 0] = logits[2, 2] = 0.0
    assert ctc_loss(logits, [1, 2]) == pytest.approx(0.0, abs=1e-12)


def test_infeasible_target():
    assert ctc_loss(np.zeros((2, 3)), [1, 1]) == math.inf
    assert min_frames([1, 1]) == 3
    with pytest.raises(InfeasibleTarget):
        ctc_loss_and_grad(np.zeros((2, 3)), [1, 1])
    with pytest.raises(ValueError):
        ctc_loss(np.zeros((4, 3)), [0, 1])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(2, 4), st.lists(st.integers(1, 3), min_size=1, max_size=3), st.integers(0, 10**6))
def test_matches_exhaustive_enumeration(T, V, target, seed):
    target = [min(t, V - 1) for t in target]
    logits = np.random.default_rng(seed).normal(0, 2, size=(T, V))
    expected = brute_force_loss(logits, target)
    got = ctc_loss(logits, target)
    if math.isinf(expected):
        assert got == math.inf
    else:
        assert got == pytest.approx(expected, abs=1e-10, rel=1e-10)


def test_gradient_matches_finite_differences(rng):
    logits = rng.normal(size=(9, 5))
    target = [1, 3, 3, 2]
    _, grad = ctc_loss_and_grad(logits, target)
    h = 1e-6
    for _ in range(20):
        t, k = rng.integers(9), rng.integers(5)
        e = np.zeros_like(logits)
        e[t, k] = h
        fd = (ctc_loss(logits + e, target) - ctc_loss(logits - e, target)) / (2 * h)
        assert grad[t, k] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_gradient_rows_sum_to_zero(rng):
    _, grad = ctc_loss_and_grad(rng.normal(size=(7, 4)), [2, 1])
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-12)


def test_batch_matches_single_rows(rng):
    batch = rng.normal(size=(3, 8, 4))
    losses, grads = ctc_loss_and_grad(batch, [1, 2])
    for b in range(3):
        loss, grad = ctc_loss_and_grad(batch[b], [1, 2])
        assert losses[b] == pytest.approx(loss, abs=1e-12)
        np.testing.assert_allclose(grads[b], grad, atol=1e-12)


def test_shift_invariance_of_raw_scores(rng):
    z = rng.normal(size=(6, 4))
    assert ctc_loss(z + 5.0, [1, 2]) == pytest.approx(ctc_loss(z, [1, 2]), abs=1e-12)
