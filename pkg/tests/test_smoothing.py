import numpy as np
import pytest

from smoothasr import smoothing
from smoothasr.enhance import asnr_enhance
from smoothasr.recognizer import forward, greedy_decode
from smoothasr.signal import RngStream
from smoothasr.smoothing import SmoothingConfig, noisy_inputs, smoothed_transcribe


def test_config_validation():
    with pytest.raises(ValueError):
        SmoothingConfig(sigma=-0.1)
    with pytest.raises(ValueError):
        SmoothingConfig(n_samples=0)
    with pytest.raises(ValueError):
        SmoothingConfig(n_samples=51)
    with pytest.raises(ValueError):
        SmoothingConfig(vote="median")


def test_degenerate_smoothing_is_base_recognizer(rand_params, small_corpus):
    cfg = SmoothingConfig(sigma=0.0, n_samples=1, vote="one-sentence")
    for u in small_corpus.test:
        expected = greedy_decode(forward(rand_params, u.waveform), rand_params.vocabulary).transcript
        assert smoothed_transcribe(rand_params, u.waveform, cfg).transcript == expected


@pytest.mark.parametrize("vote", smoothing.VOTES)
def test_deterministic_given_seed(rand_params, small_corpus, vote):
    x = small_corpus.test[0].waveform
    cfg = SmoothingConfig(sigma=0.01, n_samples=4, vote=vote, seed=7)
    a = smoothed_transcribe(rand_params, x, cfg)
    b = smoothed_transcribe(rand_params, x, cfg)
    assert a.transcript == b.transcript
    assert len(a.samples) == len(a.logits) == 4
    for la, lb in zip(a.logits, b.logits):
        np.testing.assert_array_equal(la.values, lb.values)


def test_noise_prefix_property(small_corpus):
    x = np.asarray(small_corpus.test[0].waveform)
    rng = RngStream(3)
    big = noisy_inputs(x, 0.02, 16, rng)
    small = noisy_inputs(x, 0.02, 8, rng)
    np.testing.assert_array_equal(big[:8], small)
    assert not np.array_equal(big[0], big[1])


def test_noise_has_requested_scale(small_corpus):
    x = np.asarray(small_corpus.test[0].waveform)
    xs = noisy_inputs(x, 0.02, 8, RngStream(0))
    assert np.std(xs - x) == pytest.approx(0.02, rel=0.02)


def test_enhance_changes_only_the_recognizer_input(rand_params, small_corpus, monkeypatch):
    x = np.asarray(small_corpus.test[0].waveform)
    seen = []
    real = smoothing.enhance_rows

    def spy(xs, sigma, cfg):
        seen.append(xs.copy())
        return real(xs, sigma, cfg)

    monkeypatch.setattr(smoothing, "enhance_rows", spy)
    cfg = SmoothingConfig(sigma=0.01, n_samples=3, enhance=True, seed=5)
    out = smoothed_transcribe(rand_params, x, cfg)
    # the enhancer sees exactly the draws the plain pipeline would use
    np.testing.assert_array_equal(seen[0], noisy_inputs(x, 0.01, 3, RngStream(5)))
    # and the recognizer sees their enhanced versions
    for row, seq in zip(seen[0], out.logits):
        np.testing.assert_allclose(seq.values, forward(rand_params, asnr_enhance(row, 0.01)).values, atol=1e-10)


def test_failed_samples_are_skipped(rand_params, small_corpus, monkeypatch):
    x = small_corpus.test[0].waveform
    real = smoothing.logits_batch

    def half_broken(params, xs):
        out = real(params, xs)
        out[::2] = np.nan
        return out

    monkeypatch.setattr(smoothing, "logits_batch", half_broken)
    out = smoothed_transcribe(rand_params, x, SmoothingConfig(sigma=0.01, n_samples=4))
    assert len(out.samples) == 2

    monkeypatch.setattr(smoothing, "logits_batch", lambda p, xs: real(p, xs) * np.nan)
    with pytest.raises(RuntimeError):
        smoothed_transcribe(rand_params, x, SmoothingConfig(sigma=0.01, n_samples=4))
