import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoothasr.enhance import (
    EnhanceConfig,
    Spectrogram,
    asnr_enhance,
    asnr_enhance_batch,
    hann,
    istft,
    noise_psd,
    stft,
    wiener_gains,
)


def _signal(n, seed=0):
    return np.random.default_rng(seed).standard_normal(n) * 0.1


def test_hann_is_periodic_and_cola():
    w = hann(512)
    assert w[0] == 0.0
    assert w[256] == pytest.approx(1.0)
    # squared periodic Hann at hop n/4 sums to a constant (1.5)
    total = sum(np.roll(w**2, 128 * k) for k in range(4))
    np.testing.assert_allclose(total, 1.5, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(512, 5000), st.integers(0, 10_000))
def test_stft_round_trip(n, seed):
    x = _signal(n, seed)
    y = istft(stft(x))
    assert np.linalg.norm(y - x) <= 1e-6 * np.linalg.norm(x)


def test_stft_shapes_and_errors():
    spec = stft(_signal(2000))
    assert spec.frames.shape[1] == 257
    assert spec.length == 2000
    with pytest.raises(ValueError):
        stft(np.zeros(100))
    with pytest.raises(ValueError):
        istft(spec, EnhanceConfig(frame_length=256, hop_length=64))


def test_config_validation():
    with pytest.raises(ValueError):
        EnhanceConfig(dd_alpha=1.5)
    with pytest.raises(ValueError):
        EnhanceConfig(gain_floor=-0.1)
    with pytest.raises(ValueError):
        EnhanceConfig(hop_length=100)
    with pytest.raises(ValueError):
        EnhanceConfig(noise_psd_mode="magic")


def test_unit_floor_is_round_trip():
    x = _signal(4000) + 0.02 * _signal(4000, 1)
    cfg = EnhanceConfig(gain_floor=1.0)
    np.testing.assert_allclose(asnr_enhance(x, 0.02, cfg), istft(stft(x, cfg), cfg), atol=1e-12)


def test_zero_sigma_is_round_trip():
    x = _signal(3000)
    np.testing.assert_allclose(asnr_enhance(x, 0.0), x, atol=1e-9)


def test_gains_within_bounds():
    cfg = EnhanceConfig()
    spec = stft(_signal(4000), cfg)
    g = wiener_gains(spec, noise_psd(spec, 0.05, cfg), cfg)
    assert g.shape == spec.frames.shape
    assert g.min() >= cfg.gain_floor - 1e-15
    assert g.max() <= 1.0


def test_first_frame_uses_maximum_likelihood_estimate():
    cfg = EnhanceConfig(gain_floor=0.0)
    frames = np.full((2, 257), 2.0 + 0j)
    spec = Spectrogram(frames, 512, 128, 512)
    lam = np.ones(257)
    g = wiener_gains(spec, lam, cfg)
    xi0 = 4.0 - 1.0  # gamma - 1 with |Y|^2 = 4
    np.testing.assert_allclose(g[0], xi0 / (1 + xi0))
    # second frame: alpha * |G0 Y|^2 + (1 - alpha) * (gamma - 1)
    xi1 = cfg.dd_alpha * (g[0, 0] ** 2 * 4.0) + (1 - cfg.dd_alpha) * 3.0
    np.testing.assert_allclose(g[1], xi1 / (1 + xi1))


def test_enhancement_reduces_white_noise():
    t = np.arange(16000) / 16000
    clean = 0.1 * np.sin(2 * np.pi * 440 * t)
    noisy = clean + 0.02 * np.random.default_rng(0).standard_normal(t.size)
    out = asnr_enhance(noisy, 0.02)
    assert np.linalg.norm(out - clean) < 0.6 * np.linalg.norm(noisy - clean)


def test_enhancement_energy_not_above_round_trip():
    x = _signal(5000, 3)
    assert np.linalg.norm(asnr_enhance(x, 0.05)) <= np.linalg.norm(istft(stft(x))) + 1e-9


def test_leading_frames_mode_estimates_psd():
    cfg = EnhanceConfig(noise_psd_mode="leading-frames")
    x = 0.02 * np.random.default_rng(0).standard_normal(8000)
    spec = stft(x, cfg)
    est = noise_psd(spec, 0.0, cfg)
    analytic = noise_psd(spec, 0.02, EnhanceConfig())
    assert np.median(est[5:-5]) == pytest.approx(analytic[0], rel=0.5)


def test_batch_matches_rows():
    xs = np.stack([_signal(3000, i) for i in range(3)])
    out = asnr_enhance_batch(xs, 0.02)
    for row, x in zip(out, xs):
        np.testing.assert_array_equal(row, asnr_enhance(x, 0.02))
