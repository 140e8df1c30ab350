"""WER-threshold certification of the smoothed recognizer.

The ASR output is reduced to a binary event "WER(f(x + noise), t_A) < k";
if that event has probability p > 1/2 under N(0, sigma^2 I) noise it keeps
probability > 1/2 for every perturbation with ||delta||_2 < sigma * Phi^-1(p).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import beta as beta_dist

from .recognizer.decode import greedy_decode
from .recognizer.model import ModelParams, logits_batch, make_logits
from .signal import RngStream
from .smoothing import SmoothingConfig, noisy_inputs, smoothed_transcribe
from .transcript import Transcript
from .voting import MAX_HYPOTHESES, wer

# Acklam's rational approximation to the inverse normal CDF (|rel err| < 1.2e-9),
# polished below with Newton steps on the erfc-based CDF.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def gaussian_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _acklam(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if p > 1.0 - _P_LOW:
        return -_acklam(1.0 - p)
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
        (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)


def gaussian_quantile(p: float) -> float:
    """Inverse standard normal CDF."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile needs p in (0, 1), got {p}")
    if p > 0.5:
        return -gaussian_quantile(1.0 - p)
    if p == 0.5:
        return 0.0
    z = _acklam(p)
    for _ in range(3):
        err = gaussian_cdf(z) - p
        density = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        if density == 0.0:
            break
        z -= err / density
    return z


def radius(sigma: float, p: float) -> float:
    """L2 radius sigma * Phi^-1(p); 0 when p <= 1/2 (abstain)."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if p <= 0.5:
        return 0.0
    if p >= 1.0:
        raise ValueError("p must be < 1")
    return sigma * gaussian_quantile(p)


def clopper_pearson_lower(successes: int, n: int, alpha: float) -> float:
    """One-sided (1 - alpha) exact lower confidence bound on a binomial proportion."""
    if not 0 <= successes <= n or n < 1:
        raise ValueError("need 0 <= successes <= n and n >= 1")
    if successes == 0:
        return 0.0
    return float(beta_dist.ppf(alpha, successes, n - successes + 1))


@dataclass(frozen=True)
class CertConfig:
    sigma: float = 0.02
    k: float = 0.3
    n0: int = 32
    n: int = 1000
    alpha: float = 0.05
    seed: int = 0
    batch_size: int = 100

    def __post_init__(self):
        if not 0.0 < self.k < 1.0:
            raise ValueError("k must lie in (0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.n0 < 1 or self.n < 1:
            raise ValueError("n0 and n must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


@dataclass(frozen=True)
class CertResult:
    top_transcript: Transcript
    p_lower: float
    radius: float
    abstained: bool
    successes: int = 0
    n: int = 0


def binary_indicator(params: ModelParams, x_noisy, t_ref, k: float) -> int:
    hyp = greedy_decode(make_logits(logits_batch(params, np.asarray(x_noisy)[None])[0], params.features),
                        params.vocabulary).transcript
    return int(wer(hyp, t_ref) < k)


def count_indicator(params: ModelParams, x, t_ref, k: float, sigma: float, n: int,
                    rng: RngStream, batch_size: int = 100) -> int:
    """Number of the ``n`` noise draws (streams ``rng.child(i)``) whose decode is within WER k of ``t_ref``."""
    hits = 0
    for lo in range(0, n, batch_size):
        m = min(batch_size, n - lo)
        xs = np.stack([np.asarray(x) + sigma * rng.child(lo + i).normal(np.shape(x)) for i in range(m)]) \
            if sigma > 0 else noisy_inputs(x, 0.0, m, rng)
        for row in logits_batch(params, xs):
            hyp = greedy_decode(make_logits(row, params.features), params.vocabulary).transcript
            hits += int(wer(hyp, t_ref) < k)
    return hits


def certify(params: ModelParams, x, cfg: CertConfig, rng: RngStream | None = None) -> CertResult:
    if rng is None:
        rng = RngStream(cfg.seed, stream_id=40)
    select = SmoothingConfig(sigma=cfg.sigma, n_samples=min(cfg.n0, MAX_HYPOTHESES), vote="rover")
    t_a = smoothed_transcribe(params, x, select, rng.child(0)).transcript
    if len(t_a) == 0:
        return CertResult(t_a, 0.0, 0.0, True, 0, cfg.n)
    hits = count_indicator(params, x, t_a, cfg.k, cfg.sigma, cfg.n, rng.child(1), cfg.batch_size)
    p_lower = clopper_pearson_lower(hits, cfg.n, cfg.alpha)
    if p_lower <= 0.5:
        return CertResult(t_a, p_lower, 0.0, True, hits, cfg.n)
    return CertResult(t_a, p_lower, radius(cfg.sigma, p_lower), False, hits, cfg.n)


@dataclass(frozen=True)
class ValidationReport:
    radius: float
    pass_fraction: float
    estimates: tuple  # per-perturbation estimate of P[WER < k]
    norms: tuple


def sample_in_ball(dim: int, r: float, gen: np.random.Generator) -> np.ndarray:
    """Uniform sample from the L2 ball of radius r in R^dim."""
    direction = gen.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    return direction * r * gen.uniform() ** (1.0 / dim)


def validate_certificate(params: ModelParams, x, cert: CertResult, cfg: CertConfig, trials: int = 20,
                         draws: int = 50, radius_scale: float = 1.0,
                         rng: RngStream | None = None) -> ValidationReport:
    """Monte Carlo check that P[WER < k] stays above 1/2 inside the certified ball."""
    if cert.abstained:
        raise ValueError("cannot validate an abstained certificate")
    if rng is None:
        rng = RngStream(cfg.seed, stream_id=41)
    x = np.asarray(x, dtype=np.float64)
    r = cert.radius * radius_scale
    estimates, norms = [], []
    for j in range(trials):
        delta = sample_in_ball(x.size, r, rng.child(2 * j).generator())
        hits = count_indicator(params, x + delta, cert.top_transcript, cfg.k, cfg.sigma, draws,
                               rng.child(2 * j + 1), cfg.batch_size)
        estimates.append(hits / draws)
        norms.append(float(np.linalg.norm(delta)))
    passed = sum(e > 0.5 for e in estimates)
    return ValidationReport(r, passed / trials, tuple(estimates), tuple(norms))
