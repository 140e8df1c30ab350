"""White-box attacks on the (smoothed) recognizer.

PGD is untargeted and SNR-bounded; CW is targeted and searches for the
quietest perturbation that makes the defended pipeline output the target.
Both get their gradient from :func:`eot_gradient`, which averages CTC input
gradients over fresh Gaussian draws and passes through enhancement as the
identity when the defense is wrapped with :func:`straight_through`.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .enhance import asnr_enhance_batch
from .recognizer.ctc import InfeasibleTarget
from .recognizer.model import ModelParams, loss_and_input_grad
from .signal import RngStream, linf_bound_from_snr, snr_db
from .smoothing import SmoothingConfig, smoothed_transcribe
from .transcript import Transcript
from .voting import wer

# Targets for CW, one per length bucket.
TARGETS = (
    Transcript(("ka", "lo")),
    Transcript(("me", "pi", "de", "hi")),
    Transcript(("lo", "ka", "nu", "fo", "gu", "me")),
)


class GradientError(RuntimeError):
    """Gradient requested through a stage that has no backward pass."""


@dataclass(frozen=True)
class Defense:
    params: ModelParams
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    straight_through: bool = False
    name: str = "custom"

    def transcribe(self, x) -> Transcript:
        """Defender's output; uses the defense's own noise streams, never the attacker's."""
        return smoothed_transcribe(self.params, x, self.smoothing).transcript

    @property
    def stochastic(self) -> bool:
        return self.smoothing.sigma > 0


def straight_through(defense: Defense) -> Defense:
    """Backward pass treats enhancement as the identity; forward pass unchanged."""
    if not defense.smoothing.enhance:
        return defense
    return replace(defense, straight_through=True)


def undefended(params: ModelParams) -> Defense:
    return Defense(params, SmoothingConfig(sigma=0.0, n_samples=1, vote="one-sentence"), name="undefended")


def trained(params_aug: ModelParams, sigma: float = 0.02, n_samples: int = 16, seed: int = 0) -> Defense:
    """Gaussian smoothing + ROVER on a noise-augmented model."""
    return Defense(params_aug, SmoothingConfig(sigma=sigma, n_samples=n_samples, vote="rover", seed=seed),
                   name="trained")


def off_the_shelf(params: ModelParams, sigma: float = 0.02, n_samples: int = 16, seed: int = 0) -> Defense:
    """Gaussian smoothing + ASNR enhancement + ROVER on the clean model."""
    return straight_through(Defense(
        params, SmoothingConfig(sigma=sigma, n_samples=n_samples, enhance=True, vote="rover", seed=seed),
        name="off-the-shelf"))


def _batch_loss_grad(defense: Defense, xs: np.ndarray, loss_spec):
    if callable(loss_spec):
        return loss_spec(xs)
    return loss_and_input_grad(defense.params, xs, loss_spec)


def eot_loss_and_gradient(defense: Defense, x, loss_spec, n: int, rng: RngStream):
    """Mean loss and mean input gradient over ``n`` noisy passes through ``defense``.

    ``loss_spec`` is a target transcript (CTC loss) or a callable mapping a
    (B, len) batch to (per-row losses, per-row gradients).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    sm = defense.smoothing
    if sm.sigma == 0:
        xs = x[None]
    else:
        xs = np.stack([x + sm.sigma * rng.child(i).normal(x.shape) for i in range(n)])
    if sm.enhance:
        if not defense.straight_through:
            raise GradientError("enhancement has no gradient; wrap the defense with straight_through()")
        xs = asnr_enhance_batch(xs, sm.sigma, sm.enhance_cfg)
    losses, grads = _batch_loss_grad(defense, xs, loss_spec)
    return float(np.mean(losses)), grads.mean(axis=0)


def eot_gradient(defense: Defense, x, loss_spec, n: int, rng: RngStream) -> np.ndarray:
    return eot_loss_and_gradient(defense, x, loss_spec, n, rng)[1]


@dataclass(frozen=True)
class AttackResult:
    delta: np.ndarray
    achieved_snr_db: float
    success: bool
    wer_ground_truth: float
    wer_target: float | None
    steps_used: int
    infeasible: bool = False
    loss_history: tuple = ()
    lambda_history: tuple = ()  # CW only: lambda after each update window

    def record(self, uid: str = "", config_hash: str = "") -> dict:
        snr = self.achieved_snr_db
        return {
            "utt_id": uid,
            "config_hash": config_hash,
            "achieved_snr_db": snr if math.isfinite(snr) else None,
            "success": self.success,
            "wer_ground_truth": self.wer_ground_truth,
            "wer_target": self.wer_target,
            "steps_used": self.steps_used,
            "infeasible": self.infeasible,
        }


def config_hash(cfg) -> str:
    payload = json.dumps(asdict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class PgdConfig:
    snr_bound_db: float
    steps: int = 50
    step_size: float | None = None  # per-sample; default gives sign steps of L2 length eps/10
    eot_samples: int = 16
    adaptive: bool = True

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.eot_samples < 1:
            raise ValueError("eot_samples must be >= 1")


def project_snr_ball(delta: np.ndarray, epsilon: float) -> np.ndarray:
    """Clamp to the L-inf ball of radius eps, then shrink into the L2 ball of radius eps."""
    delta = np.clip(delta, -epsilon, epsilon)
    norm = np.linalg.norm(delta)
    if norm > epsilon:
        delta = delta * (epsilon / norm)
    return delta


def pgd_attack(defense: Defense, x, y: Transcript, cfg: PgdConfig, rng: RngStream) -> AttackResult:
    """Untargeted sign-gradient ascent on the CTC loss of the ground truth ``y``."""
    x = np.asarray(x, dtype=np.float64)
    eps = linf_bound_from_snr(x, cfg.snr_bound_db)
    eta = cfg.step_size if cfg.step_size is not None else eps / (10.0 * math.sqrt(x.size))
    n_eot = cfg.eot_samples if cfg.adaptive else 1
    delta = np.zeros_like(x)
    history = []
    infeasible = False
    steps = 0
    for step in range(cfg.steps):
        try:
            loss, grad = eot_loss_and_gradient(defense, x + delta, y, n_eot, rng.child(step))
        except InfeasibleTarget:
            infeasible = True
            break
        history.append(loss)
        delta = project_snr_ball(delta + eta * np.sign(grad), eps)
        steps = step + 1
    hyp = defense.transcribe(x + delta)
    return AttackResult(delta, snr_db(x, delta), True, wer(hyp, y), None, steps, infeasible, tuple(history))


@dataclass(frozen=True)
class CwConfig:
    target: Transcript
    lambda_init: float = 0.05
    lambda_update_every: int = 50
    lambda_factor: float = 2.0
    max_steps: int = 1000
    step_size: float = 5e-4
    step_size_final: float | None = None  # geometric decay of the Adam step toward this value
    eot_samples: int = 16
    adaptive: bool = True
    success_wer: float = 0.1

    def __post_init__(self):
        if self.lambda_init <= 0:
            raise ValueError("lambda_init must be > 0")
        if self.lambda_factor <= 1:
            raise ValueError("lambda_factor must be > 1")
        if self.max_steps < 0 or self.lambda_update_every < 1 or self.eot_samples < 1:
            raise ValueError("invalid step counts")
        if self.step_size <= 0 or (self.step_size_final is not None and self.step_size_final <= 0):
            raise ValueError("step sizes must be > 0")


def choose_target(y: Transcript, targets=TARGETS) -> Transcript:
    """Target of closest length; ties go to the shorter one."""
    return min(targets, key=lambda t: (abs(len(t) - len(y)), len(t)))


class _Adam:
    def __init__(self, shape, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps

    def step(self, grad):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad**2
        m_hat = self.m / (1 - self.b1**self.t)
        v_hat = self.v / (1 - self.b2**self.t)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def cw_attack(defense: Defense, x, y: Transcript, cfg: CwConfig, rng: RngStream) -> AttackResult:
    """Minimize CTC(target) + lambda * ||delta||_2 with Adam.

    Every ``lambda_update_every`` steps the full defended pipeline is run on
    x + delta.  On success the perturbation is kept if it is the quietest so far
    and lambda grows (pushing toward a smaller delta); on failure lambda shrinks.
    ``y`` is the ground truth, used only for reporting.
    """
    x = np.asarray(x, dtype=np.float64)
    target = cfg.target

    def outcome(delta):
        hyp = defense.transcribe(x + delta)
        return wer(hyp, target), wer(hyp, y)

    w_t, w_gt = outcome(np.zeros_like(x))
    if w_t <= cfg.success_wer:
        return AttackResult(np.zeros_like(x), math.inf, True, w_gt, w_t, 0)

    n_eot = cfg.eot_samples if cfg.adaptive else 1
    delta = np.zeros_like(x)
    opt = _Adam(x.shape, cfg.step_size)
    lam = cfg.lambda_init
    best = None  # (norm, delta, wer_target, wer_gt)
    history = []
    lambdas = []
    steps = 0
    decay = 1.0 if cfg.step_size_final is None else cfg.step_size_final / cfg.step_size
    for step in range(cfg.max_steps):
        opt.lr = cfg.step_size * decay ** (step / max(cfg.max_steps, 1))
        try:
            loss, grad = eot_loss_and_gradient(defense, x + delta, target, n_eot, rng.child(step))
        except InfeasibleTarget:
            return AttackResult(np.zeros_like(x), math.inf, False, w_gt, w_t, step, True, tuple(history),
                                tuple(lambdas))
        norm = float(np.linalg.norm(delta))
        history.append(loss + lam * norm)
        if norm > 0:
            grad = grad + lam * delta / norm
        delta = delta - opt.step(grad)
        steps = step + 1
        if steps % cfg.lambda_update_every == 0:
            w_t, w_gt = outcome(delta)
            if w_t <= cfg.success_wer:
                norm = float(np.linalg.norm(delta))
                if best is None or norm < best[0]:
                    best = (norm, delta.copy(), w_t, w_gt)
                lam *= cfg.lambda_factor
            else:
                lam /= cfg.lambda_factor
            lambdas.append(lam)
    if best is None:
        w_t, w_gt = outcome(delta)
        return AttackResult(delta, snr_db(x, delta), False, w_gt, w_t, steps, False, tuple(history), tuple(lambdas))
    _, d, w_t, w_gt = best
    return AttackResult(d, snr_db(x, d), True, w_gt, w_t, steps, False, tuple(history), tuple(lambdas))
