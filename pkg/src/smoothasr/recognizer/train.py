"""SGD-with-momentum training, optionally followed by one epoch of Gaussian-augmented fine-tuning."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..signal import RngStream
from .features import FeatureConfig, log_power, stack_context
from .model import LAYERS, ModelParams, init_params, loss_and_param_grads

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    learning_rate: float = 1e-2
    lr_decay: float = 0.5
    momentum: float = 0.9
    clip_norm: float = 20.0
    hidden: tuple = (128, 64)
    finetune_epochs: int = 1
    finetune_learning_rate: float = 3e-3
    finetune_clip_norm: float = 5.0


def feature_stats(waveforms, features: FeatureConfig = FeatureConfig()):
    total = np.zeros(features.dim)
    total_sq = np.zeros(features.dim)
    count = 0
    for x in waveforms:
        feats = stack_context(log_power(np.asarray(x), features)[0], features)
        total += feats.sum(0)
        total_sq += (feats**2).sum(0)
        count += feats.shape[0]
    mean = total / count
    std = np.sqrt(np.maximum(total_sq / count - mean**2, 0.0)) + 1e-3
    return mean, std


def _run_epoch(params, utterances, order, lr, clip, cfg, velocity, noise=None, label="epoch"):
    weights = params.weights()
    total = 0.0
    for step, idx in enumerate(order):
        utt = utterances[idx]
        x = np.asarray(utt.waveform)
        if noise is not None:
            x = noise(idx, x)
        loss, grads = loss_and_param_grads(params, x, utt.transcript)
        if not np.isfinite(loss):
            raise TrainingError(f"{label}: non-finite loss at step {step} (utterance {utt.uid})")
        norm = np.sqrt(sum(float(np.sum(g**2)) for g in grads.values()))
        scale = min(1.0, clip / norm) if norm > 0 else 1.0
        for k in LAYERS:
            velocity[k] = cfg.momentum * velocity[k] - lr * scale * grads[k]
            weights[k] = weights[k] + velocity[k]
        params = params.with_weights(**weights)
        total += loss
    return params, total / max(len(order), 1)


def finetune(params: ModelParams, utterances, sigma: float, seed: int = 0,
             cfg: TrainConfig = TrainConfig()) -> ModelParams:
    """Gaussian-augmented fine-tuning; each utterance sees a fresh noise draw."""
    utterances = list(utterances)
    velocity = {k: np.zeros_like(v) for k, v in params.weights().items()}
    for epoch in range(cfg.finetune_epochs):
        order = RngStream(seed, stream_id=20, path=(epoch,)).generator().permutation(len(utterances))
        stream = RngStream(seed, stream_id=21, path=(epoch,))

        def noise(idx, x, stream=stream):
            return x + sigma * stream.child(int(idx)).normal(x.shape)

        lr = cfg.finetune_learning_rate * cfg.lr_decay**epoch
        params, mean_loss = _run_epoch(params, utterances, order, lr, cfg.finetune_clip_norm, cfg, velocity, noise,
                                       label=f"finetune epoch {epoch}")
        log.info("finetune sigma=%g epoch %d loss %.3f", sigma, epoch, mean_loss)
    return params


def train(corpus, sigma_aug: float = 0.0, epochs: int | None = None, seed: int = 0,
          cfg: TrainConfig = TrainConfig()) -> ModelParams:
    if not corpus.train:
        raise ValueError("empty training corpus")
    if epochs is None:
        epochs = cfg.epochs
    utterances = list(corpus.train)
    params = init_params(corpus.vocabulary, hidden=cfg.hidden, seed=seed)
    mean, std = feature_stats((u.waveform for u in utterances), params.features)
    params = ModelParams(**params.weights(), feat_mean=mean, feat_std=std,
                         vocabulary=params.vocabulary, features=params.features)
    velocity = {k: np.zeros_like(v) for k, v in params.weights().items()}
    for epoch in range(epochs):
        order = RngStream(seed, stream_id=10, path=(epoch,)).generator().permutation(len(utterances))
        lr = cfg.learning_rate * cfg.lr_decay**epoch
        params, mean_loss = _run_epoch(params, utterances, order, lr, cfg.clip_norm, cfg, velocity, label=f"epoch {epoch}")
        log.info("epoch %d lr %.2e loss %.3f", epoch, lr, mean_loss)
    if sigma_aug > 0:
        params = finetune(params, utterances, sigma_aug, seed=seed, cfg=cfg)
    return params
