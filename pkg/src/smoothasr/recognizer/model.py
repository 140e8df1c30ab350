"""Per-frame MLP recognizer: stacked log-power -> tanh -> tanh -> class scores."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..signal import SAMPLE_RATE
from ..transcript import Transcript
from .ctc import ctc_loss_and_grad
from .features import FeatureConfig, log_power, log_power_backward, stack_context, stack_context_backward
from .vocab import Vocabulary

FORMAT = "smoothasr-model"
VERSION = 1
LAYERS = ("w1", "b1", "w2", "b2", "w3", "b3")


@dataclass(frozen=True)
class ModelParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    feat_mean: np.ndarray
    feat_std: np.ndarray
    vocabulary: Vocabulary
    features: FeatureConfig = field(default_factory=FeatureConfig)

    def __post_init__(self):
        dim = self.features.dim
        h1, h2 = self.w1.shape[1], self.w2.shape[1]
        expected = {
            "w1": (dim, h1), "b1": (h1,), "w2": (h1, h2), "b2": (h2,),
            "w3": (h2, self.vocabulary.size), "b3": (self.vocabulary.size,),
            "feat_mean": (dim,), "feat_std": (dim,),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")

    def weights(self) -> dict:
        return {k: getattr(self, k) for k in LAYERS}

    def with_weights(self, **arrays) -> "ModelParams":
        return replace(self, **arrays)


@dataclass(frozen=True)
class LogitsSequence:
    values: np.ndarray  # (T, V) raw per-frame scores
    frame_times: np.ndarray  # start second of each frame
    hop_seconds: float

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


def init_params(vocabulary: Vocabulary, hidden=(128, 64), seed: int = 0,
                features: FeatureConfig = FeatureConfig()) -> ModelParams:
    gen = np.random.default_rng(seed)
    dims = (features.dim, *hidden, vocabulary.size)
    arrays = {}
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:]), start=1):
        arrays[f"w{i}"] = gen.normal(0.0, 1.0 / np.sqrt(a), size=(a, b))
        arrays[f"b{i}"] = np.zeros(b)
    return ModelParams(
        **arrays,
        feat_mean=np.zeros(features.dim),
        feat_std=np.ones(features.dim),
        vocabulary=vocabulary,
        features=features,
    )


@dataclass
class _Cache:
    feat_cache: object
    z: np.ndarray
    h1: np.ndarray
    h2: np.ndarray


def _folded_w1(params: ModelParams):
    """First layer with the feature standardization folded in."""
    w1 = params.w1 / params.feat_std[:, None]
    return w1, params.b1 - params.feat_mean @ w1


def _forward(params: ModelParams, x, keep_z: bool = False):
    logp, fcache = log_power(x, params.features)
    stacked = stack_context(logp, params.features)
    if keep_z:
        z = (stacked - params.feat_mean) / params.feat_std
        a1 = z @ params.w1 + params.b1
    else:
        z = None
        w1, b1 = _folded_w1(params)
        a1 = stacked @ w1 + b1
    h1 = np.tanh(a1)
    h2 = np.tanh(h1 @ params.w2 + params.b2)
    out = h2 @ params.w3 + params.b3
    return out, _Cache(fcache, z, h1, h2)


def _backward(params: ModelParams, cache: _Cache, grad_out, need_params=True, need_input=True):
    g_h2 = grad_out @ params.w3.T
    g_a2 = g_h2 * (1.0 - cache.h2**2)
    g_h1 = g_a2 @ params.w2.T
    g_a1 = g_h1 * (1.0 - cache.h1**2)
    grads = None
    if need_params:
        if cache.z is None:
            raise ValueError("parameter gradients need a forward pass with keep_z=True")

        def flat(a):
            return a.reshape(-1, a.shape[-1])
        grads = {
            "w3": flat(cache.h2).T @ flat(grad_out), "b3": flat(grad_out).sum(0),
            "w2": flat(cache.h1).T @ flat(g_a2), "b2": flat(g_a2).sum(0),
            "w1": flat(cache.z).T @ flat(g_a1), "b1": flat(g_a1).sum(0),
        }
    g_x = None
    if need_input:
        g_stacked = g_a1 @ _folded_w1(params)[0].T
        g_logp = stack_context_backward(g_stacked, params.features)
        g_x = log_power_backward(g_logp, cache.feat_cache)
    return grads, g_x


def logits_batch(params: ModelParams, xs) -> np.ndarray:
    """Raw scores for a (B, n) batch of equal-length waveforms -> (B, T, V)."""
    out, _ = _forward(params, np.asarray(xs, dtype=np.float64))
    return out


def forward(params: ModelParams, x) -> LogitsSequence:
    x = np.asarray(x, dtype=np.float64)
    out, _ = _forward(params, x)
    return make_logits(out, params.features)


def make_logits(values, features: FeatureConfig = FeatureConfig(), sample_rate: int = SAMPLE_RATE) -> LogitsSequence:
    values = np.asarray(values, dtype=np.float64)
    hop = features.hop_length / sample_rate
    return LogitsSequence(values, np.arange(values.shape[0]) * hop, hop)


def target_labels(params: ModelParams, target) -> list[int]:
    if isinstance(target, Transcript):
        target = target.text
    return params.vocabulary.encode(target)


def loss_and_input_grad(params: ModelParams, xs, target):
    """Per-row CTC loss and d loss / d waveform for a (B, n) batch sharing one target."""
    xs = np.asarray(xs, dtype=np.float64)
    out, cache = _forward(params, xs)
    loss, g_out = ctc_loss_and_grad(out, target_labels(params, target))
    _, g_x = _backward(params, cache, g_out, need_params=False)
    return loss, g_x


def grad_input(params: ModelParams, x, target) -> np.ndarray:
    """Gradient of the CTC loss w.r.t. the waveform samples."""
    _, g = loss_and_input_grad(params, x, target)
    return g


def loss_and_param_grads(params: ModelParams, x, target):
    out, cache = _forward(params, np.asarray(x, dtype=np.float64), keep_z=True)
    loss, g_out = ctc_loss_and_grad(out, target_labels(params, target))
    grads, _ = _backward(params, cache, g_out, need_params=True, need_input=False)
    return float(loss), grads


def save_params(params: ModelParams, path) -> None:
    arrays = {k: getattr(params, k) for k in (*LAYERS, "feat_mean", "feat_std")}
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "characters": list(params.vocabulary.characters),
        "features": {
            "frame_length": params.features.frame_length,
            "hop_length": params.features.hop_length,
            "context": params.features.context,
            "kappa": params.features.kappa,
            "edge": params.features.edge,
        },
        "shapes": {k: list(v.shape) for k, v in arrays.items()},
        "arrays": {k: v.reshape(-1).tolist() for k, v in arrays.items()},
    }
    Path(path).write_text(json.dumps(doc))


def load_params(path) -> ModelParams:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != FORMAT:
        raise ValueError(f"{path}: not a {FORMAT} file")
    if doc.get("version") != VERSION:
        raise ValueError(f"{path}: unsupported version {doc.get('version')}")
    arrays = {k: np.asarray(v, dtype=np.float64).reshape(doc["shapes"][k]) for k, v in doc["arrays"].items()}
    return ModelParams(
        **arrays,
        vocabulary=Vocabulary(tuple(doc["characters"])),
        features=FeatureConfig(**doc["features"]),
    )
