"""Toy differentiable CTC recognizer."""
from .corpus import ToyCorpus, Utterance, load_corpus, save_corpus, synth_corpus, toy_vocabulary
from .ctc import InfeasibleTarget, ctc_loss, ctc_loss_and_grad
from .decode import DecodeResult, greedy_decode
from .features import FeatureConfig, featurize
from .model import (
    LogitsSequence,
    ModelParams,
    forward,
    grad_input,
    init_params,
    load_params,
    logits_batch,
    loss_and_input_grad,
    save_params,
)
from .train import TrainConfig, TrainingError, finetune, train
from .vocab import Vocabulary

__all__ = [
    "DecodeResult", "FeatureConfig", "InfeasibleTarget", "LogitsSequence", "ModelParams",
    "ToyCorpus", "TrainConfig", "TrainingError", "Utterance", "Vocabulary",
    "ctc_loss", "ctc_loss_and_grad", "featurize", "finetune", "forward", "grad_input",
    "greedy_decode", "init_params", "load_corpus", "load_params", "logits_batch",
    "loss_and_input_grad", "save_corpus", "save_params", "synth_corpus", "toy_vocabulary", "train",
]
