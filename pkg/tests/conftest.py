import numpy as np
import pytest

from smoothasr.recognizer import ModelParams, init_params, synth_corpus
from smoothasr.recognizer.train import feature_stats


@pytest.fixture(scope="session")
def small_corpus():
    return synth_corpus(0, n_train=12, n_test=6)


@pytest.fixture(scope="session")
def rand_params(small_corpus):
    """Untrained network with realistic feature standardization."""
    p = init_params(small_corpus.vocabulary, seed=1)
    mean, std = feature_stats(u.waveform for u in small_corpus.train)
    return ModelParams(**p.weights(), feat_mean=mean, feat_std=std, vocabulary=p.vocabulary, features=p.features)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy():
    """Full-size toy corpus with the baseline and sigma=0.02 fine-tuned models (trained once per session)."""
    import time

    from smoothasr.recognizer import train
    from smoothasr.recognizer.train import finetune

    t0 = time.perf_counter()
    corpus = synth_corpus(0, n_train=1000, n_test=100)
    base = train(corpus, 0.0, seed=0)
    aug = finetune(base, corpus.train, 0.02, seed=0)
    return {"corpus": corpus, "baseline": base, "aug-0.02": aug, "train_seconds": time.perf_counter() - t0}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
