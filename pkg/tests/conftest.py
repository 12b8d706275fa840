import numpy as np
import pytest

from tabssl.data import preprocess, stratified_split, SplitPlan, synthetic_corpus


@pytest.fixture(scope="session")
def small_corpus():
    """4 classes, 32 features in 8 groups, preprocessed with pretrain statistics."""
    table = synthetic_corpus(4, 32, 8, 60, seed=3)
    pre, ft, test = stratified_split(table, SplitPlan(0.6, 0.2, 0.2, seed=0))
    pre, stats = preprocess(pre, log2=False)
    return pre, preprocess(ft, stats)[0], preprocess(test, stats)[0]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

