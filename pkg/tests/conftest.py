import numpy as np
import pytest

from restobench.corpus import build_candidates, build_vocab, corpus_examples
from restobench.kb import default_kb_pair, generate_kb
from restobench.simulator import PatternSet, gen_dataset


@pytest.fixture(scope="session")
def patterns():
    return PatternSet.load()


@pytest.fixture(scope="session")
def kb_pair():
    return default_kb_pair(11)


@pytest.fixture(scope="session")
def kb_plain(kb_pair):
    return kb_pair[0]


@pytest.fixture(scope="session")
def kb_oov(kb_pair):
    return kb_pair[1]


@pytest.fixture(scope="session")
def kb_small():
    return generate_kb(["british", "french"], ["london", "paris"], seed=5)


@pytest.fixture(scope="session")
def mini_data(kb_pair, patterns):
    """Small regenerated corpus for every task: 40/15/15 dialogs plus OOV."""
    plain, oov = kb_pair
    sizes = {"train": 40, "val": 15, "test": 15}
    return {
        task: gen_dataset(task, plain, oov, sizes, seed=100 + task, patterns=patterns)
        for task in (1, 2, 3, 4, 5)
    }


@pytest.fixture(scope="session")
def mini_candidates(mini_data):
    return build_candidates([d for splits in mini_data.values() for d in splits.values()])


@pytest.fixture(scope="session")
def mini_vocab(mini_data):
    return build_vocab([splits["train"] for splits in mini_data.values()])


@pytest.fixture(scope="session")
def mini_examples(mini_data):
    return {
        task: {split: corpus_examples(dialogs) for split, dialogs in splits.items()}
        for task, splits in mini_data.items()
    }
