"""Tiny random instances and central-difference gradients for model tests."""
import numpy as np

from restobench.corpus import CandidateSet, Vocabulary
from restobench.encoding import CandidateIndex, EncodedExample, bag_arrays, bags_to_csr
from restobench.features import FeatureConfig
from restobench.kb import generate_kb

# includes KB entity words (french/paris/cheap/two) so match-type paths fire
WORDS = ["french", "paris", "cheap", "two", "hello", "table", "book", "nice", "city", "food"]


def tiny_vocab() -> Vocabulary:
    return Vocabulary(sorted(WORDS), n_time_tokens=2)


def tiny_kbs():
    return [generate_kb(["french"], ["paris"], seed=3)]


def random_text(rng, lo=1, hi=4) -> str:
    k = int(rng.integers(lo, hi + 1))
    return " ".join(rng.choice(WORDS, size=k).tolist())


def random_candidates(rng, n: int) -> CandidateSet:
    cands = set()
    while len(cands) < n:
        cands.add(random_text(rng, 1, 4))
    return CandidateSet(sorted(cands))


def random_bag_csr(rng, vocab, n_rows: int):
    bags = []
    for _ in range(n_rows):
        bag = {}
        for tok in rng.choice(WORDS, size=int(rng.integers(1, 4))).tolist():
            idx = vocab.index[tok]
            bag[idx] = bag.get(idx, 0) + 1
        bags.append(bag)
    return bags_to_csr(bags, len(vocab))


def random_encoded(rng, vocab, n_cands: int, match_type: bool, with_memory: bool):
    x_bag = {}
    for tok in rng.choice(WORDS, size=int(rng.integers(1, 4))).tolist():
        idx = vocab.index[tok]
        x_bag[idx] = x_bag.get(idx, 0) + 1
    x_idx, x_cnt = bag_arrays(x_bag)
    context = set(rng.choice(WORDS, size=int(rng.integers(1, 6))).tolist()) if match_type else None
    memory = None
    if with_memory:
        n_slots = int(rng.integers(0, 6))
        memory = random_bag_csr(rng, vocab, n_slots) if n_slots else None
    return EncodedExample(x_idx, x_cnt, int(rng.integers(0, n_cands)), 0, context, memory)


def central_diff(loss_fn, param: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Finite-difference gradient of loss_fn() wrt every entry of param."""
    grad = np.zeros_like(param)
    it = np.nditer(param, flags=["multi_index"])
    while not it.finished:
        ix = it.multi_index
        orig = param[ix]
        param[ix] = orig + eps
        up = loss_fn()
        param[ix] = orig - eps
        down = loss_fn()
        param[ix] = orig
        grad[ix] = (up - down) / (2 * eps)
        it.iternext()
    return grad


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-4)
    return float(np.max(np.abs(analytic - numeric) / denom))
