"""Supervised bag-of-embeddings scorer, f(x,y) = (Ax)^T (By).

A and B are d x V matrices over summed bags-of-words; B can be tied to A.
Training minimizes a margin ranking loss against N sampled negative
candidates with plain per-example SGD.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .checkpoints import load_checkpoint, save_checkpoint
from .corpus import CandidateSet, Example, Vocabulary
from .encoding import CandidateIndex, EncodedExample, bag_arrays, encode_candidate_context
from .errors import NumericError
from .features import BagOfWords, FeatureConfig, phi
from .kb import KnowledgeBase

INIT_SCALE = 0.01


@dataclass
class TrainHp:
    lr: float = 0.01
    margin: float = 0.01
    dim: int = 32
    negatives: int = 100
    use_history: bool = True
    epochs: int = 100
    seed: int = 1
    tied: bool = False


class EmbeddingModel:
    def __init__(self, A: np.ndarray, B: np.ndarray | None, vocab_hash: str, hp: TrainHp,
                 cfg: FeatureConfig):
        self.A = A
        self.B = A if (B is None or hp.tied) else B
        self.vocab_hash = vocab_hash
        self.hp = hp
        self.cfg = cfg

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def copy_params(self) -> tuple[np.ndarray, np.ndarray]:
        return self.A.copy(), self.B.copy()

    def restore_params(self, params: tuple[np.ndarray, np.ndarray]) -> None:
        self.A[...] = params[0]
        if not self.hp.tied:
            self.B[...] = params[1]

    def save(self, path) -> None:
        meta = {
            "vocab_sha256": self.vocab_hash,
            "dim": self.dim,
            "tied": self.hp.tied,
            "hp": asdict(self.hp),
            "cfg": asdict(self.cfg),
        }
        arrays = {"A": self.A} if self.hp.tied else {"A": self.A, "B": self.B}
        save_checkpoint(path, "embeddings", meta, arrays)

    @classmethod
    def loadf(cls, path, vocab: Vocabulary) -> "EmbeddingModel":
        meta, arrays = load_checkpoint(path, vocab)
        hp = TrainHp(**meta["hp"])
        cfg = FeatureConfig(**meta["cfg"])
        return cls(arrays["A"], arrays.get("B"), meta["vocab_sha256"], hp, cfg)


def init_model(vocab: Vocabulary, hp: TrainHp, cfg: FeatureConfig) -> EmbeddingModel:
    rng = np.random.default_rng(hp.seed)
    V = len(vocab)
    A = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(hp.dim, V))
    B = None if hp.tied else rng.uniform(-INIT_SCALE, INIT_SCALE, size=(hp.dim, V))
    return EmbeddingModel(A, B, vocab.sha256(), hp, cfg)


def _embed_bag(M: np.ndarray, bag: BagOfWords) -> np.ndarray:
    out = np.zeros(M.shape[0])
    for idx, cnt in bag.items():
        out += cnt * M[:, idx]
    return out


def score(model: EmbeddingModel, x_bag: BagOfWords, y_bag: BagOfWords) -> float:
    """Inner product of the summed input and candidate embeddings."""
    return float(_embed_bag(model.A, x_bag) @ _embed_bag(model.B, y_bag))


def input_bag(example: Example, vocab: Vocabulary, use_history: bool) -> BagOfWords:
    """Latest utterance, optionally with the whole history summed in (no
    time or speaker tokens on the supervised-embedding side)."""
    bag = phi(example.input_utterance, vocab)
    if use_history:
        for turn in example.history:
            for idx, cnt in phi(turn.text, vocab).items():
                bag[idx] = bag.get(idx, 0) + cnt
    return bag


def encode_examples(
    examples: list[Example], vocab: Vocabulary, hp: TrainHp, cfg: FeatureConfig,
    candidates: CandidateSet,
) -> list[EncodedExample]:
    out = []
    for ex in examples:
        idx, cnt = bag_arrays(input_bag(ex, vocab, hp.use_history))
        gold = candidates.index.get(ex.gold, -1)
        out.append(EncodedExample(idx, cnt, gold, ex.dialog_id,
                                  encode_candidate_context(ex, cfg)))
    return out


@dataclass
class _Forward:
    a: np.ndarray
    E: np.ndarray
    scores: np.ndarray
    mat_sub: object
    cand_ids: np.ndarray
    fired: list[tuple[int, int]]


def _forward(model: EmbeddingModel, enc: EncodedExample, cand_index: CandidateIndex,
             cand_ids: np.ndarray) -> _Forward:
    a = model.A[:, enc.x_idx] @ enc.x_cnt if len(enc.x_idx) else np.zeros(model.dim)
    fired = cand_index.fired_subset(cand_ids, enc.context, model.cfg)
    mat_sub = cand_index.mat[cand_ids]
    E = mat_sub @ model.B.T
    for k, t_idx in fired:
        E[k] += model.B[:, t_idx]
    return _Forward(a, E, E @ a, mat_sub, cand_ids, fired)


def _hinge(margin: float, scores: np.ndarray) -> tuple[float, np.ndarray, int]:
    """Margin-ranking hinge against scores[0] as the gold, averaged over the
    violated negatives so a step never scales with the sample size."""
    slack = margin - scores[0] + scores[1:]
    violated = slack > 0
    n_viol = int(violated.sum())
    loss = float(slack[violated].sum()) / max(1, n_viol)
    return loss, violated, n_viol


def hinge_loss(model: EmbeddingModel, enc: EncodedExample, cand_index: CandidateIndex,
               cand_ids: np.ndarray) -> float:
    """max(0, m - f(x, gold) + f(x, neg)) averaged over violated negatives;
    cand_ids[0] is the gold candidate.  Zero iff every margin is satisfied."""
    fwd = _forward(model, enc, cand_index, cand_ids)
    loss, _, _ = _hinge(model.hp.margin, fwd.scores)
    return loss


@dataclass
class _SparseGrads:
    ds: np.ndarray
    g_a: np.ndarray              # grad wrt the summed input embedding
    b_cols: np.ndarray
    b_coef: np.ndarray


def _backward(model: EmbeddingModel, fwd: _Forward) -> _SparseGrads | None:
    _, violated, n_viol = _hinge(model.hp.margin, fwd.scores)
    if n_viol == 0:
        return None
    ds = np.zeros(len(fwd.cand_ids))
    ds[1:][violated] = 1.0 / n_viol
    ds[0] = -1.0
    active = np.nonzero(ds)[0]
    g_a = ds[active] @ fwd.E[active]

    cols, coef = [], []
    sub = fwd.mat_sub
    for k in active:
        start, end = sub.indptr[k], sub.indptr[k + 1]
        cols.append(sub.indices[start:end].astype(np.int64))
        coef.append(ds[k] * sub.data[start:end])
    for k, t_idx in fwd.fired:
        if ds[k] != 0.0:
            cols.append(np.asarray([t_idx], dtype=np.int64))
            coef.append(np.asarray([ds[k]]))
    return _SparseGrads(ds, g_a,
                        np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64),
                        np.concatenate(coef) if coef else np.zeros(0))


def loss_and_grads(model: EmbeddingModel, enc: EncodedExample, cand_index: CandidateIndex,
                   cand_ids: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Dense gradients for the finite-difference oracle."""
    fwd = _forward(model, enc, cand_index, cand_ids)
    loss, _, _ = _hinge(model.hp.margin, fwd.scores)
    grads = {"A": np.zeros_like(model.A), "B": np.zeros_like(model.B)}
    sg = _backward(model, fwd)
    if sg is not None:
        if len(enc.x_idx):
            np.add.at(grads["A"].T, enc.x_idx, np.outer(enc.x_cnt, sg.g_a))
        np.add.at(grads["B"].T, sg.b_cols, sg.b_coef[:, None] * fwd.a[None, :])
        if model.hp.tied:
            total = grads["A"] + grads["B"]
            grads = {"A": total, "B": total}
    return loss, grads


def train_step(model: EmbeddingModel, enc: EncodedExample, cand_index: CandidateIndex,
               rng) -> float:
    """One SGD step on one example; returns the hinge loss before the update."""
    hp = model.hp
    n_cands = len(cand_index.candidates)
    n = min(hp.negatives, n_cands - 1)
    negs = rng.choice(n_cands - 1, size=n, replace=False)
    negs[negs >= enc.gold] += 1
    cand_ids = np.concatenate(([enc.gold], negs))

    fwd = _forward(model, enc, cand_index, cand_ids)
    loss, _, _ = _hinge(hp.margin, fwd.scores)
    if not np.isfinite(loss):
        raise NumericError(f"non-finite hinge loss (dialog {enc.dialog_id})")
    sg = _backward(model, fwd)
    if sg is None:
        return loss
    if len(enc.x_idx):
        np.subtract.at(model.A.T, enc.x_idx, hp.lr * np.outer(enc.x_cnt, sg.g_a))
    np.subtract.at(model.B.T, sg.b_cols, hp.lr * sg.b_coef[:, None] * fwd.a[None, :])
    return loss


def full_scores(model: EmbeddingModel, enc: EncodedExample, cand_index: CandidateIndex,
                E_full: np.ndarray | None = None) -> np.ndarray:
    a = model.A[:, enc.x_idx] @ enc.x_cnt if len(enc.x_idx) else np.zeros(model.dim)
    if E_full is None:
        E_full = cand_index.mat @ model.B.T
    scores = E_full @ a
    for t_idx, ids in cand_index.fired_full(enc.context, model.cfg):
        scores[ids] += a @ model.B[:, t_idx]
    return scores


def accuracy(model: EmbeddingModel, encs: list[EncodedExample], cand_index: CandidateIndex) -> float:
    E_full = cand_index.mat @ model.B.T
    correct = sum(
        int(np.argmax(full_scores(model, e, cand_index, E_full))) == e.gold for e in encs
    )
    return correct / max(1, len(encs))


def train(
    train_examples: list[Example],
    val_examples: list[Example],
    candidates: CandidateSet,
    vocab: Vocabulary,
    hp: TrainHp,
    cfg: FeatureConfig = FeatureConfig(),
    kbs: list[KnowledgeBase] | None = None,
    log=None,
) -> tuple[EmbeddingModel, list[dict]]:
    """Margin-ranking SGD; returns the epoch snapshot with the best
    validation per-response accuracy plus the training curve."""
    model = init_model(vocab, hp, cfg)
    cand_index = CandidateIndex(candidates, vocab, kbs or [])
    train_enc = encode_examples(train_examples, vocab, hp, cfg, candidates)
    val_enc = encode_examples(val_examples, vocab, hp, cfg, candidates)

    rng = np.random.default_rng(hp.seed + 1)
    best = model.copy_params()
    best_acc = -1.0
    curve = []
    for epoch in range(hp.epochs):
        order = rng.permutation(len(train_enc))
        total = 0.0
        for i in order:
            total += train_step(model, train_enc[i], cand_index, rng)
        val_acc = accuracy(model, val_enc, cand_index) if val_enc else 0.0
        curve.append({"epoch": epoch + 1, "train_loss": total / max(1, len(train_enc)),
                      "val_per_response": val_acc})
        if log:
            log(curve[-1])
        if val_enc and val_acc > best_acc:
            best_acc = val_acc
            best = model.copy_params()
    if hp.epochs > 0 and val_enc:
        model.restore_params(best)
    return model, curve


class EmbeddingRanker:
    """Ranker protocol wrapper around a trained model."""

    def __init__(self, model: EmbeddingModel, candidates: CandidateSet, vocab: Vocabulary,
                 kbs: list[KnowledgeBase] | None = None):
        self.model = model
        self.vocab = vocab
        self.candidates = candidates
        self.cand_index = CandidateIndex(candidates, vocab, kbs or [])
        self._E_full = None

    def _encode(self, example: Example) -> EncodedExample:
        idx, cnt = bag_arrays(input_bag(example, self.vocab, self.model.hp.use_history))
        gold = self.candidates.index.get(example.gold, -1)
        return EncodedExample(idx, cnt, gold, example.dialog_id,
                              encode_candidate_context(example, self.model.cfg))

    def scores(self, example: Example) -> np.ndarray:
        if self._E_full is None:
            self._E_full = self.cand_index.mat @ self.model.B.T
        return full_scores(self.model, self._encode(example), self.cand_index, self._E_full)

    def rank(self, example: Example) -> list[int]:
        s = self.scores(example)
        return np.lexsort((np.arange(len(s)), -s)).tolist()

    def gold_rank(self, example: Example, gold_idx: int) -> int:
        s = self.scores(example)
        better = int((s > s[gold_idx]).sum())
        tied_before = int((s[:gold_idx] == s[gold_idx]).sum())
        return better + tied_before
