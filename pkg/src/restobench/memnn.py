"""End-to-end memory network over dialog history.

Memory slots and the controller input share one embedding matrix A; each hop
attends over memory with a softmax, maps the read through the square matrix
R and adds it to the controller state; candidates are scored against the
final state through W and trained with cross-entropy over the gold response
plus sampled negatives (or the full set when configured).
"""
from __future__ import annotations

from dataclasses import dataclass, asdict, field

import numpy as np
from scipy.linalg.blas import dger

from .checkpoints import load_checkpoint, save_checkpoint
from .corpus import CandidateSet, Example, Vocabulary
from .encoding import CandidateIndex, EncodedExample, bag_arrays, bags_to_csr, encode_candidate_context
from .errors import NumericError
from .features import FeatureConfig, encode_memory, phi
from .kb import KnowledgeBase


@dataclass
class MemNNHp:
    lr: float = 0.01
    dim: int = 128
    hops: int = 1
    negatives: int = 100  # only used when full_softmax is off
    epochs: int = 40
    seed: int = 1
    # cross-entropy over the whole candidate set; the sampled-negative
    # variant almost never sees the near-duplicate candidates (600 api
    # calls differing in one field), so margins against them never form
    full_softmax: bool = True
    clip_norm: float | None = 40.0  # per-example gradient norm ceiling
    # attention logits scale like init^2; starting much smaller than this
    # stalls every memory-dependent gradient path
    init_scale: float = 0.1
    # halve the step size on this epoch cadence (0 disables)
    anneal_every: int = 20
    anneal_factor: float = 0.5


@dataclass
class AttentionTrace:
    """Per-hop attention over memory slots (each row sums to 1)."""

    per_hop: list[np.ndarray]


class MemN2NModel:
    def __init__(self, A: np.ndarray, R: np.ndarray, W: np.ndarray, vocab_hash: str,
                 hp: MemNNHp, cfg: FeatureConfig):
        self.A = A
        self.R = R
        self.W = W
        self.vocab_hash = vocab_hash
        self.hp = hp
        self.cfg = cfg

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"A": self.A, "R": self.R, "W": self.W}

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params().items()}

    def load_params(self, params: dict[str, np.ndarray]) -> None:
        for k, v in params.items():
            getattr(self, k)[...] = v

    def save(self, path) -> None:
        meta = {
            "vocab_sha256": self.vocab_hash,
            "dim": self.dim,
            "hops": self.hp.hops,
            "hp": asdict(self.hp),
            "cfg": asdict(self.cfg),
        }
        save_checkpoint(path, "memnn", meta, self.params())

    @classmethod
    def loadf(cls, path, vocab: Vocabulary) -> "MemN2NModel":
        meta, arrays = load_checkpoint(path, vocab)
        return cls(arrays["A"], arrays["R"], arrays["W"], meta["vocab_sha256"],
                   MemNNHp(**meta["hp"]), FeatureConfig(**meta["cfg"]))


def init_model(vocab: Vocabulary, hp: MemNNHp, cfg: FeatureConfig) -> MemN2NModel:
    rng = np.random.default_rng(hp.seed)
    V = len(vocab)
    s = hp.init_scale
    A = rng.uniform(-s, s, size=(hp.dim, V))
    R = rng.uniform(-s, s, size=(hp.dim, hp.dim))
    W = rng.uniform(-s, s, size=(hp.dim, V))
    return MemN2NModel(A, R, W, vocab.sha256(), hp, cfg)


def encode(example: Example, vocab: Vocabulary, cfg: FeatureConfig,
           candidates: CandidateSet | None = None) -> EncodedExample:
    """Memory = time/speaker-tagged bags of the history; input = plain bag of
    the last user utterance (no time token)."""
    slots = encode_memory(example.history, vocab, cfg)
    memory = bags_to_csr(slots, len(vocab)) if slots else None
    x_idx, x_cnt = bag_arrays(phi(example.input_utterance, vocab))
    gold = candidates.index.get(example.gold, -1) if candidates is not None else -1
    return EncodedExample(x_idx, x_cnt, gold, example.dialog_id,
                          encode_candidate_context(example, cfg), memory)


def embed(model: MemN2NModel, enc: EncodedExample) -> tuple[np.ndarray, np.ndarray]:
    """(memory vectors, controller input q): A applied to the slot bags and
    the input bag."""
    m = enc.memory @ model.A.T if enc.memory is not None and enc.memory.shape[0] else \
        np.zeros((0, model.dim))
    q = model.A[:, enc.x_idx] @ enc.x_cnt if len(enc.x_idx) else np.zeros(model.dim)
    return m, q


def softmax(u: np.ndarray) -> np.ndarray:
    e = np.exp(u - u.max())
    return e / e.sum()


def hop(q: np.ndarray, memory: np.ndarray, R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One attention read: p = softmax(memory . q), next state q + R memory^T p.

    An empty memory skips attention and returns the state unchanged.
    """
    if memory is None or memory.shape[0] == 0:
        return np.zeros(0), q
    p = softmax(memory @ q)
    return p, q + R @ (memory.T @ p)


@dataclass
class _Forward:
    m: np.ndarray | None
    qs: list[np.ndarray]
    ps: list[np.ndarray]
    cs: list[np.ndarray]
    scores: np.ndarray
    probs: np.ndarray
    E: np.ndarray
    mat_sub: object
    cand_ids: np.ndarray
    fired: list[tuple[int, int]]


def _forward(model: MemN2NModel, enc: EncodedExample, cand_index: CandidateIndex,
             cand_ids: np.ndarray) -> _Forward:
    A, R, W = model.A, model.R, model.W
    m, q = embed(model, enc)
    if m.shape[0] == 0:
        m = None
    qs, ps, cs = [q], [], []
    for _ in range(model.hp.hops):
        if m is None:
            ps.append(np.zeros(0))
            cs.append(np.zeros(model.dim))
            qs.append(qs[-1])
            continue
        p = softmax(m @ qs[-1])
        c = m.T @ p
        qs.append(qs[-1] + R @ c)
        ps.append(p)
        cs.append(c)
    fired = cand_index.fired_subset(cand_ids, enc.context, model.cfg)
    mat_sub = cand_index.mat[cand_ids]
    E = mat_sub @ W.T
    for k, t_idx in fired:
        E[k] += W[:, t_idx]
    scores = E @ qs[-1]
    return _Forward(m, qs, ps, cs, scores, softmax(scores), E, mat_sub, cand_ids, fired)


def forward(model: MemN2NModel, example_or_enc, cand_index: CandidateIndex,
            vocab: Vocabulary | None = None) -> tuple[np.ndarray, AttentionTrace]:
    """Probability distribution over the full candidate set plus the trace."""
    enc = example_or_enc
    if isinstance(example_or_enc, Example):
        enc = encode(example_or_enc, vocab, model.cfg, cand_index.candidates)
    cand_ids = np.arange(len(cand_index.candidates))
    fwd = _forward(model, enc, cand_index, cand_ids)
    return fwd.probs, AttentionTrace(fwd.ps)


@dataclass
class _SparseGrads:
    """Gradient pieces in scatter form: matrix.T[cols] += rows."""

    w_cols: np.ndarray
    w_rows: np.ndarray
    dR: np.ndarray
    a_cols: np.ndarray
    a_rows: np.ndarray


def _hops_backward(model: MemN2NModel, enc: EncodedExample, m, qs, ps, cs, dq):
    """Back-propagate dq (gradient at the final controller state) through the
    hops; returns (dR, A-scatter columns, A-scatter rows)."""
    R = model.R
    dR = np.zeros_like(R)
    dm = np.zeros_like(m) if m is not None else None
    for h in range(model.hp.hops - 1, -1, -1):
        p, c = ps[h], cs[h]
        if m is None or len(p) == 0:
            continue
        dR += np.outer(dq, c)
        dc = R.T @ dq
        dp = m @ dc
        du = p * (dp - p @ dp)
        dm += np.outer(du, qs[h])
        dm += np.outer(p, dc)
        dq = dq + m.T @ du

    # embedding-side scatter for A: memory nonzeros plus the input bag
    a_cols_parts, a_rows_parts = [], []
    if dm is not None and enc.memory is not None:
        mem = enc.memory
        nnz_rows = np.repeat(np.arange(mem.shape[0]), np.diff(mem.indptr))
        a_cols_parts.append(mem.indices.astype(np.int64))
        a_rows_parts.append(mem.data[:, None] * dm[nnz_rows])
    if len(enc.x_idx):
        a_cols_parts.append(enc.x_idx)
        a_rows_parts.append(enc.x_cnt[:, None] * dq[None, :])
    if a_cols_parts:
        a_cols = np.concatenate(a_cols_parts)
        a_rows = np.concatenate(a_rows_parts)
    else:
        a_cols = np.zeros(0, dtype=np.int64)
        a_rows = np.zeros((0, model.dim))
    return dR, a_cols, a_rows


def _backward(model: MemN2NModel, enc: EncodedExample, fwd: _Forward) -> _SparseGrads:
    ds = fwd.probs.copy()
    gold_pos = int(np.nonzero(fwd.cand_ids == enc.gold)[0][0])
    ds[gold_pos] -= 1.0
    q_final = fwd.qs[-1]

    # candidate-side scatter for W
    cols, coef = [], []
    sub = fwd.mat_sub
    for row in range(sub.shape[0]):
        if ds[row] == 0.0:
            continue
        start, end = sub.indptr[row], sub.indptr[row + 1]
        cols.append(sub.indices[start:end])
        coef.append(ds[row] * sub.data[start:end])
    for k, t_idx in fwd.fired:
        if ds[k] != 0.0:
            cols.append(np.asarray([t_idx], dtype=np.int64))
            coef.append(np.asarray([ds[k]]))
    if cols:
        w_cols = np.concatenate(cols)
        w_rows = np.concatenate(coef)[:, None] * q_final[None, :]
    else:
        w_cols = np.zeros(0, dtype=np.int64)
        w_rows = np.zeros((0, model.dim))

    dq = fwd.E.T @ ds
    dR, a_cols, a_rows = _hops_backward(model, enc, fwd.m, fwd.qs, fwd.ps, fwd.cs, dq)
    return _SparseGrads(w_cols, w_rows, dR, a_cols, a_rows)


def loss_and_grads(model: MemN2NModel, enc: EncodedExample, cand_index: CandidateIndex,
                   cand_ids: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Dense gradients for all three matrices (finite-difference oracle path)."""
    fwd = _forward(model, enc, cand_index, cand_ids)
    gold_pos = int(np.nonzero(cand_ids == enc.gold)[0][0])
    loss = -float(np.log(max(fwd.probs[gold_pos], 1e-300)))
    sg = _backward(model, enc, fwd)
    grads = {"A": np.zeros_like(model.A), "R": sg.dR, "W": np.zeros_like(model.W)}
    np.add.at(grads["W"].T, sg.w_cols, sg.w_rows)
    np.add.at(grads["A"].T, sg.a_cols, sg.a_rows)
    return loss, grads


def loss_only(model: MemN2NModel, enc: EncodedExample, cand_index: CandidateIndex,
              cand_ids: np.ndarray) -> float:
    fwd = _forward(model, enc, cand_index, cand_ids)
    gold_pos = int(np.nonzero(cand_ids == enc.gold)[0][0])
    return -float(np.log(max(fwd.probs[gold_pos], 1e-300)))


def train_step_sampled(model: MemN2NModel, enc: EncodedExample, cand_index: CandidateIndex,
                       rng, lr: float | None = None) -> float:
    """Cross-entropy over the gold plus N uniformly sampled negatives."""
    hp = model.hp
    n_cands = len(cand_index.candidates)
    n = min(hp.negatives, n_cands - 1)
    negs = rng.choice(n_cands - 1, size=n, replace=False)
    negs[negs >= enc.gold] += 1
    cand_ids = np.concatenate(([enc.gold], negs))
    fwd = _forward(model, enc, cand_index, cand_ids)
    loss = -float(np.log(max(fwd.probs[0], 1e-300)))
    if not np.isfinite(loss) or not np.isfinite(fwd.scores).all():
        raise NumericError(f"non-finite loss at example (dialog {enc.dialog_id})")
    sg = _backward(model, enc, fwd)
    scale = hp.lr if lr is None else lr
    if hp.clip_norm is not None:
        norm = np.sqrt((sg.w_rows ** 2).sum() + (sg.dR ** 2).sum() + (sg.a_rows ** 2).sum())
        if norm > hp.clip_norm:
            scale *= hp.clip_norm / norm
    np.subtract.at(model.W.T, sg.w_cols, scale * sg.w_rows)
    model.R -= scale * sg.dR
    np.subtract.at(model.A.T, sg.a_cols, scale * sg.a_rows)
    return loss


def train_step_full(model: MemN2NModel, enc: EncodedExample, cand_index: CandidateIndex,
                    E_full: np.ndarray, lr: float | None = None) -> float:
    """Cross-entropy over the whole candidate set.

    dW for a shared controller state is rank one: outer(q, C^T ds), and the
    cached candidate-embedding matrix E_full = C W^T follows by another
    rank-one update, so the full objective costs no more per step than the
    sampled one.  E_full is updated in place.
    """
    hp = model.hp
    m, q = embed(model, enc)
    if m.shape[0] == 0:
        m = None
    qs, ps, cs = [q], [], []
    for _ in range(hp.hops):
        if m is None:
            ps.append(np.zeros(0))
            cs.append(np.zeros(model.dim))
            qs.append(qs[-1])
            continue
        p = softmax(m @ qs[-1])
        c = m.T @ p
        qs.append(qs[-1] + model.R @ c)
        ps.append(p)
        cs.append(c)
    q_final = qs[-1]
    scores = E_full @ q_final
    fired = cand_index.fired_full(enc.context, model.cfg)
    for t_idx, ids in fired:
        scores[ids] += q_final @ model.W[:, t_idx]
    probs = softmax(scores)
    loss = -float(np.log(max(probs[enc.gold], 1e-300)))
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss at example (dialog {enc.dialog_id})")

    ds = probs
    ds[enc.gold] -= 1.0
    g = cand_index.mat.T @ ds
    for t_idx, ids in fired:
        g[t_idx] += ds[ids].sum()
    dq = model.W @ g
    dR, a_cols, a_rows = _hops_backward(model, enc, m, qs, ps, cs, dq)

    scale = hp.lr if lr is None else lr
    if hp.clip_norm is not None:
        w_norm_sq = float(q_final @ q_final) * float(g @ g)
        norm = np.sqrt(w_norm_sq + (dR ** 2).sum() + (a_rows ** 2).sum())
        if norm > hp.clip_norm:
            scale *= hp.clip_norm / norm
    # rank-one updates in place (W.T and E_full.T are Fortran-ordered views)
    dger(-scale, g, q_final, a=model.W.T, overwrite_a=1)
    dger(-scale, q_final, cand_index.mat @ g, a=E_full.T, overwrite_a=1)
    model.R -= scale * dR
    np.subtract.at(model.A.T, a_cols, scale * a_rows)
    return loss


def full_scores(model: MemN2NModel, enc: EncodedExample, cand_index: CandidateIndex,
                E_full: np.ndarray | None = None) -> np.ndarray:
    """Scores over the whole candidate set; E_full = mat @ W.T may be reused."""
    m, q = embed(model, enc)
    if m.shape[0] == 0:
        m = None
    for _ in range(model.hp.hops):
        _, q = hop(q, m, model.R)
    if E_full is None:
        E_full = cand_index.mat @ model.W.T
    scores = E_full @ q
    for t_idx, ids in cand_index.fired_full(enc.context, model.cfg):
        scores[ids] += q @ model.W[:, t_idx]
    return scores


def accuracy(model: MemN2NModel, encs: list[EncodedExample], cand_index: CandidateIndex) -> float:
    E_full = cand_index.mat @ model.W.T
    correct = sum(
        int(np.argmax(full_scores(model, e, cand_index, E_full))) == e.gold for e in encs
    )
    return correct / max(1, len(encs))


def train(
    train_examples: list[Example],
    val_examples: list[Example],
    candidates: CandidateSet,
    vocab: Vocabulary,
    hp: MemNNHp,
    cfg: FeatureConfig = FeatureConfig(),
    kbs: list[KnowledgeBase] | None = None,
    log=None,
) -> tuple[MemN2NModel, list[dict]]:
    """SGD on cross-entropy; returns the best-validation epoch snapshot."""
    model = init_model(vocab, hp, cfg)
    cand_index = CandidateIndex(candidates, vocab, kbs or [])
    train_enc = [encode(ex, vocab, cfg, candidates) for ex in train_examples]
    val_enc = [encode(ex, vocab, cfg, candidates) for ex in val_examples]

    rng = np.random.default_rng(hp.seed + 1)
    best = model.copy_params()
    best_acc = -1.0
    curve = []
    for epoch in range(hp.epochs):
        lr = hp.lr
        if hp.anneal_every:
            lr = hp.lr * hp.anneal_factor ** (epoch // hp.anneal_every)
        order = rng.permutation(len(train_enc))
        total = 0.0
        if hp.full_softmax:
            # fresh at every epoch to stop rank-one drift from accumulating
            E_full = cand_index.mat @ model.W.T
            for i in order:
                total += train_step_full(model, train_enc[i], cand_index, E_full, lr)
        else:
            for i in order:
                total += train_step_sampled(model, train_enc[i], cand_index, rng, lr)
        val_acc = accuracy(model, val_enc, cand_index) if val_enc else 0.0
        curve.append({"epoch": epoch + 1, "train_loss": total / max(1, len(train_enc)),
                      "val_per_response": val_acc})
        if log:
            log(curve[-1])
        if val_enc and val_acc > best_acc:
            best_acc = val_acc
            best = model.copy_params()
    if hp.epochs > 0 and val_enc:
        model.load_params(best)
    return model, curve


class MemNNRanker:
    """Ranker protocol wrapper; also exposes the attention trace."""

    def __init__(self, model: MemN2NModel, candidates: CandidateSet, vocab: Vocabulary,
                 kbs: list[KnowledgeBase] | None = None):
        self.model = model
        self.vocab = vocab
        self.candidates = candidates
        self.cand_index = CandidateIndex(candidates, vocab, kbs or [])
        self._E_full = None

    def scores(self, example: Example) -> np.ndarray:
        if self._E_full is None:
            self._E_full = self.cand_index.mat @ self.model.W.T
        enc = encode(example, self.vocab, self.model.cfg, self.candidates)
        return full_scores(self.model, enc, self.cand_index, self._E_full)

    def rank(self, example: Example) -> list[int]:
        s = self.scores(example)
        return np.lexsort((np.arange(len(s)), -s)).tolist()

    def gold_rank(self, example: Example, gold_idx: int) -> int:
        s = self.scores(example)
        better = int((s > s[gold_idx]).sum())
        tied_before = int((s[:gold_idx] == s[gold_idx]).sum())
        return better + tied_before

    def rank_with_trace(self, example: Example) -> tuple[list[int], AttentionTrace]:
        enc = encode(example, self.vocab, self.model.cfg, self.candidates)
        probs, trace = forward(self.model, enc, self.cand_index)
        order = np.lexsort((np.arange(len(probs)), -probs)).tolist()
        return order, trace
