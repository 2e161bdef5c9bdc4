"""Sparse encodings shared by the learned rankers (embeddings, memory net).

Candidate bags live in one CSR matrix; match-type firing is resolved from
raw tokens so out-of-vocabulary entities still produce type features.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .corpus import CandidateSet, Example, Vocabulary, tokenize
from .features import BagOfWords, FeatureConfig, context_words_of, phi
from .kb import KnowledgeBase, entity_type_of


def bag_arrays(bag: BagOfWords) -> tuple[np.ndarray, np.ndarray]:
    if not bag:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float64)
    idx = np.fromiter(bag.keys(), dtype=np.int64, count=len(bag))
    cnt = np.fromiter(bag.values(), dtype=np.float64, count=len(bag))
    order = np.argsort(idx)
    return idx[order], cnt[order]


def bags_to_csr(bags: list[BagOfWords], n_cols: int) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for i, bag in enumerate(bags):
        for j, c in bag.items():
            rows.append(i)
            cols.append(j)
            vals.append(float(c))
    return sp.csr_matrix(
        (vals, (rows, cols)), shape=(len(bags), n_cols), dtype=np.float64
    )


class CandidateIndex:
    """Candidate bag matrix plus typed-entity lookup for match-type features."""

    def __init__(self, candidates: CandidateSet, vocab: Vocabulary, kbs: list[KnowledgeBase]):
        self.candidates = candidates
        self.vocab = vocab
        self.kbs = kbs
        self.tokens = [tokenize(c) for c in candidates.candidates]
        self.mat = bags_to_csr([phi(c, vocab) for c in candidates.candidates], len(vocab))
        # per candidate: (type-token vocab index, raw entity word) pairs
        self.typed: list[list[tuple[int, str]]] = []
        by_type_cands: dict[int, set[int]] = {}
        word_cands: dict[str, list[int]] = {}
        for ci, toks in enumerate(self.tokens):
            entries = []
            seen_words = set()
            for tok in toks:
                if tok in seen_words:
                    continue
                seen_words.add(tok)
                etype = entity_type_of(kbs, tok)
                if etype is None:
                    continue
                t_idx = vocab.type_token_index(etype)
                entries.append((t_idx, tok))
                by_type_cands.setdefault(t_idx, set()).add(ci)
                word_cands.setdefault(tok, []).append(ci)
            self.typed.append(entries)
        self.word_cands = {w: np.asarray(c, dtype=np.int64) for w, c in word_cands.items()}
        self.word_type = {
            w: vocab.type_token_index(entity_type_of(kbs, w)) for w in word_cands
        }
        self.static_fired = [
            (t_idx, np.asarray(sorted(cs), dtype=np.int64))
            for t_idx, cs in sorted(by_type_cands.items())
        ]

    def fired_full(self, context: set[str] | None, cfg: FeatureConfig):
        """(type-token index, candidate ids) pairs over the full candidate set."""
        if not cfg.match_type:
            return []
        if cfg.match_type_no_history:
            return self.static_fired
        per_type: dict[int, list[np.ndarray]] = {}
        for w in context or ():
            cands = self.word_cands.get(w)
            if cands is not None:
                per_type.setdefault(self.word_type[w], []).append(cands)
        return [
            (t_idx, np.unique(np.concatenate(arrs)))
            for t_idx, arrs in sorted(per_type.items())
        ]

    def fired_subset(self, cand_ids: np.ndarray, context: set[str] | None, cfg: FeatureConfig):
        """(position-in-subset, type-token index) pairs for a candidate sample."""
        if not cfg.match_type:
            return []
        out = []
        for k, ci in enumerate(cand_ids):
            for t_idx, word in self.typed[ci]:
                if cfg.match_type_no_history or (context is not None and word in context):
                    out.append((k, t_idx))
        return out


@dataclass
class EncodedExample:
    """Model-ready view of an Example."""

    x_idx: np.ndarray            # input bag token indices
    x_cnt: np.ndarray            # input bag counts
    gold: int                    # candidate index of the gold response
    dialog_id: int
    context: set[str] | None     # raw context words for match-type firing
    memory: sp.csr_matrix | None = None  # one row per memory slot


def encode_candidate_context(example: Example, cfg: FeatureConfig) -> set[str] | None:
    if not cfg.match_type or cfg.match_type_no_history:
        return None
    return context_words_of(example, cfg)
