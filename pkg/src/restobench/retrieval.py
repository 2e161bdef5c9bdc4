"""Non-learning IR baselines: TF-IDF match and nearest neighbor.

Both return a full candidate ordering with ties broken by candidate index,
so downstream metrics see a total order.
"""
from __future__ import annotations

from collections import Counter

from .corpus import CandidateSet, Example, bigrams, tokenize
from .errors import DataError
from .features import (
    FeatureConfig,
    build_idf,
    cosine,
    entity_type_of,
    match_types,
    tfidf_weight,
)
from .kb import KnowledgeBase
from .simulator import Dialog, Speaker

_TYPE_TOKEN = "@match_{}"


def _ranked(scores: list[float]) -> list[int]:
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


class TfidfMatcher:
    """Rank candidates by TF-IDF weighted cosine against the input."""

    def __init__(
        self,
        train_dialogs: list[Dialog],
        candidates: CandidateSet,
        cfg: FeatureConfig = FeatureConfig(),
        kbs: list[KnowledgeBase] | None = None,
    ):
        self.cfg = cfg
        self.kbs = kbs or []
        if cfg.match_type and not self.kbs:
            raise DataError("match_type tf-idf needs at least one KB")
        self.candidates = candidates
        docs = []
        for d in train_dialogs:
            for t in d.turns:
                docs.append(self._doc_tokens(tokenize(t.text)))
        self.idf = build_idf(docs)
        self._cand_tokens = [tokenize(c) for c in candidates.candidates]
        self._cand_counts = [Counter(self._expand(toks)) for toks in self._cand_tokens]

    def _expand(self, toks: list[str]) -> list[str]:
        return toks + bigrams(toks) if self.cfg.bigrams else toks

    def _doc_tokens(self, toks: list[str]) -> list[str]:
        """Training documents carry a type marker per entity word so the
        marker has a document frequency (and hence a usable idf)."""
        out = self._expand(toks)
        if self.cfg.match_type:
            for etype in {entity_type_of(self.kbs, t) for t in toks} - {None}:
                out = out + [_TYPE_TOKEN.format(etype.value)]
        return out

    def _input_tokens(self, example: Example) -> list[str]:
        toks = tokenize(example.input_utterance)
        if self.cfg.use_history:
            hist: list[str] = []
            for turn in example.history:
                hist.extend(tokenize(turn.text))
            toks = hist + toks
        return toks

    def scores(self, example: Example) -> list[float]:
        in_toks = self._input_tokens(example)
        query = Counter(self._expand(in_toks))
        if self.cfg.match_type:
            for etype in {entity_type_of(self.kbs, t) for t in in_toks} - {None}:
                query[_TYPE_TOKEN.format(etype.value)] += 1
        context = set(in_toks)
        qvec = tfidf_weight(query, self.idf)
        out = []
        for toks, counts in zip(self._cand_tokens, self._cand_counts):
            if self.cfg.match_type:
                counts = counts.copy()
                for etype in match_types(toks, context, self.kbs, self.cfg):
                    counts[_TYPE_TOKEN.format(etype.value)] += 1
            out.append(cosine(qvec, tfidf_weight(counts, self.idf)))
        return out

    def rank(self, example: Example) -> list[int]:
        return _ranked(self.scores(example))


class NearestNeighbor:
    """Echo the response of the training utterance with the largest word
    overlap; co-occurrence frequency orders responses of that utterance."""

    def __init__(self, train_examples: list[Example], candidates: CandidateSet):
        if not train_examples:
            raise DataError("nearest neighbor needs a non-empty training store")
        self.candidates = candidates
        self._order: list[str] = []
        self._responses: dict[str, Counter] = {}
        self._bags: dict[str, Counter] = {}
        for ex in train_examples:
            utt = ex.input_utterance
            if utt not in self._responses:
                self._order.append(utt)
                self._responses[utt] = Counter()
                self._bags[utt] = Counter(tokenize(utt))
            self._responses[utt][ex.gold] += 1

    @staticmethod
    def _overlap(a: Counter, b: Counter) -> int:
        return sum((a & b).values())

    def rank(self, example: Example) -> list[int]:
        query = Counter(tokenize(example.input_utterance))
        best_utt = max(self._order, key=lambda u: self._overlap(query, self._bags[u]))
        # max() keeps the earliest utterance on ties (training order)
        head = []
        for resp, _count in sorted(
            self._responses[best_utt].items(),
            key=lambda kv: (-kv[1], self.candidates.index.get(kv[0], len(self.candidates))),
        ):
            idx = self.candidates.index.get(resp)
            if idx is not None:
                head.append(idx)
        seen = set(head)
        return head + [i for i in range(len(self.candidates)) if i not in seen]
