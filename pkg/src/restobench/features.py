"""Input representations: bags-of-words, time/speaker features, TF-IDF
weighting, and the match-type augmentation that types KB entities."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import Example, Vocabulary, bigrams, tokenize
from .kb import EntityType, KnowledgeBase, entity_type_of
from .simulator import Dialog, Speaker, Turn

# sparse token-index -> count map over a Vocabulary
BagOfWords = dict[int, int]


@dataclass(frozen=True)
class FeatureConfig:
    use_history: bool = True
    time_features: bool = True
    speaker_features: bool = True
    match_type: bool = False
    match_type_no_history: bool = False
    bigrams: bool = False
    # position tokens count from the most recent turn backwards (the update
    # tasks hinge on recency: the last mention of a field wins), from the
    # dialog start when unset
    time_from_end: bool = True

    def __post_init__(self):
        if self.match_type_no_history and not self.match_type:
            raise ValueError("match_type_no_history implies match_type")


def phi(text: str, vocab: Vocabulary) -> BagOfWords:
    """Token counts over the vocabulary; unknown tokens are dropped."""
    toks = tokenize(text)
    if vocab.use_bigrams:
        toks = toks + bigrams(toks)
    bag: BagOfWords = {}
    for tok in toks:
        idx = vocab.get(tok)
        if idx is not None:
            bag[idx] = bag.get(idx, 0) + 1
    return bag


def encode_memory(
    history: Sequence[Turn], vocab: Vocabulary, cfg: FeatureConfig = FeatureConfig()
) -> list[BagOfWords]:
    """One bag per memory slot, optionally tagged with its (clamped) position
    and speaker; api results are user-side slots."""
    slots = []
    n = len(history)
    for i, turn in enumerate(history):
        bag = phi(turn.text, vocab)
        if cfg.time_features:
            position = n - i if cfg.time_from_end else i + 1
            idx = vocab.time_token_index(position)
            bag[idx] = bag.get(idx, 0) + 1
        if cfg.speaker_features:
            idx = vocab.speaker_token_index(turn.speaker)
            bag[idx] = bag.get(idx, 0) + 1
        slots.append(bag)
    return slots


# ---------------------------------------------------------------------------
# tf-idf


def build_idf(documents: Iterable[Sequence[str]]) -> dict[str, float]:
    """Natural-log idf without smoothing; one document per utterance."""
    df = Counter()
    n_docs = 0
    for toks in documents:
        n_docs += 1
        df.update(set(toks))
    return {tok: math.log(n_docs / d) for tok, d in df.items()}


def tfidf_weight(counts: Counter, idf: dict[str, float]) -> dict[str, float]:
    """count x idf per token; tokens unseen in the idf corpus get weight 0."""
    return {tok: c * idf[tok] for tok, c in counts.items() if tok in idf}


def cosine(a: dict[str, float], b: dict[str, float]) -> float:
    """Cosine similarity; 0 against any empty/zero vector."""
    if len(b) < len(a):
        a, b = b, a
    dot = sum(w * b.get(tok, 0.0) for tok, w in a.items())
    na = math.sqrt(sum(w * w for w in a.values()))
    nb = math.sqrt(sum(w * w for w in b.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


# ---------------------------------------------------------------------------
# match-type features


def entity_types_present(tokens: Iterable[str], kbs: list[KnowledgeBase]) -> set[EntityType]:
    return {t for t in (entity_type_of(kbs, tok) for tok in tokens) if t is not None}


def match_types(
    candidate_tokens: Sequence[str],
    context_words: set[str],
    kbs: list[KnowledgeBase],
    cfg: FeatureConfig,
) -> set[EntityType]:
    """Entity types whose token should be added to the candidate bag.

    A type fires when some word is a KB entity of that type and appears in
    the candidate; unless the no-history variant is active the word must
    also appear in the context (input or memory).
    """
    fired: set[EntityType] = set()
    for tok in candidate_tokens:
        etype = entity_type_of(kbs, tok)
        if etype is None or etype in fired:
            continue
        if cfg.match_type_no_history or tok in context_words:
            fired.add(etype)
    return fired


def match_type_augment(
    candidate_bag: BagOfWords,
    candidate_tokens: Sequence[str],
    context_words: set[str],
    kbs: list[KnowledgeBase],
    cfg: FeatureConfig,
    vocab: Vocabulary,
) -> BagOfWords:
    """Candidate bag plus one reserved type token per fired entity type.

    Works from the raw candidate tokens so OOV entities (absent from the
    vocabulary, hence from the bag) can still be typed via the KB index.
    """
    if not cfg.match_type:
        return dict(candidate_bag)
    bag = dict(candidate_bag)
    for etype in match_types(candidate_tokens, context_words, kbs, cfg):
        idx = vocab.type_token_index(etype)
        bag[idx] = bag.get(idx, 0) + 1
    return bag


def context_words_of(example: Example, cfg: FeatureConfig) -> set[str]:
    """Raw words eligible as match-type context: the input utterance plus,
    when history is used, every history turn."""
    words = set(tokenize(example.input_utterance))
    if cfg.use_history:
        for turn in example.history:
            words.update(tokenize(turn.text))
    return words
