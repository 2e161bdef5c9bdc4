"""Dialog file format, training examples, candidate set and vocabulary.

File format, one dialog per blank-line-separated block:

    1 hi\thello what can i help you with today
    2 resto_rome_cheap_indian_8stars r_rating 8       (api result, no tab)
    3 <silence>\tapi_call indian rome eight cheap

Line numbers restart at 1 for every dialog.
"""
from __future__ import annotations

import hashlib
import itertools
import re
from dataclasses import dataclass

from .errors import DataError
from .simulator import SILENCE, Dialog, Speaker, Turn, TurnKind, bot_turn, result_turn, user_turn
from .kb import Fact

# reserved vocabulary entries; corpus tokens never start with '@'
TYPE_TOKEN_PREFIX = "@match_"
TIME_TOKEN_PREFIX = "@time_"
SPEAKER_USER_TOKEN = "@speaker_user"
SPEAKER_BOT_TOKEN = "@speaker_bot"
N_TIME_TOKENS = 1000

_TOKEN_RE = re.compile(r"<[a-z_]+>|'[a-z]+|[a-z0-9_]+|[^\sa-z0-9_']")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, detach punctuation and apostrophe
    suffixes; keeps bracketed specials like <silence> whole."""
    return _TOKEN_RE.findall(text.lower())


def bigrams(tokens: list[str]) -> list[str]:
    return [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]


# ---------------------------------------------------------------------------
# dialog files


def write_dialogs(path, dialogs: list[Dialog]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for block in _render_blocks(dialogs):
            f.write(block)


def _render_blocks(dialogs):
    for d_idx, dialog in enumerate(dialogs):
        lines = []
        i = 1
        turns = dialog.turns
        t = 0
        while t < len(turns):
            turn = turns[t]
            if turn.kind is TurnKind.API_RESULT:
                lines.append(f"{i} {turn.text}\n")
                i += 1
                t += 1
                continue
            if turn.speaker is not Speaker.USER:
                raise DataError(f"dialog {d_idx}: bot turn without a preceding user turn")
            if t + 1 >= len(turns) or turns[t + 1].speaker is not Speaker.BOT:
                raise DataError(f"dialog {d_idx}: user turn {turn.text!r} has no bot reply")
            lines.append(f"{i} {turn.text}\t{turns[t + 1].text}\n")
            i += 1
            t += 2
        yield "".join(lines) + "\n"


def read_dialogs(path, task_id: int | None = None) -> list[Dialog]:
    dialogs: list[Dialog] = []
    turns: list[Turn] = []
    expected = 1
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.rstrip("\n")
            if not line.strip():
                if turns:
                    dialogs.append(Dialog(task_id, turns))
                    turns = []
                expected = 1
                continue
            head, _, rest = line.partition(" ")
            try:
                idx = int(head)
            except ValueError:
                raise DataError(f"{path}:{lineno}: line must start with an index")
            if idx != expected:
                raise DataError(f"{path}:{lineno}: expected line number {expected}, got {idx}")
            expected += 1
            if "\t" in rest:
                user_text, _, bot_text = rest.partition("\t")
                turns.append(user_turn(user_text))
                turns.append(bot_turn(bot_text))
            else:
                parts = rest.split(" ")
                if len(parts) != 3:
                    raise DataError(f"{path}:{lineno}: api result line must be '<subj> <rel> <value>'")
                turns.append(result_turn(Fact(*parts)))
    if turns:
        dialogs.append(Dialog(task_id, turns))
    return dialogs


# ---------------------------------------------------------------------------
# examples


@dataclass(frozen=True)
class Example:
    """One bot turn to predict: history, latest user input, gold response."""

    dialog_id: int
    turn_index: int
    history: tuple[Turn, ...]
    input_utterance: str
    gold: str


def to_examples(dialog: Dialog, dialog_id: int = 0) -> list[Example]:
    """One example per bot turn; the latest user utterance is held out of the
    history as the controller input."""
    examples = []
    turns = dialog.turns
    for b, turn in enumerate(turns):
        if turn.speaker is not Speaker.BOT:
            continue
        input_idx = None
        for j in range(b - 1, -1, -1):
            if turns[j].speaker is Speaker.USER and turns[j].kind is TurnKind.UTTERANCE:
                input_idx = j
                break
        if input_idx is None:
            history = tuple(turns[:b])
            input_utterance = ""
        else:
            history = tuple(turns[:input_idx]) + tuple(turns[input_idx + 1 : b])
            input_utterance = turns[input_idx].text
        examples.append(Example(dialog_id, b, history, input_utterance, turn.text))
    return examples


def corpus_examples(dialogs: list[Dialog], start_id: int = 0) -> list[Example]:
    out: list[Example] = []
    for i, d in enumerate(dialogs):
        out.extend(to_examples(d, start_id + i))
    return out


# ---------------------------------------------------------------------------
# candidate set


@dataclass
class CandidateSet:
    """Global pool of bot utterances and api calls, lexicographically ordered
    so argmax tie-breaking is deterministic."""

    candidates: list[str]

    def __post_init__(self):
        self.index = {c: i for i, c in enumerate(self.candidates)}

    def __len__(self) -> int:
        return len(self.candidates)

    def __getitem__(self, i: int) -> str:
        return self.candidates[i]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for c in self.candidates:
                f.write(c + "\n")

    @classmethod
    def loadf(cls, path) -> "CandidateSet":
        with open(path, encoding="utf-8") as f:
            return cls([line.rstrip("\n") for line in f if line.strip()])


def build_candidates(corpora: list[list[Dialog]]) -> CandidateSet:
    """Union of bot utterances and api calls over every supplied corpus."""
    seen = set()
    for dialogs in corpora:
        for d in dialogs:
            for t in d.turns:
                if t.speaker is Speaker.BOT:
                    seen.add(t.text)
    return CandidateSet(sorted(seen))


# ---------------------------------------------------------------------------
# vocabulary


class Vocabulary:
    """Token -> index bijection over corpus tokens plus reserved features.

    Reserved block: 7 entity-type tokens, n_time_tokens positional tokens
    (1000 by default) and 2 speaker tokens; numeric oracles shrink
    n_time_tokens to keep finite-difference sweeps cheap.
    """

    def __init__(self, corpus_tokens: list[str], use_bigrams: bool = False,
                 n_time_tokens: int = N_TIME_TOKENS):
        self.use_bigrams = use_bigrams
        self.n_time_tokens = n_time_tokens
        reserved = self.reserved_tokens(n_time_tokens)
        overlap = set(corpus_tokens) & set(reserved)
        if overlap:
            raise DataError(f"corpus tokens collide with reserved tokens: {sorted(overlap)[:5]}")
        self.tokens = list(corpus_tokens) + reserved
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise DataError("duplicate tokens in vocabulary")

    @staticmethod
    def reserved_tokens(n_time_tokens: int = N_TIME_TOKENS) -> list[str]:
        from .kb import EntityType

        type_tokens = [TYPE_TOKEN_PREFIX + e.value for e in EntityType]
        time_tokens = [f"{TIME_TOKEN_PREFIX}{i}" for i in range(1, n_time_tokens + 1)]
        return type_tokens + time_tokens + [SPEAKER_USER_TOKEN, SPEAKER_BOT_TOKEN]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def get(self, token: str) -> int | None:
        return self.index.get(token)

    def type_token_index(self, etype) -> int:
        return self.index[TYPE_TOKEN_PREFIX + etype.value]

    def time_token_index(self, position: int) -> int:
        return self.index[f"{TIME_TOKEN_PREFIX}{min(position, self.n_time_tokens)}"]

    def speaker_token_index(self, speaker: Speaker) -> int:
        token = SPEAKER_USER_TOKEN if speaker is Speaker.USER else SPEAKER_BOT_TOKEN
        return self.index[token]

    def sha256(self) -> str:
        h = hashlib.sha256()
        for tok, i in sorted(self.index.items(), key=lambda kv: kv[1]):
            h.update(f"{tok}\t{i}\n".encode())
        return h.hexdigest()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"# bigrams={int(self.use_bigrams)} time={self.n_time_tokens}\n")
            for tok, i in sorted(self.index.items(), key=lambda kv: kv[1]):
                f.write(f"{tok}\t{i}\n")

    @classmethod
    def loadf(cls, path) -> "Vocabulary":
        tokens = []
        use_bigrams = False
        n_time = N_TIME_TOKENS
        with open(path, encoding="utf-8") as f:
            for line in f:
                if line.startswith("#"):
                    use_bigrams = "bigrams=1" in line
                    for part in line.split():
                        if part.startswith("time="):
                            n_time = int(part[5:])
                    continue
                tok, _, idx = line.rstrip("\n").partition("\t")
                tokens.append((int(idx), tok))
        tokens.sort()
        n_reserved = len(cls.reserved_tokens(n_time))
        corpus_toks = [t for _, t in tokens][: len(tokens) - n_reserved]
        vocab = cls(corpus_toks, use_bigrams, n_time)
        if [t for _, t in tokens] != vocab.tokens:
            raise DataError(f"vocabulary file {path} is not in canonical order")
        return vocab


def dialog_stats(dialogs: list[Dialog]) -> dict:
    """Average per-dialog counts of user/bot utterances and api-result lines."""
    n = max(1, len(dialogs))
    users = bots = results = 0
    for d in dialogs:
        for t in d.turns:
            if t.kind is TurnKind.API_RESULT:
                results += 1
            elif t.speaker is Speaker.USER:
                users += 1
            else:
                bots += 1
    return {
        "n_dialogs": len(dialogs),
        "avg_user_utterances": users / n,
        "avg_bot_utterances": bots / n,
        "avg_api_results": results / n,
        "avg_utterances": (users + bots + results) / n,
    }


def build_vocab(corpora: list[list[Dialog]], use_bigrams: bool = False) -> Vocabulary:
    """Vocabulary over every turn of the supplied corpora (typically the
    training splits); reserved feature tokens are appended at the end."""
    unigrams: set[str] = set()
    bigram_set: set[str] = set()
    for d in itertools.chain.from_iterable(corpora):
        for t in d.turns:
            toks = tokenize(t.text)
            unigrams.update(toks)
            if use_bigrams:
                bigram_set.update(bigrams(toks))
    corpus_tokens = sorted(unigrams) + sorted(bigram_set)
    return Vocabulary(corpus_tokens, use_bigrams)
