"""Dialog simulation for booking tasks 1-5 plus the rule-based oracle bot.

The generator scripts only the user side of each conversation: every bot
turn is produced by `oracle_bot`, the same deterministic policy that later
serves as the rule-based baseline.  Replay identity is therefore structural,
not a lucky property of training data.

Task flows (one line in the serialized file = one user/bot exchange):

  T1  greet, opening with 0-4 known fields, slot questions in fixed order,
      api_call; half the dialogs close with a thank-you exchange.
  T2  T1 prefix, then 1-4 updates (bot confirms after each), updated api_call.
  T3  T1-style opening, api_call with >= 3 matching restaurants, result
      facts, options proposed by decreasing rating until accepted.
  T4  direct booking of a sampled restaurant, its 7 facts, then phone /
      address / both questions answered from the facts.
  T5  all of the above concatenated, update phase with probability 1/2,
      api_call constrained to >= 1 option.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .errors import GenerationError, OracleError
from .kb import (
    PARTY_SIZES,
    PARTY_WORDS,
    PRICES,
    WORD_TO_PARTY,
    ApiQuery,
    EntityType,
    Fact,
    KnowledgeBase,
    entity_type_of,
)

SILENCE = "<silence>"

# slot-question order is fixed so the bot side stays predictable
FIELDS = ("cuisine", "location", "party_size", "price")

TASKS = (1, 2, 3, 4, 5)


class Speaker(enum.Enum):
    USER = "user"
    BOT = "bot"


class TurnKind(enum.Enum):
    UTTERANCE = "utterance"
    API_CALL = "api_call"
    API_RESULT = "api_result"


@dataclass(frozen=True)
class Turn:
    speaker: Speaker
    kind: TurnKind
    text: str


def user_turn(text: str) -> Turn:
    return Turn(Speaker.USER, TurnKind.UTTERANCE, text)


def bot_turn(text: str) -> Turn:
    kind = TurnKind.API_CALL if text.startswith("api_call ") else TurnKind.UTTERANCE
    return Turn(Speaker.BOT, kind, text)


def result_turn(fact: Fact) -> Turn:
    return Turn(Speaker.USER, TurnKind.API_RESULT, fact.render())


@dataclass
class Dialog:
    task_id: int | None
    turns: list[Turn]
    request_signature: str | None = None

    def bot_turns(self) -> list[Turn]:
        return [t for t in self.turns if t.speaker is Speaker.BOT]


# ---------------------------------------------------------------------------
# surface patterns


@dataclass
class PatternSet:
    """User and bot surface templates, loaded from the versioned asset."""

    user_patterns: dict[str, list[str]]
    bot_patterns: dict[str, str]

    @property
    def n_user_templates(self) -> int:
        return sum(len(v) for v in self.user_patterns.values())

    @property
    def n_bot_templates(self) -> int:
        return len(self.bot_patterns)

    def bot(self, intent: str, **slots) -> str:
        return self.bot_patterns[intent].format(**slots)

    def user(self, intent: str, idx: int, **slots) -> str:
        templates = self.user_patterns[intent]
        return templates[idx % len(templates)].format(**slots)

    def pick_user(self, intent: str, rng, **slots) -> str:
        idx = int(rng.integers(0, len(self.user_patterns[intent])))
        return self.user(intent, idx, **slots)

    @classmethod
    def parse(cls, text: str) -> "PatternSet":
        user: dict[str, list[str]] = {}
        bot: dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            try:
                intent, template = line.split("\t", 1)
            except ValueError:
                raise ValueError(f"patterns line {lineno}: expected intent<TAB>template")
            if intent.startswith("user_"):
                user.setdefault(intent, []).append(template)
            elif intent.startswith("bot_"):
                if intent in bot:
                    raise ValueError(f"patterns line {lineno}: bot intent {intent} repeated")
                bot[intent] = template
            else:
                raise ValueError(f"patterns line {lineno}: bad intent {intent!r}")
        return cls(user, bot)

    @classmethod
    def load(cls, path=None) -> "PatternSet":
        if path is not None:
            with open(path, encoding="utf-8") as f:
                return cls.parse(f.read())
        text = resources.files("restobench.data").joinpath("patterns.txt").read_text("utf-8")
        return cls.parse(text)


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class Scenario:
    """Behavioral script of one dialog; the surface templates are drawn
    separately at rollout time (except where noted)."""

    task: int
    cuisine: str
    location: str
    price: str
    party_size: int
    revealed: tuple[str, ...] = ()
    updates: tuple[tuple[str, object], ...] = ()
    accept_index: int | None = None
    ask: str | None = None
    restaurant: str | None = None
    closing: bool = False
    # template pins, used by task 4 to widen its scenario space
    greet_t: int | None = None
    ask_t: int | None = None

    def value(self, field_name: str):
        return getattr(self, field_name)

    def final_request(self) -> ApiQuery:
        state = {f: self.value(f) for f in FIELDS}
        for fname, val in self.updates:
            state[fname] = val
        return ApiQuery(state["cuisine"], state["location"], state["price"], state["party_size"])

    def signature(self) -> str:
        payload = {
            "task": self.task,
            "request": [self.cuisine, self.location, self.price, self.party_size],
            "revealed": sorted(self.revealed),
            "updates": [[f, v] for f, v in self.updates],
            "accept": self.accept_index,
            "ask": self.ask,
            "restaurant": self.restaurant,
            "closing": self.closing,
            "greet_t": self.greet_t,
            "ask_t": self.ask_t,
        }
        return json.dumps(payload, separators=(",", ":"))


def _field_pool(kb: KnowledgeBase, field_name: str) -> list:
    if field_name == "cuisine":
        return kb.cuisines
    if field_name == "location":
        return kb.locations
    if field_name == "price":
        return list(PRICES)
    return list(PARTY_SIZES)


def _sample_request(rng, kb: KnowledgeBase) -> dict:
    return {f: _field_pool(kb, f)[int(rng.integers(0, len(_field_pool(kb, f))))] for f in FIELDS}


def _sample_revealed(rng) -> tuple[str, ...]:
    k = int(rng.integers(0, 5))
    idx = sorted(rng.choice(len(FIELDS), size=k, replace=False).tolist())
    return tuple(FIELDS[i] for i in idx)


def _sample_updates(rng, kb: KnowledgeBase, request: dict) -> tuple:
    state = dict(request)
    n_updates = int(rng.integers(1, 5))
    updates = []
    for _ in range(n_updates):
        fname = FIELDS[int(rng.integers(0, len(FIELDS)))]
        pool = [v for v in _field_pool(kb, fname) if v != state[fname]]
        val = pool[int(rng.integers(0, len(pool)))]
        state[fname] = val
        updates.append((fname, val))
    return tuple(updates)


def _sample_accept_index(rng, n_options: int) -> int:
    # each non-final proposal accepted with probability 1/4
    for j in range(1, n_options):
        if rng.random() < 0.25:
            return j
    return n_options


def _sample_ask(rng) -> str:
    r = rng.random()
    if r < 0.25:
        return "phone"
    if r < 0.5:
        return "address"
    return "both"


def _n_matches(kb: KnowledgeBase, req: ApiQuery) -> int:
    return len(kb.query(req)) // 7


def sample_scenario(task: int, kb: KnowledgeBase, rng) -> Scenario:
    """Draw one scenario for `task`; may consume several rng draws while
    rejecting requests that fail the task's option-count constraint."""
    if task == 1:
        req = _sample_request(rng, kb)
        return Scenario(task=1, revealed=_sample_revealed(rng), closing=bool(rng.random() < 0.5), **req)
    if task == 2:
        req = _sample_request(rng, kb)
        return Scenario(
            task=2, revealed=_sample_revealed(rng), updates=_sample_updates(rng, kb, req), **req
        )
    if task == 3:
        for _ in range(20_000):
            req = _sample_request(rng, kb)
            n = _n_matches(kb, ApiQuery(req["cuisine"], req["location"], req["price"], req["party_size"]))
            if n >= 3:
                break
        else:
            raise GenerationError("no request with >= 3 matching restaurants in this KB")
        return Scenario(
            task=3,
            revealed=_sample_revealed(rng),
            accept_index=_sample_accept_index(rng, n),
            **req,
        )
    if task == 4:
        names = kb.names_sorted
        name = names[int(rng.integers(0, len(names)))]
        return Scenario(
            task=4,
            cuisine=kb.by_name[name].cuisine,
            location=kb.by_name[name].location,
            price=kb.by_name[name].price,
            party_size=kb.by_name[name].party_size,
            restaurant=name,
            ask=_sample_ask(rng),
            greet_t=int(rng.integers(0, 2)),
            ask_t=int(rng.integers(0, 2)),
        )
    if task == 5:
        # the full flow always passes through an update round, so every
        # phase of tasks 1-4 appears in every dialog
        for _ in range(20_000):
            req = _sample_request(rng, kb)
            updates = _sample_updates(rng, kb, req)
            sc = Scenario(task=5, revealed=_sample_revealed(rng), updates=updates, **req)
            n = _n_matches(kb, sc.final_request())
            if n >= 1:
                break
        else:
            raise GenerationError("no request with >= 1 matching restaurant in this KB")
        return replace(sc, accept_index=_sample_accept_index(rng, n), ask=_sample_ask(rng))
    raise ValueError(f"unknown task {task}")


# ---------------------------------------------------------------------------
# oracle bot

_ASK_ORDER_INTENTS = {
    "cuisine": "bot_ask_cuisine",
    "location": "bot_ask_location",
    "party_size": "bot_ask_party_size",
    "price": "bot_ask_price",
}


def _entity_fields(text: str, kbs: list[KnowledgeBase]) -> dict:
    """Request fields mentioned in a raw utterance, keyed by field name."""
    found: dict[str, object] = {}
    for tok in text.split():
        etype = entity_type_of(kbs, tok)
        if etype is EntityType.CUISINE:
            found["cuisine"] = tok
        elif etype is EntityType.LOCATION:
            found["location"] = tok
        elif etype is EntityType.PRICE:
            found["price"] = tok
        elif etype is EntityType.PARTY_SIZE:
            found["party_size"] = WORD_TO_PARTY[tok]
    return found


def _restaurant_in(text: str, kbs: list[KnowledgeBase]) -> str | None:
    for tok in text.split():
        for kb in kbs:
            if tok in kb.by_name:
                return tok
    return None


def oracle_bot(history: list[Turn], kbs: list[KnowledgeBase], patterns: PatternSet) -> str:
    """Next bot utterance / api_call for a generated-dialog prefix.

    Pure function of the history and the KB entity index; raises OracleError
    on any history shape the simulator cannot produce.
    """
    if not history or history[-1].speaker is not Speaker.USER:
        raise OracleError("history must end with a user block")
    if history[-1].kind is not TurnKind.UTTERANCE:
        raise OracleError("user block must end with an utterance")

    pat = patterns.bot_patterns
    t_greet_reply = pat["bot_greet_reply"]
    t_ack = pat["bot_ack"]
    t_pre_call = pat["bot_pre_call"]
    t_update_ack = pat["bot_update_ack"]
    t_results_intro = pat["bot_results_intro"]
    t_reject_ack = pat["bot_reject_ack"]
    t_book_ack = pat["bot_book_ack"]
    t_confirm = pat["bot_confirm_done"]
    t_book_direct_ack = pat["bot_book_direct_ack"]
    t_anything_else = pat["bot_anything_else"]
    t_welcome = pat["bot_youre_welcome"]
    t_glad = pat["bot_glad_helped"]
    propose_prefix = pat["bot_propose"].split("{", 1)[0]
    answer_prefix = pat["bot_answer_phone"].split("{", 1)[0]

    greet_texts = set(patterns.user_patterns["user_greet"])
    reject_texts = set(patterns.user_patterns["user_reject_option"])
    accept_texts = set(patterns.user_patterns["user_accept_option"])
    t_thanks = patterns.user_patterns["user_thanks"][0]
    t_final_no = patterns.user_patterns["user_final_no"][0]
    t_done = patterns.user_patterns["user_update_done"][0]

    # --- replay the history into a flat state ---
    greeted = False
    acked = False  # bot acknowledged the opening (plain or direct-booking)
    request: dict[str, object | None] = {f: None for f in FIELDS}
    api_calls = 0
    pending_call = False
    facts: list[Fact] = []
    results_intro_done = False
    proposed: list[str] = []
    accepted: str | None = None
    book_acked = False
    confirm_said = False
    book_restaurant: str | None = None
    want_phone = want_address = False
    answered_phone = answered_address = False

    for turn in history:
        text = turn.text
        if turn.speaker is Speaker.BOT:
            if text == t_greet_reply:
                greeted = True
            elif text in (t_ack, t_book_direct_ack):
                acked = True
            elif text == t_pre_call:
                pending_call = True
            elif text.startswith("api_call "):
                api_calls += 1
                pending_call = False
                facts = []
                results_intro_done = False
                proposed = []
                accepted = None
            elif text == t_results_intro:
                results_intro_done = True
            elif text.startswith(propose_prefix):
                proposed.append(text[len(propose_prefix):])
            elif text.startswith(answer_prefix):
                value = text[len(answer_prefix):]
                if value.endswith("_phone"):
                    answered_phone = True
                elif value.endswith("_address"):
                    answered_address = True
            elif text == t_book_ack:
                book_acked = True
            elif text == t_confirm:
                confirm_said = True
            elif text in (t_update_ack, t_reject_ack, t_anything_else, t_welcome, t_glad):
                pass
            elif text in (
                pat["bot_ask_cuisine"],
                pat["bot_ask_location"],
                pat["bot_ask_party_size"],
                pat["bot_ask_price"],
            ):
                pass
            else:
                raise OracleError(f"unrecognized bot turn {text!r}")
            continue
        if turn.kind is TurnKind.API_RESULT:
            parts = text.split(" ")
            if len(parts) != 3:
                raise OracleError(f"malformed api_result line {text!r}")
            facts.append(Fact(*parts))
            continue
        # user utterance
        if text == SILENCE or text in (t_thanks, t_final_no, t_done):
            continue
        if text in greet_texts and not acked:
            continue
        if text in reject_texts:
            continue
        if text in accept_texts:
            if not proposed:
                raise OracleError("acceptance before any proposal")
            accepted = proposed[-1]
            continue
        toks = set(text.split())
        if "phone" in toks or "address" in toks:
            want_phone = "phone" in toks
            want_address = "address" in toks
            answered_phone = answered_address = False
            continue
        name = _restaurant_in(text, kbs)
        if name is not None and not acked:
            book_restaurant = name
            continue
        request.update(_entity_fields(text, kbs))

    # --- decide the next bot action ---
    def fact_value(subject: str, relation: str) -> str:
        for f in facts:
            if f.subject == subject and f.relation == relation:
                return f.value
        raise OracleError(f"no {relation} fact for {subject!r} in history")

    def answer_target() -> str:
        target = accepted if accepted is not None else book_restaurant
        if target is None:
            raise OracleError("extra-information request without a booked option")
        return target

    u = history[-1].text

    if u == SILENCE:
        if pending_call:
            if any(request[f] is None for f in FIELDS):
                missing = [f for f in FIELDS if request[f] is None]
                raise OracleError(f"api call due but fields missing: {missing}")
            return ApiQuery(
                request["cuisine"], request["location"], request["price"], request["party_size"]
            ).render()
        if want_phone and want_address and answered_phone and not answered_address:
            return pat["bot_answer_address"].format(address=fact_value(answer_target(), "r_address"))
        if facts and api_calls > 0:
            if not results_intro_done:
                return t_results_intro
            if accepted is None:
                ranked = sorted(
                    {f.subject for f in facts if f.relation == "r_rating"} - set(proposed),
                    key=lambda n: (-int(fact_value(n, "r_rating")), n),
                )
                if not ranked:
                    raise OracleError("all options proposed but none accepted")
                return pat["bot_propose"].format(restaurant=ranked[0])
            if book_acked and not confirm_said:
                return t_confirm
            raise OracleError("silence after completed booking")
        if acked and api_calls == 0:
            missing = [f for f in FIELDS if request[f] is None]
            if missing:
                return pat[_ASK_ORDER_INTENTS[missing[0]]]
            return t_pre_call
        raise OracleError("silence with no applicable rule")

    if u in greet_texts and not greeted:
        return t_greet_reply
    if u == t_thanks:
        if accepted is not None:
            return t_anything_else
        if book_restaurant is not None and api_calls == 0:
            return t_glad
        return t_welcome
    if u == t_final_no:
        return t_welcome
    if u == t_done:
        if api_calls == 0:
            raise OracleError("update-done before any api call")
        return t_pre_call
    if u in reject_texts:
        return t_reject_ack
    if u in accept_texts:
        return t_book_ack

    toks = set(u.split())
    if "phone" in toks or "address" in toks:
        target = answer_target()
        if "phone" in toks:
            return pat["bot_answer_phone"].format(phone=fact_value(target, "r_phone"))
        return pat["bot_answer_address"].format(address=fact_value(target, "r_address"))

    if not acked:
        # first post-greeting utterance: a direct booking or a table request
        if _restaurant_in(u, kbs) is not None:
            return t_book_direct_ack
        return t_ack
    if _entity_fields(u, kbs):
        if api_calls > 0:
            return t_update_ack
        missing = [f for f in FIELDS if request[f] is None]
        if missing:
            return pat[_ASK_ORDER_INTENTS[missing[0]]]
        return t_pre_call

    raise OracleError(f"no rule fired for user turn {u!r}")


# ---------------------------------------------------------------------------
# user-side rollout

_ANSWER_INTENTS = {
    "bot_ask_cuisine": ("cuisine", "user_answer_cuisine"),
    "bot_ask_location": ("location", "user_answer_location"),
    "bot_ask_party_size": ("party_size", "user_answer_party_size"),
    "bot_ask_price": ("price", "user_answer_price"),
}


def _render_value(field_name: str, value) -> str:
    return PARTY_WORDS[value] if field_name == "party_size" else str(value)


def _opening_text(sc: Scenario, patterns: PatternSet, rng) -> str:
    frags = []
    for f in FIELDS:
        if f in sc.revealed:
            frags.append(
                patterns.pick_user(f"user_slot_{f}", rng, **{f: _render_value(f, sc.value(f))})
            )
    base = patterns.pick_user("user_opening", rng, slots=" ".join(frags))
    return base.strip()


def _user_block(
    task: int, sc: Scenario, turns: list[Turn], kb: KnowledgeBase, patterns: PatternSet, rng
) -> list[Turn] | None:
    """User-side turns following the current history; None ends the dialog."""
    pat = patterns.bot_patterns
    if not turns:
        idx = sc.greet_t if sc.greet_t is not None else int(rng.integers(0, 2))
        return [user_turn(patterns.user("user_greet", idx))]

    last = turns[-1].text
    propose_prefix = pat["bot_propose"].split("{", 1)[0]
    updates_done = sum(1 for t in turns if t.speaker is Speaker.BOT and t.text == pat["bot_update_ack"])
    n_proposed = sum(
        1 for t in turns if t.speaker is Speaker.BOT and t.text.startswith(propose_prefix)
    )

    def ask_block() -> list[Turn]:
        idx = sc.ask_t if sc.ask_t is not None else int(rng.integers(0, 2))
        return [user_turn(patterns.user(f"user_ask_{sc.ask}", idx))]

    def facts_block() -> list[Turn]:
        facts = kb.query(sc.final_request())
        return [result_turn(f) for f in facts]

    if last == pat["bot_greet_reply"]:
        if task == 4:
            return [user_turn(patterns.pick_user("user_book_direct", rng, restaurant=sc.restaurant))]
        return [user_turn(_opening_text(sc, patterns, rng))]
    if last == pat["bot_ack"] or last == pat["bot_pre_call"] or last == pat["bot_reject_ack"]:
        return [user_turn(SILENCE)]
    if last in (
        pat["bot_ask_cuisine"],
        pat["bot_ask_location"],
        pat["bot_ask_party_size"],
        pat["bot_ask_price"],
    ):
        intent_key = next(k for k, v in pat.items() if v == last)
        field_name, answer_intent = _ANSWER_INTENTS[intent_key]
        value = _render_value(field_name, sc.value(field_name))
        return [user_turn(patterns.pick_user(answer_intent, rng, **{field_name: value}))]
    if turns[-1].kind is TurnKind.API_CALL:
        if updates_done < len(sc.updates):
            fname, val = sc.updates[updates_done]
            return [
                user_turn(
                    patterns.pick_user(f"user_update_{fname}", rng, **{fname: _render_value(fname, val)})
                )
            ]
        if task in (3, 5):
            return facts_block() + [user_turn(SILENCE)]
        if task == 1 and sc.closing:
            return [user_turn(patterns.user("user_thanks", 0))]
        return None
    if last == pat["bot_update_ack"]:
        if updates_done < len(sc.updates):
            fname, val = sc.updates[updates_done]
            return [
                user_turn(
                    patterns.pick_user(f"user_update_{fname}", rng, **{fname: _render_value(fname, val)})
                )
            ]
        return [user_turn(patterns.user("user_update_done", 0))]
    if last == pat["bot_results_intro"]:
        return [user_turn(SILENCE)]
    if last.startswith(propose_prefix):
        if n_proposed == sc.accept_index:
            return [user_turn(patterns.pick_user("user_accept_option", rng))]
        return [user_turn(patterns.pick_user("user_reject_option", rng))]
    if last == pat["bot_book_ack"]:
        if task == 5:
            return ask_block()
        return [user_turn(SILENCE)]
    if last == pat["bot_book_direct_ack"]:
        restaurant = kb.by_name[sc.restaurant]
        return [result_turn(f) for f in restaurant.facts()] + ask_block()
    if last.startswith(pat["bot_answer_phone"].split("{", 1)[0]):
        if last.endswith("_phone") and sc.ask == "both":
            return [user_turn(SILENCE)]
        return [user_turn(patterns.user("user_thanks", 0))]
    if last == pat["bot_anything_else"]:
        return [user_turn(patterns.user("user_final_no", 0))]
    if last in (pat["bot_confirm_done"], pat["bot_youre_welcome"], pat["bot_glad_helped"]):
        return None
    raise GenerationError(f"user policy stuck after bot turn {last!r}")


def generate_dialog(
    task: int,
    sc: Scenario,
    kb: KnowledgeBase,
    kbs: list[KnowledgeBase],
    patterns: PatternSet,
    rng,
) -> Dialog:
    turns: list[Turn] = []
    for _ in range(400):
        block = _user_block(task, sc, turns, kb, patterns, rng)
        if block is None:
            return Dialog(task, turns, sc.signature())
        turns.extend(block)
        turns.append(bot_turn(oracle_bot(turns, kbs, patterns)))
    raise GenerationError(f"dialog for task {task} did not terminate")


def _gen_one(task: int, kb: KnowledgeBase, kbs, patterns: PatternSet, rng) -> Dialog:
    return generate_dialog(task, sample_scenario(task, kb, rng), kb, kbs, patterns, rng)


def gen_task1(rng, kb: KnowledgeBase, patterns: PatternSet) -> Dialog:
    return _gen_one(1, kb, [kb], patterns, rng)


def gen_task2(rng, kb: KnowledgeBase, patterns: PatternSet) -> Dialog:
    return _gen_one(2, kb, [kb], patterns, rng)


def gen_task3(rng, kb: KnowledgeBase, patterns: PatternSet) -> Dialog:
    return _gen_one(3, kb, [kb], patterns, rng)


def gen_task4(rng, kb: KnowledgeBase, patterns: PatternSet) -> Dialog:
    return _gen_one(4, kb, [kb], patterns, rng)


def gen_task5(rng, kb: KnowledgeBase, patterns: PatternSet) -> Dialog:
    return _gen_one(5, kb, [kb], patterns, rng)


DEFAULT_SIZES = {"train": 1000, "val": 1000, "test": 1000}


def _gen_split(task, kb, kbs, n, patterns, rng, seen: set[str]) -> list[Dialog]:
    dialogs: list[Dialog] = []
    attempts = 0
    max_attempts = 60 * n + 5_000
    while len(dialogs) < n:
        attempts += 1
        if attempts > max_attempts:
            raise GenerationError(
                f"task {task}: only {len(dialogs)} of {n} distinct scenarios "
                f"after {attempts} draws"
            )
        sc = sample_scenario(task, kb, rng)
        sig = sc.signature()
        if sig in seen:
            continue
        seen.add(sig)
        dialogs.append(generate_dialog(task, sc, kb, kbs, patterns, rng))
    return dialogs


def gen_dataset(
    task: int,
    kb_plain: KnowledgeBase,
    kb_oov: KnowledgeBase,
    sizes: dict[str, int] | None = None,
    seed: int = 0,
    patterns: PatternSet | None = None,
) -> dict[str, list[Dialog]]:
    """Generate train/val/test from the plain KB plus an OOV test split.

    No scenario signature is shared between any two splits.
    """
    sizes = dict(DEFAULT_SIZES if sizes is None else sizes)
    sizes.setdefault("test_oov", sizes["test"])
    patterns = patterns or PatternSet.load()
    rng = np.random.default_rng(seed)
    kbs = [kb_plain, kb_oov]
    seen: set[str] = set()
    out = {}
    for split in ("train", "val", "test"):
        out[split] = _gen_split(task, kb_plain, kbs, sizes[split], patterns, rng, seen)
    out["test_oov"] = _gen_split(task, kb_oov, kbs, sizes["test_oov"], patterns, rng, seen)
    return out
