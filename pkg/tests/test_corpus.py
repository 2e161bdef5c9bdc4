import numpy as np
import pytest

from restobench.corpus import (
    CandidateSet,
    Vocabulary,
    bigrams,
    build_candidates,
    build_vocab,
    corpus_examples,
    dialog_stats,
    read_dialogs,
    to_examples,
    tokenize,
    write_dialogs,
)
from restobench.errors import DataError
from restobench.kb import Fact
from restobench.simulator import (
    Dialog,
    Scenario,
    Speaker,
    TurnKind,
    bot_turn,
    generate_dialog,
    result_turn,
    user_turn,
)


def test_tokenizer_splits_apostrophes_and_punctuation():
    assert tokenize("i'm on it") == ["i", "'m", "on", "it"]
    assert tokenize("what do you think of this option: resto_1") == [
        "what", "do", "you", "think", "of", "this", "option", ":", "resto_1"]
    assert tokenize("<silence>") == ["<silence>"]
    assert tokenize("Let's GO") == ["let", "'s", "go"]
    assert tokenize("") == []


def test_bigrams_are_adjacent_pairs():
    assert bigrams(["a", "b", "c"]) == ["a b", "b c"]
    assert bigrams(["a"]) == []


def test_file_roundtrip_identity(mini_data, tmp_path):
    for task, splits in mini_data.items():
        path = tmp_path / f"t{task}.txt"
        write_dialogs(path, splits["train"])
        loaded = read_dialogs(path, task_id=task)
        assert len(loaded) == len(splits["train"])
        for a, b in zip(loaded, splits["train"]):
            assert a.turns == b.turns
        # write(read(x)) is byte-identical too
        path2 = tmp_path / f"t{task}_again.txt"
        write_dialogs(path2, loaded)
        assert path.read_bytes() == path2.read_bytes()


def test_task3_dialogs_serialize_result_facts_as_tabless_lines(mini_data, tmp_path):
    path = tmp_path / "t3.txt"
    write_dialogs(path, mini_data[3]["train"][:5])
    tabless = 0
    for line in path.read_text().splitlines():
        if line.strip() and "\t" not in line:
            head, _, rest = line.partition(" ")
            assert head.isdigit()
            assert len(rest.split(" ")) == 3
            tabless += 1
    assert tabless >= 3 * 7  # at least three restaurants' facts in 5 dialogs


def test_line_numbers_restart_each_dialog(mini_data, tmp_path):
    path = tmp_path / "t1.txt"
    write_dialogs(path, mini_data[1]["train"][:3])
    blocks = path.read_text().strip().split("\n\n")
    assert len(blocks) == 3
    for block in blocks:
        assert block.splitlines()[0].startswith("1 ")


def test_malformed_numbering_is_a_parse_error(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("1 hi\thello\n3 yes\tno\n\n")
    with pytest.raises(DataError) as err:
        read_dialogs(path)
    assert ":2" in str(err.value)


def test_reader_accepts_external_task6_style_file(tmp_path):
    # shape of a converted DSTC2-style dialog: 3-field api call, ratings added
    lines = [
        "1 <silence>\thello what can i help you with today",
        "2 im looking for a cheap restaurant in the west part of town\tapi_call R_cuisine west cheap",
        "3 resto_one R_post_code resto_one_post_code",
        "4 resto_one R_cuisine british",
        "5 resto_one R_rating 9",
        "6 <silence>\tresto_one is a nice place in the west of town",
        "",
    ]
    path = tmp_path / "task6.txt"
    path.write_text("\n".join(lines))
    dialogs = read_dialogs(path, task_id=6)
    assert len(dialogs) == 1
    d = dialogs[0]
    assert d.task_id == 6
    kinds = [t.kind for t in d.turns]
    assert kinds.count(TurnKind.API_RESULT) == 3
    assert kinds.count(TurnKind.API_CALL) == 1
    examples = to_examples(d)
    assert len(examples) == 3


def test_to_examples_one_per_bot_turn(mini_data):
    for splits in mini_data.values():
        for d in splits["train"]:
            examples = to_examples(d)
            n_bot = sum(1 for t in d.turns if t.speaker is Speaker.BOT)
            assert len(examples) == n_bot


def test_to_examples_gold_and_input(kb_plain, patterns):
    sc = Scenario(task=1, cuisine="british", location="london", price="expensive",
                  party_size=6, revealed=("cuisine", "location", "party_size"))
    d = generate_dialog(1, sc, kb_plain, [kb_plain], patterns, np.random.default_rng(0))
    examples = to_examples(d)
    api_examples = [e for e in examples if e.gold.startswith("api_call ")]
    assert len(api_examples) == 1
    assert api_examples[0].gold == "api_call british london six expensive"
    assert api_examples[0].input_utterance == "<silence>"


def test_histories_are_strictly_nested_prefixes(mini_data):
    for d in mini_data[5]["train"][:10]:
        examples = to_examples(d)
        for a, b in zip(examples, examples[1:]):
            assert len(a.history) < len(b.history)
            assert tuple(b.history)[: len(a.history)] == tuple(a.history)


def test_api_results_stay_in_history_not_input(mini_data):
    for d in mini_data[3]["train"][:10]:
        for e in to_examples(d):
            assert all(
                t.kind is not TurnKind.API_RESULT or t.speaker is Speaker.USER
                for t in e.history
            )
            assert e.input_utterance != ""


def test_candidate_set_closure_and_dedup(mini_data, mini_candidates):
    seen = set()
    for splits in mini_data.values():
        for dialogs in splits.values():
            for e in corpus_examples(dialogs):
                assert e.gold in mini_candidates.index
                seen.add(e.gold)
    assert len(mini_candidates.candidates) == len(set(mini_candidates.candidates))
    assert mini_candidates.candidates == sorted(mini_candidates.candidates)
    assert seen == set(mini_candidates.candidates)


def test_candidate_file_roundtrip(tmp_path, mini_candidates):
    path = tmp_path / "cands.txt"
    mini_candidates.save(path)
    loaded = CandidateSet.loadf(path)
    assert loaded.candidates == mini_candidates.candidates


def test_vocab_reserved_tokens_present(mini_vocab):
    assert "@match_cuisine" in mini_vocab.index
    assert "@time_1" in mini_vocab.index
    assert "@time_1000" in mini_vocab.index
    assert "@speaker_user" in mini_vocab.index
    assert "@speaker_bot" in mini_vocab.index
    assert len(Vocabulary.reserved_tokens()) == 7 + 1000 + 2


def test_vocab_bijection(mini_vocab):
    assert len(mini_vocab.index) == len(mini_vocab.tokens)
    for tok, i in mini_vocab.index.items():
        assert mini_vocab.tokens[i] == tok


def test_vocab_bigram_flag_grows_vocab(mini_data):
    base = build_vocab([mini_data[1]["train"]])
    big = build_vocab([mini_data[1]["train"]], use_bigrams=True)
    assert len(big) > len(base)


def test_vocab_file_roundtrip(tmp_path, mini_vocab):
    path = tmp_path / "vocab.txt"
    mini_vocab.save(path)
    loaded = Vocabulary.loadf(path)
    assert loaded.tokens == mini_vocab.tokens
    assert loaded.sha256() == mini_vocab.sha256()


def test_dialog_stats_counts(kb_plain):
    d = Dialog(1, [
        user_turn("hi"), bot_turn("hello what can i help you with today"),
        result_turn(Fact("r", "r_rating", "3")),
        user_turn("<silence>"), bot_turn("api_call a b two c"),
    ])
    st = dialog_stats([d])
    assert st["avg_user_utterances"] == 2
    assert st["avg_bot_utterances"] == 2
    assert st["avg_api_results"] == 1
    assert st["avg_utterances"] == 5
