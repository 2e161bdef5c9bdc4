"""Command line: generate / train / eval / sweep / chat / report.

Every run resolves a flat key=value config (defaults < config file <
RESTOBENCH_* env vars < flags) and echoes the result into its artifacts.
Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import embeddings as emb_mod
from . import memnn as mem_mod
from .checkpoints import load_checkpoint
from .corpus import (
    CandidateSet,
    Vocabulary,
    build_candidates,
    build_vocab,
    corpus_examples,
    dialog_stats,
    read_dialogs,
    write_dialogs,
)
from .errors import DataError, NumericError, OracleError
from .evaluation import (
    EMBEDDINGS_TASK_HP,
    MEMNN_TASK_HP,
    EMBEDDINGS_DEFAULT_GRID,
    MEMNN_DEFAULT_GRID,
    CSV_FIELDS,
    EvalReport,
    RuleBasedRanker,
    config_fingerprint,
    evaluate,
    read_csv,
    sweep,
    to_markdown,
    write_csv,
)
from .features import FeatureConfig
from .kb import PARTY_WORDS, WORD_TO_PARTY, ApiQuery, KnowledgeBase, default_kb_pair, read_kb, write_kb
from .retrieval import NearestNeighbor, TfidfMatcher
from .simulator import (
    SILENCE,
    PatternSet,
    Speaker,
    TASKS,
    bot_turn,
    gen_dataset,
    oracle_bot,
    result_turn,
    user_turn,
)

ENV_PREFIX = "RESTOBENCH_"

_BOOL_KEYS = {
    "use_history", "match_type", "match_type_no_history", "bigrams", "tied",
    "full_softmax", "force", "time_from_end",
}
_INT_KEYS = {"task", "dim", "hops", "negatives", "epochs", "seed", "train_size",
             "val_size", "test_size", "top_k"}
_FLOAT_KEYS = {"lr", "margin"}
_STR_KEYS = {"data", "out", "model", "checkpoint", "split", "grid", "curve",
             "patterns"}
KNOWN_KEYS = _BOOL_KEYS | _INT_KEYS | _FLOAT_KEYS | _STR_KEYS


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _coerce(key: str, value: str):
    if key in _BOOL_KEYS:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise DataError(f"config key {key}: bad boolean {value!r}")
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    return value


def resolve_config(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < environment < explicit flags."""
    resolved = dict(defaults)
    path = getattr(args, "config", None)
    if path:
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise DataError(f"{path}:{lineno}: expected key=value")
                key, _, value = line.partition("=")
                key = key.strip()
                if key not in KNOWN_KEYS:
                    raise DataError(f"{path}:{lineno}: unknown config key {key!r}")
                resolved[key] = _coerce(key, value.strip())
    for env_key, value in sorted(os.environ.items()):
        if not env_key.startswith(ENV_PREFIX):
            continue
        key = env_key[len(ENV_PREFIX):].lower()
        if key not in KNOWN_KEYS:
            raise DataError(f"unknown config key in environment: {env_key}")
        resolved[key] = _coerce(key, value)
    for key, value in vars(args).items():
        if key in KNOWN_KEYS and value is not None:
            resolved[key] = value
    return resolved


def _feature_config(cfg: dict) -> FeatureConfig:
    return FeatureConfig(
        use_history=cfg.get("use_history", True),
        match_type=cfg.get("match_type", False) or cfg.get("match_type_no_history", False),
        match_type_no_history=cfg.get("match_type_no_history", False),
        bigrams=cfg.get("bigrams", False),
        time_from_end=cfg.get("time_from_end", True),
    )


# ---------------------------------------------------------------------------
# data-dir layout


def _dialog_path(data: Path, task: int, split: str) -> Path:
    return data / f"task{task}_{split}.txt"


def _load_split(data: Path, task: int, split: str):
    path = _dialog_path(data, task, split)
    if not path.exists():
        raise DataError(f"missing dialog file {path}; run `restobench generate` first")
    return read_dialogs(path, task_id=task)


def _load_kbs(data: Path) -> list[KnowledgeBase]:
    return [read_kb(data / "kb_plain.txt"), read_kb(data / "kb_oov.txt")]


def _load_vocab(data: Path, bigrams: bool):
    if bigrams:
        dialogs = [_load_split(data, t, "train") for t in TASKS]
        return build_vocab(dialogs, use_bigrams=True)
    return Vocabulary.loadf(data / "vocab.txt")


def _load_candidates(data: Path) -> CandidateSet:
    return CandidateSet.loadf(data / "candidates.txt")


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args) -> int:
    cfg = resolve_config(args, {
        "seed": 1, "train_size": 1000, "val_size": 1000, "test_size": 1000,
        "force": False, "out": "data",
    })
    out = Path(cfg["out"])
    if out.exists() and any(out.iterdir()) and not cfg["force"]:
        raise DataError(f"output directory {out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)

    patterns = PatternSet.load(cfg.get("patterns"))
    rng = np.random.SeedSequence(cfg["seed"])
    kb_seed, *task_seeds = [int(s.generate_state(1)[0]) for s in rng.spawn(1 + len(TASKS))]
    kb_plain, kb_oov = default_kb_pair(kb_seed)
    write_kb(out / "kb_plain.txt", kb_plain)
    write_kb(out / "kb_oov.txt", kb_oov)

    sizes = {"train": cfg["train_size"], "val": cfg["val_size"], "test": cfg["test_size"]}
    all_corpora = []
    train_corpora = []
    stats: dict = {}
    for task, seed in zip(TASKS, task_seeds):
        t0 = time.monotonic()
        splits = gen_dataset(task, kb_plain, kb_oov, sizes, seed=seed, patterns=patterns)
        for split, dialogs in splits.items():
            write_dialogs(_dialog_path(out, task, split), dialogs)
            all_corpora.append(dialogs)
        train_corpora.append(splits["train"])
        stats[f"task{task}"] = {s: dialog_stats(d) for s, d in splits.items()}
        stats[f"task{task}"]["gen_time_s"] = round(time.monotonic() - t0, 2)
        print(f"task {task}: {sum(len(d) for d in splits.values())} dialogs, "
              f"avg utterances {stats[f'task{task}']['test']['avg_utterances']:.1f}")

    candidates = build_candidates(all_corpora)
    candidates.save(out / "candidates.txt")
    vocab = build_vocab(train_corpora)
    vocab.save(out / "vocab.txt")
    stats["candidate_set_size"] = len(candidates)
    stats["vocabulary_size"] = len(vocab)
    stats["config"] = cfg
    with open(out / "stats.json", "w", encoding="utf-8") as f:
        json.dump(stats, f, indent=2)
    print(f"candidates: {len(candidates)}, vocabulary: {len(vocab)}")
    print(f"wrote {out}/")
    return 0


# ---------------------------------------------------------------------------
# train


def _examples_for(data: Path, task: int, split: str):
    return corpus_examples(_load_split(data, task, split))


def cmd_train(args) -> int:
    cfg = resolve_config(args, {
        "seed": 1, "model": "memnn", "task": 1, "data": "data", "out": "model.npz",
        "epochs": None, "negatives": None, "lr": None, "dim": None, "hops": None,
        "margin": None, "use_history": None,
    })
    data = Path(cfg["data"])
    task = cfg["task"]
    fcfg = _feature_config(cfg)
    vocab = _load_vocab(data, fcfg.bigrams)
    candidates = _load_candidates(data)
    kbs = _load_kbs(data)
    train_ex = _examples_for(data, task, "train")
    val_ex = _examples_for(data, task, "val")

    def log(point):
        print(f"epoch {point['epoch']}: loss {point['train_loss']:.4f} "
              f"val {point['val_per_response']:.4f}")

    model_kind = cfg["model"]
    t0 = time.monotonic()
    if model_kind == "embeddings":
        base = dict(EMBEDDINGS_TASK_HP.get(task, EMBEDDINGS_TASK_HP[1]))
        hp = emb_mod.TrainHp(**_hp_overrides(base, cfg, ("lr", "margin", "dim", "negatives")),
                             use_history=_first(cfg.get("use_history"), base["use_history"]),
                             epochs=_first(cfg.get("epochs"), 100),
                             seed=cfg["seed"], tied=cfg.get("tied", False))
        fcfg = FeatureConfig(use_history=hp.use_history, match_type=fcfg.match_type,
                             match_type_no_history=fcfg.match_type_no_history,
                             bigrams=fcfg.bigrams)
        model, curve = emb_mod.train(train_ex, val_ex, candidates, vocab, hp, fcfg, kbs, log=log)
    elif model_kind == "memnn":
        base = dict(MEMNN_TASK_HP.get(task, MEMNN_TASK_HP[1]))
        hp = mem_mod.MemNNHp(**_hp_overrides(base, cfg, ("lr", "dim", "hops", "negatives")),
                             epochs=_first(cfg.get("epochs"), 40),
                             seed=cfg["seed"],
                             full_softmax=_first(cfg.get("full_softmax"), True))
        model, curve = mem_mod.train(train_ex, val_ex, candidates, vocab, hp, fcfg, kbs, log=log)
    else:
        raise _UsageError(f"unknown trainable model {model_kind!r}")

    model.save(cfg["out"])
    curve_path = cfg.get("curve") or (str(cfg["out"]) + ".curve.csv")
    with open(curve_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=["epoch", "train_loss", "val_per_response"])
        writer.writeheader()
        writer.writerows(curve)
    print(f"trained {model_kind} on task {task} in {time.monotonic() - t0:.1f}s; "
          f"best val {max((c['val_per_response'] for c in curve), default=0.0):.4f}")
    print(f"checkpoint: {cfg['out']} (config {config_fingerprint(cfg)})")
    return 0


def _first(*values):
    for v in values:
        if v is not None:
            return v
    return None


def _hp_overrides(base: dict, cfg: dict, keys) -> dict:
    out = {k: base[k] for k in keys if k in base}
    for k in keys:
        if cfg.get(k) is not None:
            out[k] = cfg[k]
    return out


# ---------------------------------------------------------------------------
# eval


def _build_ranker(cfg: dict, data: Path, task: int, vocab, candidates, kbs):
    model_kind = cfg.get("model")
    fcfg = _feature_config(cfg)
    if cfg.get("checkpoint"):
        meta, _ = load_checkpoint(cfg["checkpoint"])
        kind = meta["model_kind"]
        vocab = _load_vocab(data, meta.get("cfg", {}).get("bigrams", False))
        if kind == "embeddings":
            model = emb_mod.EmbeddingModel.loadf(cfg["checkpoint"], vocab)
            return f"embeddings", emb_mod.EmbeddingRanker(model, candidates, vocab, kbs), model.cfg
        if kind == "memnn":
            model = mem_mod.MemN2NModel.loadf(cfg["checkpoint"], vocab)
            return "memnn", mem_mod.MemNNRanker(model, candidates, vocab, kbs), model.cfg
        raise DataError(f"unknown checkpoint kind {kind!r}")
    if model_kind == "rule":
        return "rule", RuleBasedRanker(candidates, kbs), fcfg
    if model_kind == "tfidf":
        train_dialogs = _load_split(data, task, "train")
        return "tfidf", TfidfMatcher(train_dialogs, candidates, fcfg, kbs), fcfg
    if model_kind == "nn":
        train_ex = _examples_for(data, task, "train")
        return "nn", NearestNeighbor(train_ex, candidates), fcfg
    raise _UsageError("eval needs --checkpoint or --model {rule,tfidf,nn}")


def _variant_name(fcfg: FeatureConfig) -> str:
    bits = []
    if fcfg.match_type:
        bits.append("match_type_nohist" if fcfg.match_type_no_history else "match_type")
    if fcfg.bigrams:
        bits.append("bigrams")
    if not fcfg.use_history:
        bits.append("lastutt")
    return "+".join(bits)


def cmd_eval(args) -> int:
    cfg = resolve_config(args, {
        "data": "data", "task": 1, "split": "test", "seed": 1, "top_k": None,
    })
    if not cfg.get("checkpoint") and cfg.get("model") not in ("rule", "tfidf", "nn"):
        raise _UsageError("eval needs --checkpoint or --model {rule,tfidf,nn}")
    data = Path(cfg["data"])
    task = cfg["task"]
    vocab = None
    candidates = _load_candidates(data)
    kbs = _load_kbs(data)
    if not cfg.get("checkpoint"):
        vocab = _load_vocab(data, cfg.get("bigrams", False))
    name, ranker, fcfg = _build_ranker(cfg, data, task, vocab, candidates, kbs)

    reports = []
    for split in str(cfg["split"]).split(","):
        split = split.strip()
        examples = _examples_for(data, task, split)
        report = evaluate(
            ranker, examples, candidates, task=task, model=name, split=split,
            k=cfg.get("top_k"), seed=cfg.get("seed"), variant=_variant_name(fcfg),
            config=cfg,
        )
        reports.append(report)
        extra = f" top{report.k} {report.top_k:.4f}" if report.top_k is not None else ""
        print(f"task {task} {split} {name}: per-response {report.per_response:.4f} "
              f"per-dialog {report.per_dialog:.4f}{extra} "
              f"({report.n_examples} examples, {report.n_dialogs} dialogs)")
    if cfg.get("out"):
        path = Path(cfg["out"])
        exists = path.exists()
        with open(path, "a", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
            if not exists:
                writer.writeheader()
            for r in reports:
                writer.writerow(r.row())
    return 0


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(args) -> int:
    cfg = resolve_config(args, {
        "data": "data", "task": 1, "model": "memnn", "seed": 1, "out": "best.npz",
        "epochs": None,
    })
    data = Path(cfg["data"])
    task = cfg["task"]
    fcfg = _feature_config(cfg)
    vocab = _load_vocab(data, fcfg.bigrams)
    candidates = _load_candidates(data)
    kbs = _load_kbs(data)
    train_ex = _examples_for(data, task, "train")
    val_ex = _examples_for(data, task, "val")

    if cfg.get("grid"):
        with open(cfg["grid"], encoding="utf-8") as f:
            grid = json.load(f)
    else:
        grid = EMBEDDINGS_DEFAULT_GRID if cfg["model"] == "embeddings" else MEMNN_DEFAULT_GRID

    def run_point(point: dict):
        if cfg["model"] == "embeddings":
            hp = emb_mod.TrainHp(**point, epochs=_first(cfg.get("epochs"), 100), seed=cfg["seed"])
            pcfg = FeatureConfig(use_history=hp.use_history, match_type=fcfg.match_type,
                                 match_type_no_history=fcfg.match_type_no_history,
                                 bigrams=fcfg.bigrams)
            model, curve = emb_mod.train(train_ex, val_ex, candidates, vocab, hp, pcfg, kbs)
        else:
            hp = mem_mod.MemNNHp(**point, epochs=_first(cfg.get("epochs"), 40), seed=cfg["seed"])
            model, curve = mem_mod.train(train_ex, val_ex, candidates, vocab, hp, fcfg, kbs)
        best_val = max((c["val_per_response"] for c in curve), default=0.0)
        print(f"point {point}: val {best_val:.4f}")
        return best_val, model

    best_point, best_model, trace = sweep(run_point, grid)
    best_model.save(cfg["out"])
    grid_csv = str(cfg["out"]) + ".grid.csv"
    keys = sorted({k for row in trace for k in row})
    with open(grid_csv, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=keys)
        writer.writeheader()
        writer.writerows(trace)
    print(f"best point: {best_point} -> {cfg['out']}")
    return 0


# ---------------------------------------------------------------------------
# report


def cmd_report(args) -> int:
    rows = []
    for path in args.inputs:
        rows.extend(read_csv(path))
    md = to_markdown(rows)
    if args.out_md:
        Path(args.out_md).write_text(md, encoding="utf-8")
    if args.out_csv:
        with open(args.out_csv, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: row.get(k, "") for k in CSV_FIELDS})
    print(md, end="")
    return 0


# ---------------------------------------------------------------------------
# chat


def _execute_api_call(text: str, kbs: list[KnowledgeBase]):
    parts = text.split()
    if len(parts) != 5 or parts[1:5][2] not in WORD_TO_PARTY:
        return []
    query = ApiQuery(parts[1], parts[2], parts[4], WORD_TO_PARTY[parts[3]])
    facts = []
    for kb in kbs:
        facts.extend(kb.query(query))
    return facts


def cmd_chat(args) -> int:
    cfg = resolve_config(args, {"data": "data", "task": 1})
    data = Path(cfg["data"])
    candidates = _load_candidates(data)
    kbs = _load_kbs(data)
    vocab = None
    if not cfg.get("checkpoint"):
        cfg.setdefault("model", "rule")
        vocab = _load_vocab(data, cfg.get("bigrams", False))
    name, ranker, _ = _build_ranker(cfg, data, cfg["task"], vocab, candidates, kbs)

    history = []
    print(f"chat with {name}; type a user turn, {SILENCE} for silence, \\quit to exit")
    while True:
        try:
            line = input("user> ").strip()
        except EOFError:
            return 0
        if line == "\\quit":
            return 0
        if not line:
            continue
        history.append(user_turn(line))
        from .corpus import Example

        example = Example(0, len(history), tuple(history[:-1]), line, "")
        if hasattr(ranker, "rank_with_trace"):
            order, trace = ranker.rank_with_trace(example)
            _print_attention(history[:-1], trace)
            scores = ranker.scores(example)
        else:
            order = ranker.rank(example)
            scores = getattr(ranker, "scores", lambda e: None)(example)
        print("top candidates:")
        for rank_pos, idx in enumerate(order[:5], 1):
            s = f" ({scores[idx]:+.3f})" if scores is not None else ""
            print(f"  {rank_pos}. {candidates[idx]}{s}")
        reply = candidates[order[0]]
        print(f"bot> {reply}")
        history.append(bot_turn(reply))
        if reply.startswith("api_call "):
            for fact in _execute_api_call(reply, kbs):
                print(f"  result: {fact.render()}")
                history.append(result_turn(fact))


def _print_attention(history, trace) -> None:
    if not trace.per_hop or not len(trace.per_hop[0]):
        return
    hops = len(trace.per_hop)
    header = "  time  spk   " + "".join(f"hop{h + 1:<7}" for h in range(hops)) + "memory"
    print(header)
    for i, turn in enumerate(history):
        weights = "".join(f"{trace.per_hop[h][i]:<10.3f}" for h in range(hops))
        print(f"  {i + 1:<5} {turn.speaker.value:<5} {weights}{turn.text}")
    sums = ", ".join(f"hop{h + 1}={trace.per_hop[h].sum():.3f}" for h in range(hops))
    print(f"  (attention sums: {sums})")


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> _Parser:
    parser = _Parser(prog="restobench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("generate", help="regenerate KBs, dialogs, candidates, vocabulary")
    add_common(p)
    p.add_argument("--out")
    p.add_argument("--train-size", dest="train_size", type=int)
    p.add_argument("--val-size", dest="val_size", type=int)
    p.add_argument("--test-size", dest="test_size", type=int)
    p.add_argument("--patterns")
    p.add_argument("--force", action="store_const", const=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train embeddings or the memory network")
    add_common(p)
    p.add_argument("--data")
    p.add_argument("--task", type=int)
    p.add_argument("--model", choices=["embeddings", "memnn"])
    p.add_argument("--out")
    p.add_argument("--curve")
    p.add_argument("--lr", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--hops", type=int)
    p.add_argument("--negatives", type=int)
    p.add_argument("--epochs", type=int)
    _add_feature_flags(p)
    p.add_argument("--tied", action="store_const", const=True)
    p.add_argument("--full-softmax", dest="full_softmax", action="store_const", const=True)
    p.add_argument("--sampled-softmax", dest="full_softmax", action="store_const", const=False)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint or a non-learning baseline")
    add_common(p)
    p.add_argument("--data")
    p.add_argument("--task", type=int)
    p.add_argument("--model", choices=["rule", "tfidf", "nn"])
    p.add_argument("--checkpoint")
    p.add_argument("--split", help="comma-separated: train,val,test,test_oov")
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--out", help="append metric rows to this CSV")
    _add_feature_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="exhaustive grid search on validation accuracy")
    add_common(p)
    p.add_argument("--data")
    p.add_argument("--task", type=int)
    p.add_argument("--model", choices=["embeddings", "memnn"])
    p.add_argument("--grid", help="JSON list of hyperparameter points")
    p.add_argument("--out")
    p.add_argument("--epochs", type=int)
    _add_feature_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("chat", help="interactive debug REPL against a model")
    add_common(p)
    p.add_argument("--data")
    p.add_argument("--task", type=int)
    p.add_argument("--model", choices=["rule", "tfidf", "nn"])
    p.add_argument("--checkpoint")
    _add_feature_flags(p)
    p.set_defaults(func=cmd_chat)

    p = sub.add_parser("report", help="aggregate metric CSVs into one table")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out-md", dest="out_md")
    p.add_argument("--out-csv", dest="out_csv")
    p.set_defaults(func=cmd_report)
    return parser


def _add_feature_flags(p) -> None:
    p.add_argument("--use-history", dest="use_history", action="store_const", const=True)
    p.add_argument("--no-history", dest="use_history", action="store_const", const=False)
    p.add_argument("--match-type", dest="match_type", action="store_const", const=True)
    p.add_argument("--match-type-no-history", dest="match_type_no_history",
                   action="store_const", const=True)
    p.add_argument("--bigrams", action="store_const", const=True)
    p.add_argument("--time-from-end", dest="time_from_end", action="store_const", const=True)
    p.add_argument("--time-from-start", dest="time_from_end", action="store_const", const=False)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OracleError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
