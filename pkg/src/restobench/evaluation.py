"""Ranking metrics, the rule-based baseline ranker, grid sweeps and reports.

A ranker is anything with rank(example) -> list of candidate indices, best
first and totally ordered, so rank-1 comparisons need no tie policy here.
"""
from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field

from .corpus import CandidateSet, Example
from .errors import OracleError
from .kb import KnowledgeBase
from .simulator import PatternSet, oracle_bot


@dataclass
class EvalReport:
    task: int | None
    model: str
    split: str
    per_response: float
    per_dialog: float
    n_examples: int
    n_dialogs: int
    top_k: float | None = None
    k: int | None = None
    seed: int | None = None
    wall_time_s: float = 0.0
    config_fingerprint: str = ""
    variant: str = ""

    def row(self) -> dict:
        return {
            "task": self.task,
            "model": self.model,
            "variant": self.variant,
            "split": self.split,
            "per_response": f"{self.per_response:.4f}",
            "per_dialog": f"{self.per_dialog:.4f}",
            "top_k": "" if self.top_k is None else f"{self.top_k:.4f}",
            "k": "" if self.k is None else self.k,
            "seed": "" if self.seed is None else self.seed,
            "wall_time_s": f"{self.wall_time_s:.2f}",
            "config_fingerprint": self.config_fingerprint,
        }


CSV_FIELDS = [
    "task", "model", "variant", "split", "per_response", "per_dialog",
    "top_k", "k", "seed", "wall_time_s", "config_fingerprint",
]


def config_fingerprint(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def gold_ranks(ranker, examples: list[Example], candidates: CandidateSet) -> list[int]:
    """Position of the gold candidate in each example's ranking (0-based).

    Uses the ranker's gold_rank fast path when it has one; the result is
    identical to scanning the full rank() output.
    """
    fast = getattr(ranker, "gold_rank", None)
    ranks = []
    for ex in examples:
        gold_idx = candidates.index.get(ex.gold)
        if gold_idx is None:
            ranks.append(len(candidates))
        elif fast is not None:
            ranks.append(fast(ex, gold_idx))
        else:
            ranks.append(ranker.rank(ex).index(gold_idx))
    return ranks


def per_response_accuracy(ranker, examples: list[Example], candidates: CandidateSet) -> float:
    ranks = gold_ranks(ranker, examples, candidates)
    return sum(r == 0 for r in ranks) / max(1, len(ranks))


def per_dialog_accuracy(ranker, examples: list[Example], candidates: CandidateSet) -> float:
    ranks = gold_ranks(ranker, examples, candidates)
    per_dialog: dict[int, bool] = {}
    for ex, r in zip(examples, ranks):
        per_dialog[ex.dialog_id] = per_dialog.get(ex.dialog_id, True) and (r == 0)
    return sum(per_dialog.values()) / max(1, len(per_dialog))


def top_k_accuracy(ranker, examples: list[Example], candidates: CandidateSet, k: int) -> float:
    ranks = gold_ranks(ranker, examples, candidates)
    return sum(r < k for r in ranks) / max(1, len(ranks))


def evaluate(
    ranker,
    examples: list[Example],
    candidates: CandidateSet,
    *,
    task: int | None = None,
    model: str = "",
    split: str = "",
    k: int | None = None,
    seed: int | None = None,
    variant: str = "",
    config: dict | None = None,
) -> EvalReport:
    """Single pass computing all metrics (one rank() call per example)."""
    t0 = time.monotonic()
    ranks = gold_ranks(ranker, examples, candidates)
    per_dialog: dict[int, bool] = {}
    for ex, r in zip(examples, ranks):
        per_dialog[ex.dialog_id] = per_dialog.get(ex.dialog_id, True) and (r == 0)
    n = max(1, len(ranks))
    return EvalReport(
        task=task,
        model=model,
        split=split,
        per_response=sum(r == 0 for r in ranks) / n,
        per_dialog=sum(per_dialog.values()) / max(1, len(per_dialog)),
        n_examples=len(ranks),
        n_dialogs=len(per_dialog),
        top_k=None if k is None else sum(r < k for r in ranks) / n,
        k=k,
        seed=seed,
        wall_time_s=time.monotonic() - t0,
        config_fingerprint=config_fingerprint(config or {}),
        variant=variant,
    )


class RuleBasedRanker:
    """The oracle bot as a ranker: its utterance first, the rest in order."""

    def __init__(self, candidates: CandidateSet, kbs: list[KnowledgeBase],
                 patterns: PatternSet | None = None):
        self.candidates = candidates
        self.kbs = kbs
        self.patterns = patterns or PatternSet.load()

    def predict(self, example: Example) -> str | None:
        history = list(example.history)
        if example.input_utterance:
            from .simulator import user_turn

            history.append(user_turn(example.input_utterance))
        try:
            return oracle_bot(history, self.kbs, self.patterns)
        except OracleError:
            return None

    def rank(self, example: Example) -> list[int]:
        predicted = self.predict(example)
        top = self.candidates.index.get(predicted) if predicted is not None else None
        order = list(range(len(self.candidates)))
        if top is not None:
            order.remove(top)
            order.insert(0, top)
        return order

    def gold_rank(self, example: Example, gold_idx: int) -> int:
        predicted = self.predict(example)
        top = self.candidates.index.get(predicted) if predicted is not None else None
        if top is None:
            return gold_idx
        if gold_idx == top:
            return 0
        # everyone but the promoted winner keeps candidate order
        return 1 + gold_idx - (1 if top < gold_idx else 0)


# ---------------------------------------------------------------------------
# hyperparameter sweep


def sweep(train_eval_fn, grid: list[dict]) -> tuple[dict, object, list[dict]]:
    """Exhaustive grid search on validation per-response accuracy.

    train_eval_fn(point) -> (val_accuracy, artifact).  Ties prefer smaller
    dim, then fewer hops, then lower lr.  Returns (best point, artifact,
    full trace).
    """
    if not grid:
        raise ValueError("empty grid")
    trace = []
    best = None
    for point in grid:
        val_acc, artifact = train_eval_fn(point)
        trace.append({**point, "val_per_response": val_acc})
        key = (
            -val_acc,
            point.get("dim", 0),
            point.get("hops", 0),
            point.get("lr", 0.0),
        )
        if best is None or key < best[0]:
            best = (key, point, artifact)
    return best[1], best[2], trace


# Per-task tuned settings for the two learned models (validation-selected).
EMBEDDINGS_DEFAULT_GRID = [
    {"lr": 0.01, "margin": 0.01, "dim": 32, "negatives": 100, "use_history": True},
    {"lr": 0.01, "margin": 0.01, "dim": 128, "negatives": 100, "use_history": False},
    {"lr": 0.01, "margin": 0.1, "dim": 128, "negatives": 1000, "use_history": False},
    {"lr": 0.001, "margin": 0.1, "dim": 128, "negatives": 1000, "use_history": False},
    {"lr": 0.001, "margin": 0.01, "dim": 128, "negatives": 100, "use_history": False},
]

MEMNN_DEFAULT_GRID = [
    {"lr": 0.01, "dim": 128, "hops": 1, "negatives": 100},
    {"lr": 0.01, "dim": 32, "hops": 1, "negatives": 100},
    {"lr": 0.01, "dim": 32, "hops": 3, "negatives": 100},
    {"lr": 0.01, "dim": 128, "hops": 2, "negatives": 100},
    {"lr": 0.01, "dim": 128, "hops": 4, "negatives": 100},
]

# hyperparameters selected per task (dialog tasks 1-5)
EMBEDDINGS_TASK_HP = {
    1: {"lr": 0.01, "margin": 0.01, "dim": 32, "negatives": 100, "use_history": True},
    2: {"lr": 0.01, "margin": 0.01, "dim": 128, "negatives": 100, "use_history": False},
    3: {"lr": 0.01, "margin": 0.1, "dim": 128, "negatives": 1000, "use_history": False},
    4: {"lr": 0.001, "margin": 0.1, "dim": 128, "negatives": 1000, "use_history": False},
    5: {"lr": 0.01, "margin": 0.01, "dim": 32, "negatives": 100, "use_history": True},
}

MEMNN_TASK_HP = {
    1: {"lr": 0.01, "dim": 128, "hops": 1, "negatives": 100},
    2: {"lr": 0.01, "dim": 32, "hops": 1, "negatives": 100},
    3: {"lr": 0.01, "dim": 32, "hops": 3, "negatives": 100},
    4: {"lr": 0.01, "dim": 128, "hops": 2, "negatives": 100},
    5: {"lr": 0.01, "dim": 32, "hops": 3, "negatives": 100},
}


# ---------------------------------------------------------------------------
# report emission


def write_csv(path, reports: list[EvalReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for r in reports:
            writer.writerow(r.row())


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def to_markdown(rows: list[dict]) -> str:
    """Accuracy table, per-response with per-dialog in parentheses."""
    keys: list[tuple] = []
    models: list[str] = []
    cells: dict[tuple, dict[str, str]] = {}
    for row in rows:
        rkey = (row["task"], row["split"])
        mkey = f"{row['model']}{('+' + row['variant']) if row.get('variant') else ''}"
        if rkey not in keys:
            keys.append(rkey)
        if mkey not in models:
            models.append(mkey)
        pr = 100 * float(row["per_response"])
        pd = 100 * float(row["per_dialog"])
        cells[rkey] = cells.get(rkey, {})
        cells[rkey][mkey] = f"{pr:.1f} ({pd:.1f})"
    lines = ["| task / split | " + " | ".join(models) + " |",
             "|---" * (len(models) + 1) + "|"]
    for rkey in keys:
        row_cells = [cells[rkey].get(m, "-") for m in models]
        lines.append(f"| T{rkey[0]} {rkey[1]} | " + " | ".join(row_cells) + " |")
    return "\n".join(lines) + "\n"
