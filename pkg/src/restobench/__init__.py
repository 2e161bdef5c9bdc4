"""Restaurant-booking dialog testbed.

Generates the five KB-grounded booking tasks, trains the four ranking
baselines (rule-based, IR, supervised embeddings, memory network) and
evaluates them under per-response / per-dialog accuracy.
"""

__version__ = "0.1.0"
