"""Single checkpoint container for both learned model kinds.

An .npz holding the parameter arrays plus a JSON metadata blob with the
format version, model kind, dimensions and the vocabulary hash; loading
refuses a checkpoint whose vocabulary hash does not match.
"""
from __future__ import annotations

import json

import numpy as np

from .corpus import Vocabulary
from .errors import DataError

FORMAT_VERSION = 1


def save_checkpoint(path, model_kind: str, meta: dict, arrays: dict) -> None:
    header = dict(meta)
    header["model_kind"] = model_kind
    header["format_version"] = FORMAT_VERSION
    np.savez(path, __meta__=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path, vocab: Vocabulary | None = None) -> tuple[dict, dict]:
    """Returns (meta, arrays); validates the vocabulary hash when given."""
    with np.load(path) as data:
        if "__meta__" not in data:
            raise DataError(f"{path}: not a restobench checkpoint")
        meta = json.loads(bytes(data["__meta__"]).decode())
        arrays = {k: data[k] for k in data.files if k != "__meta__"}
    if meta.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {meta.get('format_version')}")
    if vocab is not None and meta.get("vocab_sha256") != vocab.sha256():
        raise DataError(f"{path}: checkpoint was built against a different vocabulary")
    return meta, arrays
