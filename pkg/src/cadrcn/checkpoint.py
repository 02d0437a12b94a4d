"""JSON checkpoints: parameter name -> shape and flat row-major values."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .autodiff import Tensor

FORMAT = "cadrcn-checkpoint"
VERSION = 1


def save_checkpoint(path: str | Path, params: Mapping[str, Tensor], config: dict, **extra) -> None:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "config": config,
        **extra,
        "params": {
            name: {"shape": list(p.shape), "values": p.data.ravel().tolist()} for name, p in params.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, ensure_ascii=False)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict, dict]:
    """Returns (arrays by name, config, remaining top-level fields)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != FORMAT:
        raise ValueError(f"{path} is not a {FORMAT} file")
    arrays = {}
    for name, entry in doc.pop("params").items():
        values = np.asarray(entry["values"], dtype=np.float64)
        shape = tuple(entry["shape"])
        if values.size != int(np.prod(shape)):
            raise ValueError(f"parameter {name}: {values.size} values for shape {shape}")
        arrays[name] = values.reshape(shape)
    config = doc.pop("config")
    return arrays, config, doc
