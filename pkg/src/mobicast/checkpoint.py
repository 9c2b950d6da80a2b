"""Self-describing binary checkpoints.

Layout (all integers little-endian):
    bytes 0..7    magic ``MBCKPT01``
    bytes 8..15   uint64 header length in bytes
    header        UTF-8 JSON: format_version, model config, normalization
                  stats, and an ordered weight manifest (name, rows, cols)
    payload       the weight arrays as raw little-endian float64,
                  concatenated in manifest order

The header JSON is serialized with sorted keys and no timestamps, so
identical parameters produce byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .features import NormalizationStats
from .model import ModelConfig, ModelParams, init_params

MAGIC = b"MBCKPT01"
FORMAT_VERSION = 1


def save_checkpoint(path, params: ModelParams, stats: NormalizationStats) -> Path:
    path = Path(path)
    named = params.named_tensors()
    manifest = [
        {"name": name, "rows": t.rows, "cols": t.cols} for name, t in named.items()
    ]
    header = {
        "format_version": FORMAT_VERSION,
        "config": params.config.to_dict(),
        "stats": stats.to_dict(),
        "weights": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for t in named.values():
            f.write(np.ascontiguousarray(t.values, dtype="<f8").tobytes())
    return path


def load_checkpoint(path) -> tuple[ModelParams, NormalizationStats]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path.name}: not a mobicast checkpoint")
    (header_len,) = struct.unpack("<Q", blob[8:16])
    try:
        header = json.loads(blob[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path.name}: corrupt header: {e}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path.name}: unsupported format version {header.get('format_version')}"
        )
    config = ModelConfig.from_dict(header["config"])
    stats = NormalizationStats.from_dict(header["stats"])
    params = init_params(config, seed=0)
    named = params.named_tensors()

    manifest = header["weights"]
    names = [w["name"] for w in manifest]
    if names != list(named.keys()):
        raise CheckpointError(f"{path.name}: weight manifest does not match model config")
    offset = 16 + header_len
    for w in manifest:
        t = named[w["name"]]
        rows, cols = int(w["rows"]), int(w["cols"])
        if (rows, cols) != t.shape:
            raise CheckpointError(
                f"{path.name}: weight {w['name']} has shape ({rows}, {cols}), "
                f"expected {t.shape}"
            )
        nbytes = rows * cols * 8
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path.name}: truncated payload at {w['name']}")
        t.values = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(rows, cols)
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"{path.name}: {len(blob) - offset} trailing bytes")
    return params, stats
