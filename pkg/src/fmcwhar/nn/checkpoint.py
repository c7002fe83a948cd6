"""Weight checkpoints: JSON manifest plus one float32 blob per parameter.

Layout of a checkpoint directory:

    manifest.json          config, seed, parameter/buffer names and shapes
    params/<name>.f32      little-endian float32, row-major
    buffers/<name>.f32     non-trainable state (batch-norm running stats)

Names are the model's dotted registry names with ``/`` substituted so
they stay valid filenames.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .model import MultiDomainModel

FORMAT_VERSION = 1


def _blob_name(param_name: str) -> str:
    return param_name.replace("/", "_") + ".f32"


def save_checkpoint(directory, model: MultiDomainModel, extra: dict | None = None) -> None:
    directory = Path(directory)
    params = model.params()
    buffers = model.buffers()
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": json.loads(model.cfg.to_json()),
        "seed": model.seed,
        "params": [
            {"name": name, "shape": list(value.shape)} for name, value in params.items()
        ],
        "buffers": [
            {"name": name, "shape": list(value.shape)} for name, value in buffers.items()
        ],
    }
    if extra:
        manifest["extra"] = extra
    for section, values in (("params", params), ("buffers", buffers)):
        (directory / section).mkdir(parents=True, exist_ok=True)
        for name, value in values.items():
            value.astype("<f4").tofile(directory / section / _blob_name(name))
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)


def load_checkpoint(directory) -> MultiDomainModel:
    directory = Path(directory)
    with open(directory / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {manifest.get('format_version')}")
    cfg = ModelConfig.from_json(json.dumps(manifest["config"]))
    model = MultiDomainModel(cfg, seed=manifest.get("seed", 0))
    for section, setter in (("params", model.set_param), ("buffers", model.set_buffer)):
        for entry in manifest.get(section, []):
            blob = directory / section / _blob_name(entry["name"])
            value = np.fromfile(blob, dtype="<f4").astype(np.float64)
            setter(entry["name"], value.reshape(entry["shape"]))
    return model
