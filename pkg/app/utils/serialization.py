"""
Parameter-store container.

An ``.npz`` archive with a ``header`` member (UTF-8 JSON bytes: format
version, layer specs, rng seed, step count, entry names and shapes) and one
little-endian float64 array per entry, named ``p000``, ``p001``, ... in entry
order.
"""

import json
import logging
from pathlib import Path
from typing import Any, Union

import numpy as np

from ..errors import ConfigurationError
from ..services.nncore import LayerSpec, ParameterStore

logger = logging.getLogger(__name__)

STORE_FORMAT_VERSION = 1


def save_store(store: ParameterStore, path: Union[str, Path]) -> None:
    header = {
        "format_version": STORE_FORMAT_VERSION,
        "specs": [spec.model_dump(mode="json") for spec in store.specs],
        "rng_seed": store.rng_seed,
        "step_count": store.step_count,
        "entries": [{"name": name, "shape": list(entry.shape)} for name, entry in store.entries.items()],
    }
    arrays = {"header": np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8)}
    for index, entry in enumerate(store.entries.values()):
        arrays[f"p{index:03d}"] = entry.values.astype("<f8")
    with open(path, "wb") as handle:
        np.savez(handle, **arrays)


def load_store(path: Union[str, Path]) -> ParameterStore:
    with open(path, "rb") as handle, np.load(handle, allow_pickle=False) as archive:
        header = json.loads(archive["header"].tobytes().decode("utf-8"))
        if header.get("format_version") != STORE_FORMAT_VERSION:
            raise ConfigurationError(f"{path}: unsupported parameter format {header.get('format_version')!r}")
        store = ParameterStore([LayerSpec(**spec) for spec in header["specs"]],
                               rng_seed=header["rng_seed"], step_count=header["step_count"])
        for index, entry in enumerate(header["entries"]):
            store.add(entry["name"], tuple(entry["shape"]), archive[f"p{index:03d}"].astype(np.float64))
    return store


def write_json(path: Union[str, Path], payload: Any) -> None:
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def read_json(path: Union[str, Path]) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))
