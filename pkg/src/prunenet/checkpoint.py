"""PNCK checkpoint format, version 1.

A checkpoint is a directory holding ``manifest.json`` and ``weights.bin``.
The manifest lists tensors in file order; ``weights.bin`` is their
little-endian float32 bytes, row-major, back to back with no padding.
"""
import json
import os
import re

import numpy as np

from .errors import CheckpointError, ShapeError
from .model import AttentionWeights, FFNWeights, Layer, Model, ModelConfig

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
WEIGHTS = "weights.bin"

_LAYER_TENSOR = re.compile(r"^layer\.(\d+)\.(attn|ffn)\.(\w+)$")
_ATTN_NAMES = ("w_q", "w_k", "w_v", "w_o")
_FFN_NAMES = ("w_up", "w_down", "w_gate", "b_up", "b_down")
_LE_F32 = np.dtype("<f4")


def write_tensors(path, tensors, config):
    """Write ``(name, array)`` pairs plus a config mapping as a PNCK directory."""
    os.makedirs(path, exist_ok=True)
    entries = []
    offset = 0
    with open(os.path.join(path, WEIGHTS), "wb") as fh:
        for name, arr in tensors:
            arr = np.asarray(arr)
            if not np.issubdtype(arr.dtype, np.floating):
                raise CheckpointError(f"tensor {name!r} has non-float dtype {arr.dtype}")
            raw = np.ascontiguousarray(arr, dtype=_LE_F32).tobytes()
            fh.write(raw)
            entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "dtype": "f32"})
            offset += len(raw)
    manifest = {"format_version": FORMAT_VERSION, "config": config, "tensors": entries}
    with open(os.path.join(path, MANIFEST), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def read_tensors(path):
    """Read a PNCK directory. Returns ``(config_dict, {name: float32 array})`` in manifest order."""
    try:
        with open(os.path.join(path, MANIFEST), encoding="utf-8") as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"malformed manifest: {exc}") from exc
    if not isinstance(manifest, dict) or "tensors" not in manifest or "config" not in manifest:
        raise CheckpointError("malformed manifest: expected keys format_version, config, tensors")
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format_version {version!r}")
    with open(os.path.join(path, WEIGHTS), "rb") as fh:
        blob = fh.read()

    tensors = {}
    expected_offset = 0
    for entry in manifest["tensors"]:
        try:
            name, shape, offset, dtype = entry["name"], entry["shape"], entry["offset"], entry["dtype"]
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"malformed tensor entry {entry!r}") from exc
        if dtype != "f32":
            raise CheckpointError(f"tensor {name!r}: unsupported dtype {dtype!r}")
        if name in tensors:
            raise CheckpointError(f"duplicate tensor {name!r}")
        if offset != expected_offset:
            raise CheckpointError(
                f"tensor {name!r}: offset {offset} is not cumulative (expected {expected_offset})"
            )
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * _LE_F32.itemsize
        if offset + nbytes > len(blob):
            raise CheckpointError(
                f"size mismatch: tensor {name!r} needs bytes [{offset}, {offset + nbytes}) "
                f"but {WEIGHTS} holds {len(blob)}"
            )
        arr = np.frombuffer(blob, dtype=_LE_F32, count=count, offset=offset)
        tensors[name] = arr.astype(np.float32).reshape(shape)
        expected_offset = offset + nbytes
    if expected_offset != len(blob):
        raise CheckpointError(
            f"size mismatch: manifest accounts for {expected_offset} bytes, {WEIGHTS} holds {len(blob)}"
        )
    return manifest["config"], tensors


def save_checkpoint(model, path):
    write_tensors(path, model.tensors(), model.config.to_dict())


def load_checkpoint(path):
    config_dict, tensors = read_tensors(path)
    config = ModelConfig.from_dict(config_dict)
    layers = {}
    for name, arr in tensors.items():
        if name in ("embed", "head"):
            continue
        m = _LAYER_TENSOR.match(name)
        if not m:
            raise CheckpointError(f"unrecognized tensor name {name!r}")
        idx, block, leaf = int(m.group(1)), m.group(2), m.group(3)
        allowed = _ATTN_NAMES if block == "attn" else _FFN_NAMES
        if leaf not in allowed:
            raise CheckpointError(f"unrecognized tensor name {name!r}")
        layers.setdefault(idx, {"attn": {}, "ffn": {}})[block][leaf] = arr
    if sorted(layers) != list(range(config.n_layers)):
        raise CheckpointError(f"checkpoint layers {sorted(layers)} do not match n_layers={config.n_layers}")
    for key in ("embed", "head"):
        if key not in tensors:
            raise CheckpointError(f"checkpoint is missing {key!r}")
    try:
        built = []
        for i in range(config.n_layers):
            att, ffn = layers[i]["attn"], layers[i]["ffn"]
            built.append(Layer(
                AttentionWeights(att["w_q"], att["w_k"], att["w_v"], att["w_o"]),
                FFNWeights(ffn["w_up"], ffn["w_down"], ffn.get("w_gate"), ffn.get("b_up"), ffn.get("b_down")),
            ))
        return Model(config, tuple(built), tensors["embed"], tensors["head"])
    except KeyError as exc:
        raise CheckpointError(f"checkpoint is missing tensor {exc}") from exc
    except ShapeError as exc:
        raise CheckpointError(f"inconsistent tensor shapes: {exc}") from exc
