"""Checkpoint files: a small text header plus a tensor container.

Layout, little-endian:

    magic "TGCK" | u32 version | u32 header length | header UTF-8 | tensor blob

The header is ``key=value`` lines carrying the epoch/step counters and the
full run-config snapshot (``cfg.<key>`` entries). The tensor blob is the
shared "TGT1" container holding every model parameter under ``param.<name>``
and, when an optimizer is saved, its moments under ``adam.m.<name>`` /
``adam.v.<name>``.

Loading parses and validates everything before any model state is touched,
so a truncated or mismatched file can never leave a model half-loaded.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import tensorfile
from .config import ModelConfig, model_config_from, run_config_from_items
from .errors import FormatError, IncompleteCheckpointError
from .nets.model import LandmarkNet, build_model
from .training import Adam

MAGIC = b"TGCK"
VERSION = 1


@dataclass
class Checkpoint:
    version: int
    epoch: int
    step: int
    adam_t: int
    config_items: dict[str, str]
    arrays: dict[str, np.ndarray]

    def run_config(self) -> dict:
        return run_config_from_items(self.config_items)

    def model_config(self) -> ModelConfig:
        return model_config_from(self.run_config())

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {k[len("param.") :]: v for k, v in self.arrays.items() if k.startswith("param.")}

    def moment_arrays(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.arrays.items() if k.startswith("adam.")}


def save_checkpoint(
    path: str | Path,
    model: LandmarkNet,
    config_items: dict[str, str],
    optimizer: Adam | None = None,
    epoch: int = 0,
    step: int = 0,
) -> None:
    header_lines = [f"epoch={epoch}", f"step={step}", f"adam_t={optimizer.t if optimizer else 0}"]
    header_lines += [f"cfg.{key}={value}" for key, value in config_items.items()]
    header = ("\n".join(header_lines) + "\n").encode("utf-8")
    tensors = {f"param.{name}": arr for name, arr in model.state_arrays().items()}
    if optimizer is not None:
        tensors.update(optimizer.state_arrays())
    blob = io.BytesIO()
    tensorfile.write_tensors(blob, tensors)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(blob.getvalue())


def load_checkpoint(path: str | Path) -> Checkpoint:
    blob = Path(path).read_bytes()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    (header_len,) = struct.unpack("<I", blob[8:12])
    if len(blob) < 12 + header_len:
        raise FormatError(f"{path}: truncated checkpoint header")
    header = blob[12 : 12 + header_len].decode("utf-8")
    fields: dict[str, str] = {}
    config_items: dict[str, str] = {}
    for line in header.splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"{path}: malformed checkpoint header line {line!r}")
        if key.startswith("cfg."):
            config_items[key[4:]] = value
        else:
            fields[key] = value
    try:
        epoch = int(fields.get("epoch", "0"))
        step = int(fields.get("step", "0"))
        adam_t = int(fields.get("adam_t", "0"))
    except ValueError as exc:
        raise FormatError(f"{path}: malformed checkpoint counters: {exc}") from exc
    arrays = tensorfile.read_tensors(io.BytesIO(blob[12 + header_len :]))
    return Checkpoint(version=version, epoch=epoch, step=step, adam_t=adam_t, config_items=config_items, arrays=arrays)


def restore_model(checkpoint: Checkpoint, dtype=None) -> LandmarkNet:
    """Build a model from the checkpoint's config snapshot and load weights."""
    run_cfg = checkpoint.run_config()
    model = build_model(checkpoint.model_config(), seed=run_cfg["seed"], dtype=dtype)
    model.load_state(checkpoint.param_arrays(), source="checkpoint")
    return model


def restore_optimizer(checkpoint: Checkpoint, model: LandmarkNet, lr: float) -> Adam:
    optimizer = Adam(model.parameters(), lr=lr)
    moments = checkpoint.moment_arrays()
    missing = [k for k in list(optimizer.state_arrays()) if k not in moments]
    if missing:
        raise IncompleteCheckpointError(f"checkpoint lacks optimizer tensors: {missing}")
    optimizer.load_state_arrays(moments, t=checkpoint.adam_t)
    return optimizer
