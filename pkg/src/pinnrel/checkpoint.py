"""Binary checkpoint persistence for trained surrogates.

Layout (all little-endian):

    bytes 0-7    magic ``b"PINNREL\\0"``
    bytes 8-11   format version (uint32)
    bytes 12-15  header length H (uint32)
    bytes 16-..  H bytes of UTF-8 JSON header (benchmark/transform ids,
                 layer sizes, activations, transform constants, training
                 config echo, final loss, parameter count)
    then         parameter_count float64 values: the flat parameter vector
                 in W0, b0, W1, b1, ... order

The JSON header is serialized with sorted keys and fixed separators, and
Python's float repr is shortest-roundtrip, so save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .network import NetworkParams, Surrogate

__all__ = ["Checkpoint", "CheckpointError", "save_checkpoint", "load_checkpoint"]

MAGIC = b"PINNREL\0"
VERSION = 1


class CheckpointError(Exception):
    """Unreadable, wrong-version, or dimensionally inconsistent checkpoint."""


@dataclass
class Checkpoint:
    """Everything needed to reconstruct a trained surrogate."""

    benchmark: str
    transform: str
    layer_sizes: tuple
    theta: np.ndarray  # flat parameters, W0 b0 W1 b1 ...
    constants: dict = field(default_factory=dict)
    train_config: dict = field(default_factory=dict)
    final_loss: float = float("nan")
    hidden_activation: str = "tanh"
    output_activation: str = "linear"

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        self.theta = np.ascontiguousarray(self.theta, dtype=np.float64).ravel()
        expected = _parameter_count(self.layer_sizes)
        if self.theta.size != expected:
            raise CheckpointError(
                f"parameter vector has {self.theta.size} entries, "
                f"layer sizes {self.layer_sizes} need {expected}"
            )

    @classmethod
    def from_surrogate(cls, surrogate, benchmark, train_config=None, final_loss=float("nan")):
        return cls(
            benchmark=benchmark,
            transform=surrogate.transform,
            layer_sizes=surrogate.params.layer_sizes,
            theta=surrogate.params.flatten(),
            constants=dict(surrogate.constants),
            train_config=dict(train_config or {}),
            final_loss=float(final_loss),
        )

    def to_surrogate(self):
        params = NetworkParams.unflatten(self.layer_sizes, self.theta)
        return Surrogate(params=params, transform=self.transform, constants=dict(self.constants))


def _parameter_count(sizes):
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def _header_bytes(ckpt):
    header = {
        "benchmark": ckpt.benchmark,
        "transform": ckpt.transform,
        "layer_sizes": list(ckpt.layer_sizes),
        "hidden_activation": ckpt.hidden_activation,
        "output_activation": ckpt.output_activation,
        "constants": ckpt.constants,
        "train_config": ckpt.train_config,
        "final_loss": ckpt.final_loss,
        "parameter_count": int(ckpt.theta.size),
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(ckpt, path):
    """Write the checkpoint; returns the number of bytes written."""
    header = _header_bytes(ckpt)
    payload = ckpt.theta.astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(payload)
    return len(MAGIC) + 8 + len(header) + len(payload)


def load_checkpoint(path):
    """Read and validate a checkpoint file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 8 or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version, header_len = struct.unpack_from("<II", blob, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version} (expected {VERSION})"
        )
    start = len(MAGIC) + 8
    if len(blob) < start + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    n_params = int(header["parameter_count"])
    body = blob[start + header_len :]
    if len(body) != 8 * n_params:
        raise CheckpointError(
            f"{path}: parameter array truncated "
            f"({len(body)} bytes, expected {8 * n_params} for theta)"
        )
    theta = np.frombuffer(body, dtype="<f8").astype(np.float64)
    ckpt = Checkpoint(
        benchmark=header["benchmark"],
        transform=header["transform"],
        layer_sizes=tuple(header["layer_sizes"]),
        theta=theta,
        constants=dict(header["constants"]),
        train_config=dict(header["train_config"]),
        final_loss=float(header["final_loss"]),
        hidden_activation=header.get("hidden_activation", "tanh"),
        output_activation=header.get("output_activation", "linear"),
    )
    if ckpt.hidden_activation != "tanh" or ckpt.output_activation != "linear":
        raise CheckpointError(f"{path}: unsupported activations in header")
    return ckpt
