"""Binary parameter checkpoints.

Layout, all integers little-endian::

    b"HYDN1"
    u32 header length, header JSON (ASCII, sorted keys)
    per tensor, in declaration order:
        u16 name length, UTF-8 name, u8 ndim, u32 * ndim shape, float64 LE data
    u32 CRC-32 of every preceding byte

Optimizer moments, when present, follow the parameters as ``adam.m.<name>``
and ``adam.v.<name>``. The header records the model dimensions, curvature,
temperature and training step.
"""

from __future__ import annotations

import json
import struct
import zlib
from collections import OrderedDict
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .encoders import EncoderParams, ModelDims
from .errors import FormatError, VersionError

MAGIC = b"HYDN1"
_MAGIC_STEM = b"HYDN"


@dataclass
class AdamState:
    m: "OrderedDict[str, np.ndarray]"
    v: "OrderedDict[str, np.ndarray]"
    t: int = 0

    @classmethod
    def zeros_like(cls, params: EncoderParams) -> "AdamState":
        return cls(
            OrderedDict((k, np.zeros_like(v)) for k, v in params.items()),
            OrderedDict((k, np.zeros_like(v)) for k, v in params.items()),
            0,
        )

    def copy(self) -> "AdamState":
        return AdamState(
            OrderedDict((k, v.copy()) for k, v in self.m.items()),
            OrderedDict((k, v.copy()) for k, v in self.v.items()),
            self.t,
        )


@dataclass
class Checkpoint:
    params: EncoderParams
    step: int = 0
    optimizer: AdamState | None = None


def _pack_tensor(name: str, value: np.ndarray) -> bytes:
    encoded = name.encode("utf-8")
    value = np.asarray(value, dtype="<f8")
    parts = [struct.pack("<H", len(encoded)), encoded, struct.pack("<B", value.ndim)]
    parts.extend(struct.pack("<I", d) for d in value.shape)
    parts.append(value.tobytes(order="C"))
    return b"".join(parts)


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    params = ckpt.params
    header = {
        "dims": asdict(params.dims),
        "curvature": params.curvature,
        "temperature": params.temperature,
        "step": int(ckpt.step),
        "tensors": len(params.tensors),
        "optimizer_t": None if ckpt.optimizer is None else int(ckpt.optimizer.t),
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("ascii")
    body = [MAGIC, struct.pack("<I", len(header_bytes)), header_bytes]
    body.extend(_pack_tensor(k, v) for k, v in params.items())
    if ckpt.optimizer is not None:
        body.extend(_pack_tensor(f"adam.m.{k}", v) for k, v in ckpt.optimizer.m.items())
        body.extend(_pack_tensor(f"adam.v.{k}", v) for k, v in ckpt.optimizer.v.items())
    blob = b"".join(body)
    return blob + struct.pack("<I", zlib.crc32(blob))


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(encode_checkpoint(ckpt))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError("checkpoint truncated", offset=self.pos)
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(blob: bytes) -> Checkpoint:
    if not blob.startswith(_MAGIC_STEM):
        raise FormatError("not a checkpoint file (bad magic)", offset=0)
    if not blob.startswith(MAGIC):
        raise VersionError(f"unsupported checkpoint version {blob[4:5]!r}", offset=4)
    if len(blob) < len(MAGIC) + 8:
        raise FormatError("checkpoint truncated", offset=len(blob))
    payload, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) != crc:
        raise FormatError("checkpoint checksum mismatch (corrupt or truncated file)", offset=len(blob) - 4)
    reader = _Reader(payload)
    reader.take(len(MAGIC))
    (header_len,) = reader.unpack("<I")
    try:
        header = json.loads(reader.take(header_len).decode("ascii"))
        dims = ModelDims(**header["dims"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"bad checkpoint header: {exc}", offset=len(MAGIC) + 4) from None
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    while reader.pos < len(payload):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        count = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(reader.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)
    param_names = [k for k in tensors if not k.startswith("adam.")]
    if len(param_names) != header["tensors"]:
        raise FormatError("tensor count does not match header")
    try:
        params = EncoderParams(dims, OrderedDict((k, tensors[k]) for k in param_names))
    except ValueError as exc:
        raise FormatError(f"checkpoint tensors do not fit the model: {exc}") from None
    optimizer = None
    if header.get("optimizer_t") is not None:
        missing = [k for k in param_names if f"adam.m.{k}" not in tensors or f"adam.v.{k}" not in tensors]
        if missing:
            raise FormatError(f"optimizer moments missing for {missing[0]!r}")
        optimizer = AdamState(
            OrderedDict((k, tensors[f"adam.m.{k}"]) for k in param_names),
            OrderedDict((k, tensors[f"adam.v.{k}"]) for k in param_names),
            int(header["optimizer_t"]),
        )
    return Checkpoint(params, int(header["step"]), optimizer)


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())
