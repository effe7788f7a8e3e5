"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"TRP1"
    u32      header length L
    L bytes  UTF-8 JSON header: format_version, model (name, input_shape,
             num_classes, layers), optimizer (hyperparameters or null),
             metadata (free-form: config snapshot, seed, iteration count)
    records  repeated until EOF:
             u16 name length, UTF-8 name, u8 ndims, u32 dims[ndims],
             float64 data (row-major)

Parameter tensors are named ``layers.<i>.<param>``; optimizer velocities
are ``optim.<parameter name>``.
"""
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BadMagicError, CheckpointError, ShapeMismatchError, TruncatedRecordError
from .models import ModelSpec, model_from_tensors, param_shapes, spec_of
from .nn import SgdState

MAGIC = b"TRP1"
FORMAT_VERSION = 1
OPTIM_PREFIX = "optim."


@dataclass
class Checkpoint:
    model: object
    optimizer: SgdState = None
    metadata: dict = field(default_factory=dict)

    @property
    def spec(self):
        return spec_of(self.model)


def _record(name, arr):
    raw_name = name.encode("utf-8")
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return (struct.pack("<H", len(raw_name)) + raw_name + struct.pack("<B", arr.ndim)
            + struct.pack(f"<{arr.ndim}I", *arr.shape) + arr.tobytes())


def save_checkpoint(model, path, optimizer=None, metadata=None):
    spec = spec_of(model)
    params = model.named_params()
    header = {
        "format_version": FORMAT_VERSION,
        "model": {"name": spec.name, "input_shape": list(spec.input_shape),
                  "num_classes": spec.num_classes, "layers": list(spec.layers)},
        "optimizer": None if optimizer is None else {
            "lr": optimizer.lr, "momentum": optimizer.momentum,
            "weight_decay": optimizer.weight_decay},
        "metadata": metadata or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(blob)), blob]
    parts += [_record(name, arr) for name, arr in params.items()]
    if optimizer is not None:
        for name in params:
            if name in optimizer.velocity:
                parts.append(_record(OPTIM_PREFIX + name, optimizer.velocity[name]))
    with open(path, "wb") as f:
        f.write(b"".join(parts))


class _Reader:
    def __init__(self, raw, path):
        self.raw, self.pos, self.path = raw, 0, path

    def take(self, n, what):
        if self.pos + n > len(self.raw):
            raise TruncatedRecordError(
                f"{self.path}: truncated {what} at offset {self.pos} "
                f"(need {n} bytes, {len(self.raw) - self.pos} left)")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out


def read_checkpoint(path):
    """Parse a checkpoint file into a :class:`Checkpoint`.

    Raises ``BadMagicError``, ``TruncatedRecordError`` or
    ``ShapeMismatchError`` (all :class:`CheckpointError`) on malformed input.
    """
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    rd = _Reader(raw, path)
    rd.take(4, "magic")
    (hlen,) = struct.unpack("<I", rd.take(4, "header length"))
    try:
        header = json.loads(rd.take(hlen, "header").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {header.get('format_version')}")

    tensors = {}
    while rd.pos < len(raw):
        (nlen,) = struct.unpack("<H", rd.take(2, "tensor name length"))
        name = rd.take(nlen, "tensor name").decode("utf-8")
        (ndim,) = struct.unpack("<B", rd.take(1, f"ndims of {name}"))
        dims = struct.unpack(f"<{ndim}I", rd.take(4 * ndim, f"dims of {name}"))
        count = int(np.prod(dims)) if ndim else 1
        data = rd.take(8 * count, f"data of {name}")
        if name in tensors:
            raise CheckpointError(f"{path}: duplicate tensor {name}")
        tensors[name] = np.frombuffer(data, dtype="<f8").reshape(dims).astype(np.float64)

    m = header["model"]
    spec = ModelSpec(m["name"], tuple(m["input_shape"]), tuple(m["layers"]), m["num_classes"])
    expected = param_shapes(spec.layers)
    for name, arr in tensors.items():
        slot = name[len(OPTIM_PREFIX):] if name.startswith(OPTIM_PREFIX) else name
        if slot not in expected:
            raise CheckpointError(f"{path}: tensor {name} has no slot in the architecture")
        if arr.shape != tuple(expected[slot]):
            raise ShapeMismatchError(
                f"{path}: tensor {name} has shape {arr.shape}, header expects {tuple(expected[slot])}")
    missing = sorted(set(expected) - set(tensors))
    if missing:
        raise CheckpointError(f"{path}: missing tensors {', '.join(missing)}")

    model = model_from_tensors(spec, tensors)
    opt = None
    if header.get("optimizer") is not None:
        o = header["optimizer"]
        opt = SgdState(o["lr"], o["momentum"], o["weight_decay"])
        opt.velocity = {n[len(OPTIM_PREFIX):]: a for n, a in tensors.items()
                        if n.startswith(OPTIM_PREFIX)}
    return Checkpoint(model, opt, header.get("metadata", {}))


def load_checkpoint(path):
    return read_checkpoint(path).model
