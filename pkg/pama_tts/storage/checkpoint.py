"""
Checkpoint files.

A UTF-8 text header followed by one little-endian float32 payload:

    PAMA-CKPT 1
    step <n>
    config <json>
    arrays <count>
    <name> <d0>x<d1>... <offset> <nbytes>     (sorted by name)
    end
    <payload bytes>

Offsets are relative to the first payload byte. Optimizer moments are
stored as ordinary arrays under `adam.m.` / `adam.v.` prefixes.
"""
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pama_tts.errors import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = "PAMA-CKPT"
VERSION = 1
PAYLOAD_DTYPE = np.dtype("<f4")
MOMENT_PREFIXES = ("adam.m.", "adam.v.")


@dataclass
class Checkpoint:
    step: int
    config: dict
    params: dict[str, np.ndarray]
    moments: dict[str, np.ndarray] = field(default_factory=dict)

    def arrays(self) -> dict[str, np.ndarray]:
        merged = dict(self.params)
        for name, value in self.moments.items():
            if not name.startswith(MOMENT_PREFIXES):
                raise CheckpointError(f"optimizer array {name} lacks an adam.m./adam.v. prefix")
            merged[name] = value
        return merged


def _shape_text(shape: tuple) -> str:
    return "x".join(str(d) for d in shape) if shape else "scalar"


def _parse_shape(text: str) -> tuple:
    if text == "scalar":
        return ()
    try:
        return tuple(int(d) for d in text.split("x"))
    except ValueError:
        raise CheckpointError(f"bad array shape {text!r}") from None


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    arrays = ckpt.arrays()
    header = [
        f"{MAGIC} {VERSION}",
        f"step {int(ckpt.step)}",
        "config " + json.dumps(ckpt.config, sort_keys=True, separators=(",", ":")),
        f"arrays {len(arrays)}",
    ]
    chunks = []
    offset = 0
    for name in sorted(arrays):
        if any(ch.isspace() for ch in name):
            raise CheckpointError(f"array name {name!r} contains whitespace")
        data = np.ascontiguousarray(arrays[name], dtype=PAYLOAD_DTYPE)
        if not np.all(np.isfinite(data)):
            raise CheckpointError(f"array {name} is not finite")
        raw = data.tobytes()
        header.append(f"{name} {_shape_text(data.shape)} {offset} {len(raw)}")
        chunks.append(raw)
        offset += len(raw)
    header.append("end")
    return ("\n".join(header) + "\n").encode("utf-8") + b"".join(chunks)


def decode_checkpoint(blob: bytes) -> Checkpoint:
    lines = []
    pos = 0
    while True:
        nl = blob.find(b"\n", pos)
        if nl < 0:
            raise CheckpointError("checkpoint header is not terminated by 'end'")
        line = blob[pos:nl].decode("utf-8")
        pos = nl + 1
        if line == "end":
            break
        lines.append(line)
    payload = blob[pos:]

    if not lines or lines[0] != f"{MAGIC} {VERSION}":
        raise CheckpointError(f"not a {MAGIC} {VERSION} file")
    try:
        step = int(lines[1].removeprefix("step "))
        config = json.loads(lines[2].removeprefix("config "))
        count = int(lines[3].removeprefix("arrays "))
    except (IndexError, ValueError) as e:
        raise CheckpointError(f"malformed checkpoint header: {e}") from None
    if len(lines) != 4 + count:
        raise CheckpointError(f"header lists {len(lines) - 4} arrays, expected {count}")

    params: dict[str, np.ndarray] = {}
    moments: dict[str, np.ndarray] = {}
    for entry in lines[4:]:
        parts = entry.split(" ")
        if len(parts) != 4:
            raise CheckpointError(f"bad array entry {entry!r}")
        name, shape_text, offset, nbytes = parts[0], parts[1], int(parts[2]), int(parts[3])
        shape = _parse_shape(shape_text)
        expected = int(np.prod(shape, dtype=np.int64)) * PAYLOAD_DTYPE.itemsize
        if nbytes != expected or offset + nbytes > len(payload):
            raise CheckpointError(f"array {name}: payload range does not match shape {shape}")
        value = np.frombuffer(payload, dtype=PAYLOAD_DTYPE, count=nbytes // PAYLOAD_DTYPE.itemsize, offset=offset)
        value = value.reshape(shape).copy()
        (moments if name.startswith(MOMENT_PREFIXES) else params)[name] = value
    return Checkpoint(step=step, config=config, params=params, moments=moments)


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> Path:
    """Write atomically: temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_checkpoint(ckpt))
    os.replace(tmp, path)
    logger.info(f"Saved checkpoint at step {ckpt.step} to {path}")
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())
