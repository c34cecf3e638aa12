"""Binary tensor / checkpoint files and the on-disk dataset layout.

Tensor files (`.tns`) hold a single float64 array: magic ``TNSR``, a u32
format version, u32 ndim, one u32 per dimension, then the values as
little-endian float64 in C order. Checkpoints (`.evdf`) start with magic
``EVDF`` and a version, followed by a u32-length-prefixed JSON config block
and a sequence of named tensors (u32 name length, UTF-8 name, ndim, dims,
values) running to end of file.

A dataset is a directory with a ``manifest.json`` and one subdirectory per
sample containing ``mask.tns``, one ``<phase>.tns`` per present phase, and a
``meta.json`` describing the sample.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ParseError
from .phantom import PHASES, PhaseStack

TENSOR_MAGIC = b"TNSR"
CHECKPOINT_MAGIC = b"EVDF"
FORMAT_VERSION = 1
GENERATOR_VERSION = 1


def _pack_tensor(array: np.ndarray) -> bytes:
    array = np.ascontiguousarray(array, dtype="<f8")
    header = struct.pack("<I", array.ndim)
    dims = struct.pack(f"<{array.ndim}I", *array.shape) if array.ndim else b""
    return header + dims + array.tobytes()


class _Reader:
    """Cursor over a byte buffer that fails loudly on truncation."""

    def __init__(self, data: bytes, source: str) -> None:
        self.data = data
        self.pos = 0
        self.source = source

    def take(self, count: int) -> bytes:
        end = self.pos + count
        if end > len(self.data):
            raise ParseError(f"{self.source}: truncated (wanted {count} bytes)")
        chunk = self.data[self.pos : end]
        self.pos = end
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    @property
    def exhausted(self) -> bool:
        return self.pos >= len(self.data)


def _unpack_tensor(reader: _Reader) -> np.ndarray:
    ndim = reader.u32()
    shape = tuple(reader.u32() for _ in range(ndim))
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    raw = reader.take(count * 8)
    return np.frombuffer(raw, dtype="<f8").reshape(shape).copy()


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    """Write one array as a `.tns` tensor file."""
    payload = TENSOR_MAGIC + struct.pack("<I", FORMAT_VERSION) + _pack_tensor(np.asarray(array))
    Path(path).write_bytes(payload)


def read_tensor(path: str | Path) -> np.ndarray:
    """Read a `.tns` tensor file back into a float64 array."""
    reader = _Reader(Path(path).read_bytes(), str(path))
    if reader.take(4) != TENSOR_MAGIC:
        raise ParseError(f"{path}: not a tensor file")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported tensor format version {version}")
    array = _unpack_tensor(reader)
    if not reader.exhausted:
        raise ParseError(f"{path}: trailing bytes after tensor data")
    return array


def save_checkpoint(path: str | Path, config: dict, params: dict[str, np.ndarray]) -> None:
    """Write a config dict plus named parameter tensors as an `.evdf` file."""
    config_blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<I", len(config_blob)),
        config_blob,
    ]
    for name, array in params.items():
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(_pack_tensor(np.asarray(array)))
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read an `.evdf` file back into (config, name -> array)."""
    reader = _Reader(Path(path).read_bytes(), str(path))
    if reader.take(4) != CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: not a checkpoint file")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}")
    try:
        config = json.loads(reader.take(reader.u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: malformed config block: {exc}") from exc
    params: dict[str, np.ndarray] = {}
    while not reader.exhausted:
        name = reader.take(reader.u32()).decode("utf-8")
        params[name] = _unpack_tensor(reader)
    return config, params


def save_dataset(directory: str | Path, samples: list[PhaseStack], manifest_extra: dict | None = None) -> None:
    """Write samples and a manifest under `directory`, one subdir per sample."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    names = []
    for sample in samples:
        name = f"s{sample.sample_id:05d}"
        names.append(name)
        sample_dir = root / name
        sample_dir.mkdir(exist_ok=True)
        for phase, img in sample.phases.items():
            write_tensor(sample_dir / f"{phase}.tns", img)
        write_tensor(sample_dir / "mask.tns", sample.mask.astype(np.float64))
        meta = {
            "phases": list(sample.present),
            "case_id": sample.case_id,
            "sample_id": sample.sample_id,
            "generator_version": GENERATOR_VERSION,
        }
        (sample_dir / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    manifest = {
        "format": "evidseg-dataset",
        "version": FORMAT_VERSION,
        "count": len(samples),
        "samples": names,
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    (root / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def load_dataset(directory: str | Path) -> list[PhaseStack]:
    """Read a dataset directory written by `save_dataset`."""
    root = Path(directory)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise ParseError(f"{directory}: missing manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{manifest_path}: malformed JSON: {exc}") from exc
    samples = []
    for name in manifest.get("samples", []):
        sample_dir = root / name
        try:
            meta = json.loads((sample_dir / "meta.json").read_text())
        except OSError as exc:
            raise ParseError(f"{sample_dir}: missing meta.json") from exc
        except json.JSONDecodeError as exc:
            raise ParseError(f"{sample_dir}/meta.json: malformed JSON: {exc}") from exc
        phases = {}
        for phase in meta["phases"]:
            if phase not in PHASES:
                raise ParseError(f"{sample_dir}: unknown phase {phase!r} in meta.json")
            phases[phase] = read_tensor(sample_dir / f"{phase}.tns")
        mask = read_tensor(sample_dir / "mask.tns").astype(np.int64)
        samples.append(
            PhaseStack(
                phases=phases,
                mask=mask,
                case_id=int(meta.get("case_id", 0)),
                sample_id=int(meta.get("sample_id", 0)),
            )
        )
    return samples
