"""Convert VGG-19 pretrained weights into the MMDW tensor container.

Two source layouts are recognized:

* a torch checkpoint (``.pth``/``.pt``) holding a torchvision-style state
  dict with ``features.<idx>.weight``/``.bias`` entries, and
* a NumPy ``.npz`` archive keyed directly by the canonical layer names
  (``conv1_1.weight`` ... ``conv5_4.bias``).

Every tensor is checked against the hardcoded canonical VGG-19 shape table
before anything is written; the tool fails closed on any mismatch.

MMDW layout (integers little-endian): magic ``4D 4D 44 57`` ("MMDW"),
u32 version = 1, u32 tensor count, then per tensor: u16 name length,
UTF-8 name, u8 ndim, ndim x u32 dims, product(dims) x f32 payload.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"MMDW"
VERSION = 1


class ConversionError(ValueError):
    """Any defect that prevents a faithful conversion."""


class UnrecognizedSourceError(ConversionError):
    pass


# Canonical VGG-19 conv stack: name -> (out_ch, in_ch, 3, 3).
def _canonical_shapes() -> dict[str, tuple[int, int, int, int]]:
    blocks = ((1, 2, 64), (2, 2, 128), (3, 4, 256), (4, 4, 512), (5, 4, 512))
    shapes = {}
    in_ch = 3
    for block, n_convs, out_ch in blocks:
        for i in range(1, n_convs + 1):
            shapes[f"conv{block}_{i}"] = (out_ch, in_ch, 3, 3)
            in_ch = out_ch
    return shapes


CANONICAL_SHAPES = _canonical_shapes()

# torchvision vgg19().features indices of the 16 conv layers, in order
TORCHVISION_FEATURE_INDICES = (0, 2, 5, 7, 10, 12, 14, 16, 19, 21, 23, 25, 28, 30, 32, 34)


@dataclass(frozen=True)
class TensorRecord:
    name: str
    dims: tuple[int, ...]
    crc32: int


@dataclass(frozen=True)
class ConversionManifest:
    """What was converted: source identifier, per-tensor CRCs, output size."""

    source: str
    tensors: tuple[TensorRecord, ...]
    total_bytes: int

    def to_json(self) -> str:
        payload = {
            "source": self.source,
            "tensors": [
                {"name": t.name, "dims": list(t.dims), "crc32": t.crc32}
                for t in self.tensors
            ],
            "total_bytes": self.total_bytes,
        }
        return json.dumps(payload, indent=2) + "\n"


def _load_torch_source(path: Path) -> dict[str, np.ndarray]:
    try:
        import torch
    except ImportError as exc:
        raise ConversionError(
            "reading a .pth/.pt source requires torch to be installed"
        ) from exc
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if isinstance(blob, dict) and "state_dict" in blob and isinstance(blob["state_dict"], dict):
        blob = blob["state_dict"]
    if not isinstance(blob, dict):
        raise UnrecognizedSourceError(f"{path}: not a state dict")
    tensors = {}
    for canon, idx in zip(CANONICAL_SHAPES, TORCHVISION_FEATURE_INDICES):
        for kind in ("weight", "bias"):
            key = f"features.{idx}.{kind}"
            if key not in blob:
                raise ConversionError(
                    f"source is missing {canon}.{kind} (expected key {key!r})"
                )
            tensors[f"{canon}.{kind}"] = np.asarray(
                blob[key].detach().to(torch.float32).numpy(), dtype=np.float32
            )
    return tensors


def _load_npz_source(path: Path) -> dict[str, np.ndarray]:
    with np.load(path) as archive:
        tensors = {}
        for canon in CANONICAL_SHAPES:
            for kind in ("weight", "bias"):
                key = f"{canon}.{kind}"
                if key not in archive:
                    raise ConversionError(f"source is missing {key}")
                tensors[key] = np.asarray(archive[key], dtype=np.float32)
        return tensors


def load_source(path) -> tuple[dict[str, np.ndarray], str]:
    """Read a recognized VGG-19 weight file into canonical-named tensors."""
    path = Path(path)
    if not path.exists():
        raise ConversionError(f"source file {path} does not exist")
    suffix = path.suffix.lower()
    if suffix in (".pth", ".pt"):
        return _load_torch_source(path), f"torch-state-dict:{path.name}"
    if suffix == ".npz":
        return _load_npz_source(path), f"npz:{path.name}"
    raise UnrecognizedSourceError(
        f"{path}: unrecognized source layout (expected .pth/.pt or .npz)"
    )


def _validate(tensors: dict[str, np.ndarray]) -> None:
    for canon, kshape in CANONICAL_SHAPES.items():
        for kind, want in (("weight", kshape), ("bias", (kshape[0],))):
            name = f"{canon}.{kind}"
            if name not in tensors:
                raise ConversionError(f"source is missing {name}")
            got = tensors[name].shape
            if tuple(got) != want:
                raise ConversionError(
                    f"{name} has shape {tuple(got)}, canonical VGG-19 needs {want}"
                )
            if not np.isfinite(tensors[name]).all():
                raise ConversionError(f"{name} contains non-finite values")


def serialize_mmdw(tensors: dict[str, np.ndarray]) -> tuple[bytes, tuple[TensorRecord, ...]]:
    """Canonical MMDW bytes plus per-tensor payload CRCs, in canonical order."""
    names = [f"{c}.{k}" for c in CANONICAL_SHAPES for k in ("weight", "bias")]
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", VERSION)
    out += struct.pack("<I", len(names))
    records = []
    for name in names:
        data = np.ascontiguousarray(tensors[name], dtype="<f4")
        payload = data.tobytes()
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded))
        out += encoded
        out += struct.pack("<B", data.ndim)
        out += struct.pack(f"<{data.ndim}I", *data.shape)
        out += payload
        records.append(TensorRecord(name, tuple(data.shape), zlib.crc32(payload)))
    return bytes(out), tuple(records)


def convert(source_path, out_path, manifest_path=None) -> ConversionManifest:
    """Convert a recognized VGG-19 weight file and write MMDW plus manifest.

    The manifest lands next to the output (``<stem>.manifest.json``) unless
    an explicit path is given.
    """
    out_path = Path(out_path)
    tensors, source_id = load_source(source_path)
    _validate(tensors)
    raw, records = serialize_mmdw(tensors)
    manifest = ConversionManifest(source=source_id, tensors=records, total_bytes=len(raw))
    out_path.write_bytes(raw)
    if manifest_path is None:
        manifest_path = out_path.with_suffix(".manifest.json")
    Path(manifest_path).write_text(manifest.to_json())
    return manifest
