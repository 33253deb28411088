"""Reader/writer for the MMDW binary tensor container.

Layout (all integers little-endian): magic ``4D 4D 44 57`` ("MMDW"),
u32 version = 1, u32 tensor count, then per tensor: u16 name length,
UTF-8 name, u8 ndim, ndim x u32 dims, product(dims) x f32 payload.
No padding or alignment; trailing bytes are an error.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"MMDW"
VERSION = 1


class ContainerFormatError(ValueError):
    """Base error for any malformed or invariant-violating container."""


class BadMagicError(ContainerFormatError):
    pass


class UnsupportedVersionError(ContainerFormatError):
    pass


class TruncatedError(ContainerFormatError):
    pass


class DuplicateNameError(ContainerFormatError):
    pass


class NonFiniteValueError(ContainerFormatError):
    pass


class MalformedEntryError(ContainerFormatError):
    """Bad name encoding, empty name, or other per-entry defects."""


class TrailingBytesError(ContainerFormatError):
    pass


@dataclass(frozen=True)
class TensorEntry:
    """One named float32 tensor, stored row-major with explicit dims."""

    name: str
    dims: tuple[int, ...]
    data: np.ndarray  # float32, shape == dims

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32).reshape(self.dims)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "data", arr)

    def nbytes(self) -> int:
        return int(self.data.size) * 4


@dataclass
class WeightContainer:
    """Ordered collection of named tensors; names are unique and non-empty."""

    entries: list[TensorEntry] = field(default_factory=list)

    def __post_init__(self):
        self._index = {}
        for e in self.entries:
            if e.name in self._index:
                raise DuplicateNameError(f"duplicate tensor name {e.name!r}")
            self._index[e.name] = e

    def add(self, name: str, data, dims=None) -> None:
        arr = np.asarray(data, dtype=np.float32)
        entry = TensorEntry(name, tuple(dims) if dims is not None else arr.shape, arr)
        if entry.name in self._index:
            raise DuplicateNameError(f"duplicate tensor name {name!r}")
        self.entries.append(entry)
        self._index[name] = entry

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __getitem__(self, name: str) -> TensorEntry:
        return self._index[name]

    def names(self) -> list[str]:
        return [e.name for e in self.entries]


def _take(buf: bytes, offset: int, n: int, what: str) -> tuple[bytes, int]:
    if offset + n > len(buf):
        raise TruncatedError(
            f"file truncated at byte {len(buf)} while reading {what} "
            f"(needed {n} bytes at offset {offset})"
        )
    return buf[offset : offset + n], offset + n


def read_container(data: bytes) -> WeightContainer:
    """Parse MMDW bytes strictly; every defect raises a ContainerFormatError."""
    buf = bytes(data)
    raw, off = _take(buf, 0, 4, "magic")
    if raw != MAGIC:
        raise BadMagicError(f"bad magic {raw!r} at offset 0, expected {MAGIC!r}")
    raw, off = _take(buf, off, 4, "version")
    version = struct.unpack("<I", raw)[0]
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version} at offset 4")
    raw, off = _take(buf, off, 4, "tensor count")
    count = struct.unpack("<I", raw)[0]

    container = WeightContainer()
    for idx in range(count):
        label = f"tensor #{idx}"
        raw, off = _take(buf, off, 2, f"{label} name length")
        name_len = struct.unpack("<H", raw)[0]
        raw, off = _take(buf, off, name_len, f"{label} name")
        try:
            name = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedEntryError(f"{label} name is not valid UTF-8: {exc}") from None
        if not name:
            raise MalformedEntryError(f"{label} has an empty name")
        label = f"tensor {name!r}"
        raw, off = _take(buf, off, 1, f"{label} ndim")
        ndim = raw[0]
        raw, off = _take(buf, off, 4 * ndim, f"{label} dims")
        dims = struct.unpack(f"<{ndim}I", raw) if ndim else ()
        n_elems = 1
        for d in dims:
            n_elems *= d
        payload_off = off
        raw, off = _take(buf, off, 4 * n_elems, f"{label} payload ({n_elems} floats)")
        values = np.frombuffer(raw, dtype="<f4").astype(np.float32)
        finite = np.isfinite(values)
        if not finite.all():
            bad = int(np.argmin(finite))
            raise NonFiniteValueError(
                f"{label} has a non-finite value at byte offset {payload_off + 4 * bad}"
            )
        if name in container:
            raise DuplicateNameError(f"duplicate tensor name {name!r} (second at tensor #{idx})")
        container.add(name, values.reshape(dims), dims)
    if off != len(buf):
        raise TrailingBytesError(f"{len(buf) - off} trailing bytes after offset {off}")
    return container


def write_container(container: WeightContainer) -> bytes:
    """Serialize canonically; write(read(b)) == b for every valid b."""
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", VERSION)
    out += struct.pack("<I", len(container.entries))
    seen = set()
    for e in container.entries:
        if not e.name:
            raise MalformedEntryError("tensor name must be non-empty")
        if e.name in seen:
            raise DuplicateNameError(f"duplicate tensor name {e.name!r}")
        seen.add(e.name)
        name_bytes = e.name.encode("utf-8")
        if len(name_bytes) > 0xFFFF:
            raise MalformedEntryError(f"tensor name {e.name!r} exceeds 65535 UTF-8 bytes")
        if len(e.dims) > 0xFF:
            raise MalformedEntryError(f"tensor {e.name!r} has more than 255 dims")
        if any(d < 0 or d > 0xFFFFFFFF for d in e.dims):
            raise MalformedEntryError(f"tensor {e.name!r} has a dim outside u32 range")
        if not np.isfinite(e.data).all():
            raise NonFiniteValueError(f"tensor {e.name!r} contains non-finite values")
        out += struct.pack("<H", len(name_bytes))
        out += name_bytes
        out += struct.pack("<B", len(e.dims))
        if e.dims:
            out += struct.pack(f"<{len(e.dims)}I", *e.dims)
        out += np.ascontiguousarray(e.data, dtype="<f4").tobytes()
    return bytes(out)


def load_container(path) -> WeightContainer:
    with open(path, "rb") as fh:
        return read_container(fh.read())


def save_container(container: WeightContainer, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_container(container))
