"""Round-trip and strictness tests for the MMDW container format."""

import numpy as np
import pytest

from stylemmd.weights_io import (
    BadMagicError,
    ContainerFormatError,
    DuplicateNameError,
    MalformedEntryError,
    NonFiniteValueError,
    TrailingBytesError,
    TruncatedError,
    UnsupportedVersionError,
    WeightContainer,
    read_container,
    write_container,
)


def small_container():
    c = WeightContainer()
    c.add("t", np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32))
    return c


def containers_equal(a: WeightContainer, b: WeightContainer) -> bool:
    if a.names() != b.names():
        return False
    return all(
        ea.dims == eb.dims and np.array_equal(ea.data, eb.data)
        for ea, eb in zip(a.entries, b.entries)
    )


def test_write_read_round_trip():
    c = small_container()
    again = read_container(write_container(c))
    assert containers_equal(c, again)
    assert again["t"].dims == (2, 2)
    assert again["t"].data.dtype == np.float32


def test_empty_container_is_12_bytes():
    data = write_container(WeightContainer())
    assert len(data) == 12
    assert read_container(data).entries == []


def test_read_write_identity_on_random_containers():
    rng = np.random.default_rng(3)
    for trial in range(20):
        c = WeightContainer()
        for i in range(rng.integers(0, 5)):
            ndim = int(rng.integers(0, 4))
            dims = tuple(int(d) for d in rng.integers(1, 5, size=ndim))
            c.add(f"tensor_{trial}_{i}", rng.normal(size=dims).astype(np.float32), dims)
        raw = write_container(c)
        assert write_container(read_container(raw)) == raw


def test_single_float_difference_is_4_payload_bytes():
    c1 = small_container()
    c2 = WeightContainer()
    c2.add("t", np.array([[1.0, 2.0], [3.0, 5.0]], dtype=np.float32))
    b1, b2 = write_container(c1), write_container(c2)
    assert len(b1) == len(b2)
    diff = [i for i, (x, y) in enumerate(zip(b1, b2)) if x != y]
    assert len(diff) <= 4
    assert diff[0] >= len(b2) - 4  # the mutation sits in the last float


def test_bad_magic():
    raw = bytearray(write_container(small_container()))
    raw[0] ^= 0xFF
    with pytest.raises(BadMagicError):
        read_container(bytes(raw))


def test_unsupported_version():
    raw = bytearray(write_container(small_container()))
    raw[4] = 9
    with pytest.raises(UnsupportedVersionError):
        read_container(bytes(raw))


def test_truncation_names_tensor():
    raw = write_container(small_container())
    with pytest.raises(TruncatedError, match="'t'"):
        read_container(raw[:-3])


def test_trailing_bytes_rejected():
    raw = write_container(small_container())
    with pytest.raises(TrailingBytesError):
        read_container(raw + b"\x00")


def test_duplicate_name_rejected_on_read():
    c = small_container()
    raw = bytearray(write_container(c))
    # splice the single-tensor body in twice and fix the count
    body = bytes(raw[12:])
    doubled = bytes(raw[:8]) + (2).to_bytes(4, "little") + body + body
    with pytest.raises(DuplicateNameError):
        read_container(doubled)


def test_duplicate_name_rejected_on_add():
    c = small_container()
    with pytest.raises(DuplicateNameError):
        c.add("t", np.zeros(2, dtype=np.float32))


def test_non_finite_value_reports_offset():
    c = small_container()
    raw = bytearray(write_container(c))
    payload_start = len(raw) - 16
    raw[payload_start + 8 : payload_start + 12] = np.float32("nan").tobytes()
    with pytest.raises(NonFiniteValueError, match=str(payload_start + 8)):
        read_container(bytes(raw))


def test_write_rejects_non_finite():
    bad = WeightContainer()
    bad.add("x", np.array([1.0, np.inf], dtype=np.float64).astype(np.float32))
    with pytest.raises(NonFiniteValueError):
        write_container(bad)


def test_empty_name_rejected():
    raw = bytearray(write_container(small_container()))
    raw[12:14] = (0).to_bytes(2, "little")  # name length 0: next bytes misparse
    with pytest.raises(ContainerFormatError):
        read_container(bytes(raw))


def test_huge_declared_dims_fail_before_allocation():
    c = WeightContainer()
    raw = bytearray(write_container(WeightContainer()))
    raw[8:12] = (1).to_bytes(4, "little")
    raw += (1).to_bytes(2, "little") + b"x" + bytes([2])
    raw += (0xFFFFFFFF).to_bytes(4, "little") * 2
    with pytest.raises(TruncatedError):
        read_container(bytes(raw))
    del c


def test_fuzz_mutations_error_cleanly():
    raw = write_container(small_container())
    rng = np.random.default_rng(11)
    for _ in range(500):
        mutated = bytearray(raw)
        for _ in range(int(rng.integers(1, 4))):
            mutated[int(rng.integers(0, len(mutated)))] = int(rng.integers(0, 256))
        try:
            read_container(bytes(mutated))
        except ContainerFormatError:
            pass  # clean rejection is the contract
