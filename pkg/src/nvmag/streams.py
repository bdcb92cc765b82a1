"""Uniformly sampled streams and their on-disk formats.

Binary layout (little-endian): header ``<4sIddBQ`` holding magic ``NVMS``,
format version, rate (Sa/s), t0 (s), unit code and sample count, followed by
``count`` float64 samples.
"""

from __future__ import annotations

import csv
import enum
import io
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError, RateMismatch, UnitMismatch

MAGIC = b"NVMS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIddBQ")


class Unit(enum.IntEnum):
    VOLTS = 0
    HERTZ = 1
    TESLA = 2
    DIMENSIONLESS = 3

    @property
    def symbol(self) -> str:
        return {0: "V", 1: "Hz", 2: "T", 3: "1"}[int(self)]

    @classmethod
    def parse(cls, value) -> "Unit":
        if isinstance(value, cls):
            return value
        try:
            if isinstance(value, (int, np.integer)):
                return cls(int(value))
            key = str(value).lower()
            names = {"v": "volts", "hz": "hertz", "t": "tesla", "1": "dimensionless"}
            return cls[names.get(key, key).upper()]
        except (KeyError, ValueError):
            raise InputError(f"unknown unit {value!r}") from None


@dataclass(frozen=True, eq=False)
class SampleStream:
    samples: np.ndarray
    rate: float
    unit: Unit = Unit.VOLTS
    t0: float = 0.0

    def __post_init__(self):
        s = np.ascontiguousarray(self.samples, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "rate", float(self.rate))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "unit", Unit.parse(self.unit))
        if not (self.rate > 0 and np.isfinite(self.rate)):
            raise InputError(f"rate must be positive, got {self.rate}")
        if not np.isfinite(self.t0):
            raise InputError("t0 must be finite")
        if not np.all(np.isfinite(s)):
            raise InputError("samples must be finite")

    def __len__(self):
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.rate

    @property
    def duration(self) -> float:
        return self.samples.size / self.rate

    def with_samples(self, samples, unit=None, rate=None, t0=None) -> "SampleStream":
        return SampleStream(
            samples,
            self.rate if rate is None else rate,
            self.unit if unit is None else unit,
            self.t0 if t0 is None else t0,
        )

    def require_unit(self, unit) -> None:
        unit = Unit.parse(unit)
        if self.unit is not unit:
            raise UnitMismatch(f"expected a stream in {unit.name.lower()}, got {self.unit.name.lower()}")

    def __eq__(self, other):
        if not isinstance(other, SampleStream):
            return NotImplemented
        return (
            self.rate == other.rate
            and self.unit is other.unit
            and self.t0 == other.t0
            and np.array_equal(self.samples, other.samples)
        )


def check_compatible(streams) -> None:
    """Raise RateMismatch unless all streams share a rate."""
    rates = {s.rate for s in streams}
    if len(rates) > 1:
        raise RateMismatch(f"streams have different rates: {sorted(rates)}")


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the target directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def to_bytes(stream: SampleStream) -> bytes:
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, stream.rate, stream.t0, int(stream.unit), stream.samples.size)
    return header + stream.samples.astype("<f8").tobytes()


def from_bytes(data: bytes) -> SampleStream:
    if len(data) < _HEADER.size:
        raise InputError("stream file truncated (header)")
    magic, version, rate, t0, unit, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise InputError(f"bad magic {magic!r}; not an NVMS stream")
    if version != FORMAT_VERSION:
        raise InputError(f"unsupported stream format version {version}")
    body = data[_HEADER.size:]
    if len(body) != 8 * count:
        raise InputError(f"stream file holds {len(body)} payload bytes, header says {count} samples")
    try:
        u = Unit(unit)
    except ValueError as exc:
        raise InputError(f"unknown unit code {unit}") from exc
    return SampleStream(np.frombuffer(body, dtype="<f8").copy(), rate, u, t0)


def write_stream(path, stream: SampleStream) -> None:
    atomic_write_bytes(path, to_bytes(stream))


def read_stream(path) -> SampleStream:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return from_bytes(data)


def write_csv(path, streams: dict[str, SampleStream]) -> None:
    """Plot-ready CSV with a time column and one column per named stream."""
    streams = dict(streams)
    if not streams:
        raise InputError("nothing to write")
    first = next(iter(streams.values()))
    check_compatible(streams.values())
    n = {len(s) for s in streams.values()}
    if len(n) != 1:
        raise InputError("CSV columns must have equal length")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t_s"] + [f"{k}_{s.unit.symbol}" for k, s in streams.items()])
    cols = [first.times] + [s.samples for s in streams.values()]
    for row in zip(*cols):
        w.writerow([repr(float(v)) for v in row])
    atomic_write_text(path, buf.getvalue())


def read_csv(path) -> dict[str, SampleStream]:
    """Inverse of :func:`write_csv` (rate inferred from the time column)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) < 3:
        raise InputError("CSV needs a header and at least two rows")
    head, body = rows[0], np.array(rows[1:], dtype=float)
    t = body[:, 0]
    rate = (len(t) - 1) / (t[-1] - t[0])
    out = {}
    for j, name in enumerate(head[1:], start=1):
        key, _, sym = name.rpartition("_")
        unit = {"V": Unit.VOLTS, "Hz": Unit.HERTZ, "T": Unit.TESLA, "1": Unit.DIMENSIONLESS}[sym]
        out[key] = SampleStream(body[:, j], rate, unit, t[0])
    return out
