"""The ``.dtok`` token-stream format.

All integers are little-endian::

    magic            4 bytes  b"DTOK"
    version          u16
    sample_rate      u32
    downsample_ratio u16
    variant          u8       index into quant.VARIANTS
    L                u16      digit radix (levels, or codebook size for vq)
    G                u16      digits per token (groups, or residual depth for vq)
    H                u16      quantizer input dimension
    sample_count     u64      original utterance length in samples
    record_count     u32
    records          record_count x (varint segment_length, varint token)

Varints are unsigned LEB128.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

from ..quant import VARIANTS, QuantizerSpec

MAGIC = b"DTOK"
VERSION = 1
_HEADER = struct.Struct("<4sHIHBHHHQI")


class StreamFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TokenStream:
    sample_rate: int
    downsample_ratio: int
    spec: QuantizerSpec
    sample_count: int
    records: tuple = ()  # ((segment_length, token), ...)

    @property
    def n_frames(self):
        return -(-self.sample_count // self.downsample_ratio)

    @property
    def lengths(self):
        return [n for n, _ in self.records]

    @property
    def tokens(self):
        return [t for _, t in self.records]

    @property
    def duration(self):
        return self.sample_count / self.sample_rate

    def validate(self):
        """Raise :class:`StreamFormatError` unless lengths tile the utterance and tokens are in range."""
        if self.sample_rate <= 0 or self.downsample_ratio <= 0:
            raise StreamFormatError("sample_rate and downsample_ratio must be positive")
        vocab = self.spec.vocab_size
        total = 0
        for i, (n, tok) in enumerate(self.records):
            if n < 1:
                raise StreamFormatError(f"record {i}: segment length {n} < 1")
            if not 0 <= tok < vocab:
                raise StreamFormatError(f"record {i}: token {tok} outside vocabulary of {vocab}")
            total += n
        if self.records and total != self.n_frames:
            raise StreamFormatError(f"segment lengths sum to {total}, header implies {self.n_frames} frames")
        if not self.records and self.sample_count:
            raise StreamFormatError("non-empty utterance with no records")
        return self


def _spec_fields(spec):
    if spec.variant == "vq":
        return spec.codebook_size, spec.groups, spec.input_dim
    return spec.levels, spec.groups, spec.input_dim


def _spec_from_fields(variant, radix, digits, dim):
    if variant == "vq":
        return QuantizerSpec("vq", 2, digits, dim, codebook_size=radix)
    return QuantizerSpec(variant, radix, digits, dim)


def _varint(value):
    if value < 0:
        raise ValueError("varints are unsigned")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _read_varint(blob, pos):
    value, shift, start = 0, 0, pos
    while True:
        if pos >= len(blob):
            raise StreamFormatError(f"truncated records: varint at offset {start} runs past end")
        byte = blob[pos]
        value |= (byte & 0x7F) << shift
        pos += 1
        if not byte & 0x80:
            return value, pos
        shift += 7


def dumps(stream):
    radix, digits, dim = _spec_fields(stream.spec)
    head = _HEADER.pack(MAGIC, VERSION, stream.sample_rate, stream.downsample_ratio,
                        VARIANTS.index(stream.spec.variant), radix, digits, dim,
                        stream.sample_count, len(stream.records))
    body = b"".join(_varint(n) + _varint(t) for n, t in stream.records)
    return head + body


def loads(blob, validate=True):
    blob = bytes(blob)
    for i, (got, want) in enumerate(zip(blob[:4], MAGIC)):
        if got != want:
            raise StreamFormatError(f"bad magic byte at offset {i}")
    if len(blob) < _HEADER.size:
        raise StreamFormatError(f"truncated header: {len(blob)} < {_HEADER.size} bytes")
    (_, version, rate, ratio, variant, radix, digits, dim, count, n_records) = _HEADER.unpack_from(blob)
    if version != VERSION:
        raise StreamFormatError(f"version mismatch: file has {version}, reader supports {VERSION}")
    if variant >= len(VARIANTS):
        raise StreamFormatError(f"unknown quantizer variant code {variant} at offset 13")
    try:
        spec = _spec_from_fields(VARIANTS[variant], radix, digits, dim)
    except ValueError as exc:
        raise StreamFormatError(f"invalid quantizer header: {exc}") from exc
    pos, records = _HEADER.size, []
    for _ in range(n_records):
        n, pos = _read_varint(blob, pos)
        tok, pos = _read_varint(blob, pos)
        records.append((n, tok))
    if pos != len(blob):
        raise StreamFormatError(f"{len(blob) - pos} trailing bytes after record {n_records}")
    stream = TokenStream(rate, ratio, spec, count, tuple(records))
    return stream.validate() if validate else stream


def write_stream(stream, path):
    Path(path).write_bytes(dumps(stream))


def read_stream(path):
    return loads(Path(path).read_bytes())
