"""Protocol messages and their byte-exact wire encoding.

Frame layout (all integers little-endian)::

    b"DSDR" | version (1 byte, 0x01) | type (1 byte) | payload length (u32) | payload

Each payload opens with a fixed header of u32 fields (the dimensions, plus
the worker id for ``Round1Msg``), followed by 8-byte scalars: unsigned
integers as u64, reals as IEEE-754 binary64, matrices row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..core import Method
from ..errors import TransportFailure

MAGIC = b"DSDR"
VERSION = 0x01
FRAME_HEADER = struct.Struct("<4sBBI")
HEADER_BYTES = FRAME_HEADER.size

T_ROUND1 = 0x01
T_BROADCAST1 = 0x02
T_ROUND2 = 0x03
T_EIGEN = 0x04
T_SCATTER = 0x05
T_ERROR = 0x7F

METHOD_TAGS = {Method.SIR: 1, Method.SAVE: 2, Method.DR: 3}
TAG_METHODS = {v: k for k, v in METHOD_TAGS.items()}


def _ro(a, dtype=np.float64):
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Round1Msg:
    worker_id: int
    n_s: int
    y_min: float
    y_max: float
    xbar: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xbar", _ro(self.xbar))

    @property
    def p(self):
        return self.xbar.size

    def scalar_count(self):
        return 3 + self.p


@dataclass(frozen=True)
class Broadcast1:
    grid: np.ndarray
    xbar: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "grid", _ro(self.grid))
        object.__setattr__(self, "xbar", _ro(self.xbar))

    @property
    def H(self):
        return self.grid.size - 1

    def scalar_count(self):
        return self.grid.size + self.xbar.size


@dataclass(frozen=True)
class Round2Msg:
    worker_id: int
    n_s: int
    counts: np.ndarray
    sums: np.ndarray
    scatter: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "counts", _ro(self.counts, np.uint64))
        object.__setattr__(self, "sums", _ro(self.sums))
        object.__setattr__(self, "scatter", _ro(self.scatter))

    @property
    def H(self):
        return self.counts.size

    @property
    def p(self):
        return self.scatter.shape[0]

    def scalar_count(self):
        return 2 + self.H + self.H * self.p + self.p * self.p


@dataclass(frozen=True)
class EigenPayload:
    worker_id: int
    n_s: int
    method: Method
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "eigenvalues", _ro(self.eigenvalues))
        vec = _ro(self.eigenvectors)
        if vec.ndim == 1:
            vec = _ro(vec.reshape(-1, 1))
        object.__setattr__(self, "eigenvectors", vec)

    @property
    def K(self):
        return self.eigenvalues.size

    @property
    def p(self):
        return self.eigenvectors.shape[0]

    def scalar_count(self):
        return 3 + self.K + self.K * self.p


@dataclass(frozen=True)
class ScatterMsg:
    """Scatter about the broadcast global mean; lets the master pool a covariance."""

    worker_id: int
    n_s: int
    scatter: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scatter", _ro(self.scatter))

    @property
    def p(self):
        return self.scatter.shape[0]

    def scalar_count(self):
        return 2 + self.p * self.p


@dataclass(frozen=True)
class ErrorMsg:
    worker_id: int
    message: str

    def scalar_count(self):
        return 1


# --------------------------------------------------------------------------
# encoding


def _f64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _u64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<u8").tobytes()


def encode_payload(msg) -> tuple[int, bytes]:
    if isinstance(msg, Round1Msg):
        return T_ROUND1, b"".join([
            struct.pack("<II", msg.p, msg.worker_id),
            _u64([msg.n_s]), _f64([msg.y_min, msg.y_max]), _f64(msg.xbar),
        ])
    if isinstance(msg, Broadcast1):
        return T_BROADCAST1, b"".join([
            struct.pack("<II", msg.xbar.size, msg.H), _f64(msg.grid), _f64(msg.xbar),
        ])
    if isinstance(msg, Round2Msg):
        return T_ROUND2, b"".join([
            struct.pack("<II", msg.p, msg.H),
            _u64([msg.worker_id, msg.n_s]), _u64(msg.counts), _f64(msg.sums), _f64(msg.scatter),
        ])
    if isinstance(msg, EigenPayload):
        return T_EIGEN, b"".join([
            struct.pack("<II", msg.p, msg.K),
            _u64([msg.worker_id, msg.n_s, METHOD_TAGS[msg.method]]),
            _f64(msg.eigenvalues), _f64(msg.eigenvectors),
        ])
    if isinstance(msg, ScatterMsg):
        return T_SCATTER, b"".join([
            struct.pack("<I", msg.p), _u64([msg.worker_id, msg.n_s]), _f64(msg.scatter),
        ])
    if isinstance(msg, ErrorMsg):
        text = msg.message.encode("utf-8")
        return T_ERROR, _u64([msg.worker_id]) + struct.pack("<I", len(text)) + text
    raise TypeError(f"cannot encode {type(msg).__name__}")


def encode(msg) -> bytes:
    mtype, payload = encode_payload(msg)
    return FRAME_HEADER.pack(MAGIC, VERSION, mtype, len(payload)) + payload


class _Reader:
    def __init__(self, buf: bytes, offset: int):
        self.buf = buf
        self.pos = 0
        self.offset = offset

    def take(self, nbytes: int) -> bytes:
        if self.pos + nbytes > len(self.buf):
            raise TransportFailure("payload shorter than its header implies", self.offset)
        out = self.buf[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return out

    def u32(self, k=1):
        return struct.unpack(f"<{k}I", self.take(4 * k))

    def u64(self, k):
        return np.frombuffer(self.take(8 * k), dtype="<u8").astype(np.uint64)

    def f64(self, k):
        return np.frombuffer(self.take(8 * k), dtype="<f8").astype(np.float64)

    def done(self):
        if self.pos != len(self.buf):
            raise TransportFailure(f"{len(self.buf) - self.pos} trailing payload bytes", self.offset)


def decode_payload(mtype: int, payload: bytes, offset: int = 0):
    r = _Reader(payload, offset)
    if mtype == T_ROUND1:
        p, wid = r.u32(2)
        n_s = int(r.u64(1)[0])
        lo, hi = r.f64(2)
        msg = Round1Msg(wid, n_s, float(lo), float(hi), r.f64(p))
    elif mtype == T_BROADCAST1:
        p, H = r.u32(2)
        msg = Broadcast1(r.f64(H + 1), r.f64(p))
    elif mtype == T_ROUND2:
        p, H = r.u32(2)
        wid, n_s = (int(v) for v in r.u64(2))
        counts = r.u64(H)
        msg = Round2Msg(wid, n_s, counts, r.f64(H * p).reshape(H, p), r.f64(p * p).reshape(p, p))
    elif mtype == T_EIGEN:
        p, K = r.u32(2)
        wid, n_s, tag = (int(v) for v in r.u64(3))
        if tag not in TAG_METHODS:
            raise TransportFailure(f"unknown method tag {tag}", offset)
        values = r.f64(K)
        msg = EigenPayload(wid, n_s, TAG_METHODS[tag], values, r.f64(p * K).reshape(p, K))
    elif mtype == T_SCATTER:
        (p,) = r.u32(1)
        wid, n_s = (int(v) for v in r.u64(2))
        msg = ScatterMsg(wid, n_s, r.f64(p * p).reshape(p, p))
    elif mtype == T_ERROR:
        wid = int(r.u64(1)[0])
        (length,) = r.u32(1)
        try:
            text = r.take(length).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TransportFailure("error message is not valid UTF-8", offset) from exc
        msg = ErrorMsg(wid, text)
    else:
        raise TransportFailure(f"unknown message type 0x{mtype:02x}", offset)
    r.done()
    return msg


def parse_header(header: bytes, offset: int = 0) -> tuple[int, int]:
    """Validate a 10-byte frame header and return ``(type, payload length)``."""
    if len(header) != HEADER_BYTES:
        raise TransportFailure(f"truncated frame header ({len(header)} bytes)", offset)
    magic, version, mtype, length = FRAME_HEADER.unpack(header)
    if magic != MAGIC:
        raise TransportFailure(f"bad magic {magic!r}", offset)
    if version != VERSION:
        raise TransportFailure(f"unsupported version {version}", offset)
    return mtype, length


def decode(frame: bytes, offset: int = 0):
    """Decode exactly one frame."""
    mtype, length = parse_header(frame[:HEADER_BYTES], offset)
    payload = frame[HEADER_BYTES:]
    if len(payload) != length:
        raise TransportFailure(f"payload length {len(payload)} does not match header {length}", offset)
    return decode_payload(mtype, payload, offset)


def header_bytes(msg) -> int:
    """Bytes of the fixed u32 header that precede the 8-byte scalars."""
    if isinstance(msg, ScatterMsg):
        return 4
    if isinstance(msg, ErrorMsg):
        return 0
    return 8
