"""Binary TCP wire protocol, little-endian throughout.

Framing::

    frame  := len:u32 (bytes after this field) | op:u8 | body
    record := job_id:16B | message_id:u64 | ts_count:u8
              | ts_count x (tag:u8, micros:u64) | payload_len:u32 | payload
    ERROR  := code:u16 | msg_len:u16 | msg:utf8

Op codes: 1=CREATE_TOPIC, 2=PRODUCE, 3=FETCH, 4=COMMIT, 5=ASSIGN,
6=PUT_PARAM, 7=GET_PARAM; response is 128+op; 255=ERROR.

Request/response bodies not pinned above:

    CREATE_TOPIC req  := topic_len:u16 | topic | partitions:u32 | retention:u32
    CREATE_TOPIC resp := partitions:u32 | retention:u32
    PRODUCE req       := topic_len:u16 | topic | partition:u32 | record
    PRODUCE resp      := offset:u64
    FETCH req         := topic_len:u16 | topic | partition:u32 | from_offset:u64
                         | max_records:u32 | timeout_ms:u32
    FETCH resp        := count:u32 | count x record
    COMMIT req        := group_len:u16 | group | topic_len:u16 | topic
                         | partition:u32 | offset:u64
    COMMIT resp       := (empty)
    ASSIGN req        := group_len:u16 | group | topic_len:u16 | topic
                         | count:u16 | count x (member_len:u16 | member)
    ASSIGN resp       := count:u32 | count x (partition:u32 | member_len:u16 | member)
    PUT_PARAM req     := key_len:u16 | key | has_expected:u8 | expected_version:u64
                         | blob_len:u32 | blob
    PUT_PARAM resp    := version:u64
    GET_PARAM req     := key_len:u16 | key | has_min:u8 | min_version:u64 | timeout_ms:u32
    GET_PARAM resp    := version:u64 | blob_len:u32 | blob

decode_message(encode_message(m)) round-trips for every valid message, and
encode_message(decode_message(frame)) reproduces the frame bit for bit.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field
from typing import List, Tuple

from .broker import Record
from .errors import (
    OffsetOutOfRetention,
    PilotEdgeError,
    TruncatedFrame,
    UnknownOpCode,
    VersionConflict,
    error_for_code,
)

OP_CREATE_TOPIC = 1
OP_PRODUCE = 2
OP_FETCH = 3
OP_COMMIT = 4
OP_ASSIGN = 5
OP_PUT_PARAM = 6
OP_GET_PARAM = 7
OP_RESPONSE_BASE = 128
OP_ERROR = 255

MAX_FRAME_BYTES = 64 * 1024 * 1024


@dataclass(frozen=True)
class CreateTopicReq:
    topic: str
    partitions: int
    retention: int


@dataclass(frozen=True)
class CreateTopicResp:
    partitions: int
    retention: int


@dataclass(frozen=True)
class ProduceReq:
    topic: str
    partition: int
    record: Record


@dataclass(frozen=True)
class ProduceResp:
    offset: int


@dataclass(frozen=True)
class FetchReq:
    topic: str
    partition: int
    from_offset: int
    max_records: int
    timeout_ms: int = 0


@dataclass(frozen=True)
class FetchResp:
    records: Tuple[Record, ...]


@dataclass(frozen=True)
class CommitReq:
    group: str
    topic: str
    partition: int
    offset: int


@dataclass(frozen=True)
class CommitResp:
    pass


@dataclass(frozen=True)
class AssignReq:
    group: str
    topic: str
    members: Tuple[str, ...]


@dataclass(frozen=True)
class AssignResp:
    assignment: Tuple[Tuple[int, str], ...]


@dataclass(frozen=True)
class PutParamReq:
    key: str
    blob: bytes
    expected_version: int = 0
    has_expected: bool = False


@dataclass(frozen=True)
class PutParamResp:
    version: int


@dataclass(frozen=True)
class GetParamReq:
    key: str
    min_version: int = 0
    has_min: bool = False
    timeout_ms: int = 0


@dataclass(frozen=True)
class GetParamResp:
    version: int
    blob: bytes


@dataclass(frozen=True)
class ErrorResp:
    code: int
    message: str


_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


class _Reader:
    """Cursor over a bytes buffer that raises TruncatedFrame on underrun."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedFrame(f"need {n} bytes at {self.pos}, have {len(self.buf) - self.pos}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return _U8.unpack(self.take(1))[0]

    def u16(self) -> int:
        return _U16.unpack(self.take(2))[0]

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    def string(self) -> str:
        return self.take(self.u16()).decode("utf-8")

    def blob32(self) -> bytes:
        return self.take(self.u32())

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise TruncatedFrame(f"{len(self.buf) - self.pos} trailing bytes in frame")


def _pack_string(s: str) -> bytes:
    raw = s.encode("utf-8")
    return _U16.pack(len(raw)) + raw


def encode_record(rec: Record) -> bytes:
    parts = [
        rec.job_id,
        _U64.pack(rec.message_id),
        _U8.pack(len(rec.timestamps)),
    ]
    for tag, micros in rec.timestamps:
        parts.append(_U8.pack(tag))
        parts.append(_U64.pack(micros))
    parts.append(_U32.pack(len(rec.payload)))
    parts.append(rec.payload)
    return b"".join(parts)


def decode_record(r: _Reader, partition: int = 0) -> Record:
    job_id = r.take(16)
    message_id = r.u64()
    ts_count = r.u8()
    timestamps = [(r.u8(), r.u64()) for _ in range(ts_count)]
    payload = r.blob32()
    return Record(job_id=job_id, message_id=message_id, partition=partition,
                  payload=payload, timestamps=timestamps)


# ------------------------------------------------------------------ encode

def _body(msg) -> Tuple[int, bytes]:
    if isinstance(msg, CreateTopicReq):
        return OP_CREATE_TOPIC, _pack_string(msg.topic) + _U32.pack(msg.partitions) + _U32.pack(msg.retention)
    if isinstance(msg, CreateTopicResp):
        return OP_RESPONSE_BASE + OP_CREATE_TOPIC, _U32.pack(msg.partitions) + _U32.pack(msg.retention)
    if isinstance(msg, ProduceReq):
        return OP_PRODUCE, _pack_string(msg.topic) + _U32.pack(msg.partition) + encode_record(msg.record)
    if isinstance(msg, ProduceResp):
        return OP_RESPONSE_BASE + OP_PRODUCE, _U64.pack(msg.offset)
    if isinstance(msg, FetchReq):
        return OP_FETCH, (
            _pack_string(msg.topic) + _U32.pack(msg.partition) + _U64.pack(msg.from_offset)
            + _U32.pack(msg.max_records) + _U32.pack(msg.timeout_ms)
        )
    if isinstance(msg, FetchResp):
        out = [_U32.pack(len(msg.records))]
        out.extend(encode_record(rec) for rec in msg.records)
        return OP_RESPONSE_BASE + OP_FETCH, b"".join(out)
    if isinstance(msg, CommitReq):
        return OP_COMMIT, (
            _pack_string(msg.group) + _pack_string(msg.topic)
            + _U32.pack(msg.partition) + _U64.pack(msg.offset)
        )
    if isinstance(msg, CommitResp):
        return OP_RESPONSE_BASE + OP_COMMIT, b""
    if isinstance(msg, AssignReq):
        out = [_pack_string(msg.group), _pack_string(msg.topic), _U16.pack(len(msg.members))]
        out.extend(_pack_string(m) for m in msg.members)
        return OP_ASSIGN, b"".join(out)
    if isinstance(msg, AssignResp):
        out = [_U32.pack(len(msg.assignment))]
        for partition, member in msg.assignment:
            out.append(_U32.pack(partition))
            out.append(_pack_string(member))
        return OP_RESPONSE_BASE + OP_ASSIGN, b"".join(out)
    if isinstance(msg, PutParamReq):
        return OP_PUT_PARAM, (
            _pack_string(msg.key) + _U8.pack(1 if msg.has_expected else 0)
            + _U64.pack(msg.expected_version) + _U32.pack(len(msg.blob)) + msg.blob
        )
    if isinstance(msg, PutParamResp):
        return OP_RESPONSE_BASE + OP_PUT_PARAM, _U64.pack(msg.version)
    if isinstance(msg, GetParamReq):
        return OP_GET_PARAM, (
            _pack_string(msg.key) + _U8.pack(1 if msg.has_min else 0)
            + _U64.pack(msg.min_version) + _U32.pack(msg.timeout_ms)
        )
    if isinstance(msg, GetParamResp):
        return OP_RESPONSE_BASE + OP_GET_PARAM, _U64.pack(msg.version) + _U32.pack(len(msg.blob)) + msg.blob
    if isinstance(msg, ErrorResp):
        return OP_ERROR, _U16.pack(msg.code) + _pack_string(msg.message)
    raise TypeError(f"cannot encode {type(msg).__name__}")


def encode_message(msg) -> bytes:
    op, body = _body(msg)
    return _U32.pack(1 + len(body)) + _U8.pack(op) + body


# ------------------------------------------------------------------ decode

def decode_payload(op: int, body: bytes):
    """Decode an op byte plus body into its message dataclass."""
    r = _Reader(body)
    if op == OP_CREATE_TOPIC:
        msg = CreateTopicReq(r.string(), r.u32(), r.u32())
    elif op == OP_RESPONSE_BASE + OP_CREATE_TOPIC:
        msg = CreateTopicResp(r.u32(), r.u32())
    elif op == OP_PRODUCE:
        topic = r.string()
        partition = r.u32()
        msg = ProduceReq(topic, partition, decode_record(r, partition))
    elif op == OP_RESPONSE_BASE + OP_PRODUCE:
        msg = ProduceResp(r.u64())
    elif op == OP_FETCH:
        msg = FetchReq(r.string(), r.u32(), r.u64(), r.u32(), r.u32())
    elif op == OP_RESPONSE_BASE + OP_FETCH:
        count = r.u32()
        msg = FetchResp(tuple(decode_record(r) for _ in range(count)))
    elif op == OP_COMMIT:
        msg = CommitReq(r.string(), r.string(), r.u32(), r.u64())
    elif op == OP_RESPONSE_BASE + OP_COMMIT:
        msg = CommitResp()
    elif op == OP_ASSIGN:
        group, topic = r.string(), r.string()
        count = r.u16()
        msg = AssignReq(group, topic, tuple(r.string() for _ in range(count)))
    elif op == OP_RESPONSE_BASE + OP_ASSIGN:
        count = r.u32()
        msg = AssignResp(tuple((r.u32(), r.string()) for _ in range(count)))
    elif op == OP_PUT_PARAM:
        key = r.string()
        has_expected = bool(r.u8())
        expected = r.u64()
        blob = r.blob32()
        msg = PutParamReq(key, blob, expected, has_expected)
    elif op == OP_RESPONSE_BASE + OP_PUT_PARAM:
        msg = PutParamResp(r.u64())
    elif op == OP_GET_PARAM:
        msg = GetParamReq(r.string(), *_get_param_tail(r))
    elif op == OP_RESPONSE_BASE + OP_GET_PARAM:
        version = r.u64()
        msg = GetParamResp(version, r.blob32())
    elif op == OP_ERROR:
        msg = ErrorResp(r.u16(), r.string())
    else:
        raise UnknownOpCode(f"op code {op}")
    r.done()
    return msg


def _get_param_tail(r: _Reader):
    has_min = bool(r.u8())
    min_version = r.u64()
    timeout_ms = r.u32()
    return min_version, has_min, timeout_ms


def decode_message(frame: bytes):
    """Decode a full frame (including the length prefix)."""
    if len(frame) < 5:
        raise TruncatedFrame("frame shorter than header")
    (length,) = _U32.unpack(frame[:4])
    if length != len(frame) - 4:
        raise TruncatedFrame(f"frame length field {length} != actual {len(frame) - 4}")
    return decode_payload(frame[4], frame[5:])


# ------------------------------------------------------------------ errors

_RETENTION_RE = re.compile(r"\[oldest_retained=(\d+)\]")
_CONFLICT_RE = re.compile(r"\[current_version=(\d+)\]")


def encode_error(exc: PilotEdgeError) -> ErrorResp:
    """Map an exception to an ERROR frame, folding structured payload into the text."""
    msg = str(exc)
    if isinstance(exc, OffsetOutOfRetention):
        msg += f" [oldest_retained={exc.oldest_retained}]"
    elif isinstance(exc, VersionConflict):
        msg += f" [current_version={exc.current_version}]"
    return ErrorResp(code=exc.code, message=msg)


def decode_error(resp: ErrorResp) -> PilotEdgeError:
    """Rebuild the typed exception, recovering structured payload fields."""
    exc = error_for_code(resp.code, resp.message)
    if isinstance(exc, OffsetOutOfRetention):
        m = _RETENTION_RE.search(resp.message)
        if m:
            exc.oldest_retained = int(m.group(1))
    elif isinstance(exc, VersionConflict):
        m = _CONFLICT_RE.search(resp.message)
        if m:
            exc.current_version = int(m.group(1))
    return exc
