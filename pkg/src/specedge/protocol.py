"""Length-prefixed binary framing for the draft/verify session.

Frame: ``length:u32 | msg_type:u8 | payload[length]``, all integers big-endian.
``length`` counts payload bytes only.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import DecodeError
from .specdec import DraftBatch

PROTOCOL_VERSION = 1

HELLO = 1
DRAFT_SUBMIT = 2
EXIT_OUTPUT = 3
FINAL_OUTPUT = 4
END = 5
ERROR = 6
AR_REQUEST = 7

HEADER = struct.Struct(">IB")
MAX_PAYLOAD = 64 * 1024 * 1024
MAX_FULL_VOCAB = 1024


@dataclass(frozen=True)
class Hello:
    version: int
    vocab: int
    num_exits: int
    gamma: int
    prompt: tuple[int, ...] = ()


@dataclass(frozen=True)
class ExitOutput:
    round_id: int
    exit_index: int
    accepted: int
    tokens: tuple[int, ...]
    score: float
    isfinal: bool


@dataclass(frozen=True)
class End:
    round_id: int


@dataclass(frozen=True)
class Error:
    round_id: int
    reason: str


@dataclass(frozen=True)
class ArRequest:
    round_id: int
    n: int


def _u32s(values) -> bytes:
    return struct.pack(f">{len(values)}I", *values)


def _f32s(values) -> bytes:
    return struct.pack(f">{len(values)}f", *values)


def encode_payload(msg) -> tuple[int, bytes]:
    if isinstance(msg, ExitOutput):
        if len(msg.tokens) != msg.accepted + 1:
            raise ValueError("exit output must carry accepted + 1 tokens")
        body = (struct.pack(">IHH", msg.round_id, msg.exit_index, msg.accepted)
                + _u32s(msg.tokens) + struct.pack(">fB", msg.score, 1 if msg.isfinal else 0))
        return (FINAL_OUTPUT if msg.isfinal else EXIT_OUTPUT), body
    if isinstance(msg, DraftBatch):
        head = struct.pack(">IIHB", msg.round_id, msg.prefix_len, msg.gamma, 1 if msg.full else 0)
        if msg.full:
            flat = [v for dist in msg.per_token for v in dist]
            if msg.per_token and len(msg.per_token[0]) > MAX_FULL_VOCAB:
                raise ValueError(f"full-distribution payload limited to vocab <= {MAX_FULL_VOCAB}")
            probs = _f32s(flat)
        else:
            probs = _f32s(msg.per_token)
        return DRAFT_SUBMIT, head + _u32s(msg.tokens) + probs
    if isinstance(msg, Hello):
        return HELLO, (struct.pack(">HIHH", msg.version, msg.vocab, msg.num_exits, msg.gamma)
                       + struct.pack(">I", len(msg.prompt)) + _u32s(msg.prompt))
    if isinstance(msg, End):
        return END, struct.pack(">I", msg.round_id)
    if isinstance(msg, Error):
        return ERROR, struct.pack(">I", msg.round_id) + msg.reason.encode("utf-8")
    if isinstance(msg, ArRequest):
        return AR_REQUEST, struct.pack(">II", msg.round_id, msg.n)
    raise TypeError(f"cannot encode {type(msg).__name__}")


def encode_frame(msg) -> bytes:
    msg_type, payload = encode_payload(msg)
    return HEADER.pack(len(payload), msg_type) + payload


def _need(payload: bytes, size: int, what: str):
    if len(payload) != size:
        raise DecodeError(f"{what}: expected {size} payload bytes, got {len(payload)}")


def decode_payload(msg_type: int, payload: bytes):
    try:
        if msg_type in (EXIT_OUTPUT, FINAL_OUTPUT):
            if len(payload) < 13:
                raise DecodeError("exit output truncated")
            round_id, exit_index, delta = struct.unpack_from(">IHH", payload)
            _need(payload, 13 + 4 * (delta + 1), "exit output")
            tokens = struct.unpack_from(f">{delta + 1}I", payload, 8)
            score, isfinal = struct.unpack_from(">fB", payload, 8 + 4 * (delta + 1))
            if isfinal not in (0, 1) or bool(isfinal) != (msg_type == FINAL_OUTPUT):
                raise DecodeError("isfinal flag disagrees with message type")
            return ExitOutput(round_id, exit_index, delta, tokens, score, bool(isfinal))
        if msg_type == DRAFT_SUBMIT:
            if len(payload) < 11:
                raise DecodeError("draft batch truncated")
            round_id, prefix_len, gamma, mode = struct.unpack_from(">IIHB", payload)
            if mode not in (0, 1):
                raise DecodeError(f"unknown probability mode {mode}")
            off = 11 + 4 * gamma
            if len(payload) < off:
                raise DecodeError("draft tokens truncated")
            tokens = struct.unpack_from(f">{gamma}I", payload, 11)
            rest = len(payload) - off
            if mode == 0:
                _need(payload, off + 4 * gamma, "compact draft batch")
                per_token = struct.unpack_from(f">{gamma}f", payload, off)
            else:
                if gamma == 0:
                    _need(payload, off, "full draft batch")
                    per_token = ()
                else:
                    if rest % (4 * gamma):
                        raise DecodeError("full draft batch: ragged distributions")
                    vocab = rest // (4 * gamma)
                    flat = struct.unpack_from(f">{gamma * vocab}f", payload, off)
                    per_token = tuple(flat[k * vocab:(k + 1) * vocab] for k in range(gamma))
            return DraftBatch(round_id, prefix_len, tokens, tuple(per_token), mode == 1)
        if msg_type == HELLO:
            if len(payload) < 14:
                raise DecodeError("hello truncated")
            version, vocab, num_exits, gamma, count = struct.unpack_from(">HIHHI", payload)
            _need(payload, 14 + 4 * count, "hello")
            return Hello(version, vocab, num_exits, gamma, struct.unpack_from(f">{count}I", payload, 14))
        if msg_type == END:
            _need(payload, 4, "end")
            return End(struct.unpack(">I", payload)[0])
        if msg_type == ERROR:
            if len(payload) < 4:
                raise DecodeError("error truncated")
            return Error(struct.unpack_from(">I", payload)[0], payload[4:].decode("utf-8"))
        if msg_type == AR_REQUEST:
            _need(payload, 8, "ar request")
            return ArRequest(*struct.unpack(">II", payload))
    except (struct.error, UnicodeDecodeError) as exc:
        raise DecodeError(str(exc)) from exc
    raise DecodeError(f"unknown msg_type {msg_type}")


def decode_frame(data: bytes):
    """Decode exactly one frame; trailing or missing bytes are errors."""
    if len(data) < HEADER.size:
        raise DecodeError("frame header truncated")
    length, msg_type = HEADER.unpack_from(data)
    if len(data) - HEADER.size < length:
        raise DecodeError(f"declared length {length} exceeds available {len(data) - HEADER.size} bytes")
    if len(data) - HEADER.size > length:
        raise DecodeError("trailing bytes after frame")
    return decode_payload(msg_type, bytes(data[HEADER.size:]))


def read_frame(recv_exact):
    """Read one frame using ``recv_exact(n) -> bytes``; returns None on clean EOF."""
    header = recv_exact(HEADER.size)
    if header is None:
        return None
    length, msg_type = HEADER.unpack(header)
    if length > MAX_PAYLOAD:
        raise DecodeError(f"frame too large: {length}")
    payload = recv_exact(length) if length else b""
    if payload is None:
        raise DecodeError("connection closed mid-frame")
    return decode_payload(msg_type, payload)
