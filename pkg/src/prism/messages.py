"""Protocol messages and their binary encoding.

Frame layout (network byte order for the header)::

    u32 length | u8 type | u64 query id | payload

``length`` counts everything after itself.  The payload is a sequence of
little-endian 64-bit words::

    sender, receiver, n_items, then per item: key, count, width, values...

Each value takes ``width`` words (least significant limb first), so residues
modulo a large ``max_modulus`` travel in the same framing as 64-bit ones.
"""
from __future__ import annotations

import enum
import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ProtocolError

HEADER = struct.Struct(">IBQ")
MAX_FRAME = 1 << 31


class MsgType(enum.IntEnum):
    STORE_SHARES = 1
    PSI_EVAL = 2
    PSU_EVAL = 3
    VOUT_EVAL = 4
    SUM_EVAL = 5
    MAX_ROUND = 6
    FPOS = 7
    RESULT = 8
    START = 9
    DONE = 10
    ERROR = 11
    SHUTDOWN = 12


_KIND_CODES = {"orchestrator": 0, "owner": 1, "server": 2, "announcer": 3}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


def role_code(role: str) -> int:
    for kind, code in _KIND_CODES.items():
        if role.startswith(kind):
            suffix = role[len(kind):]
            index = int(suffix) if suffix else 0
            return (code << 16) | index
    raise ProtocolError(f"unknown role {role!r}")


def role_name(code: int) -> str:
    kind = _KIND_NAMES.get(code >> 16)
    if kind is None:
        raise ProtocolError(f"unknown role code {code}")
    index = code & 0xFFFF
    return f"{kind}{index}" if kind in ("owner", "server") else kind


def role_kind(role: str) -> str:
    return role.rstrip("0123456789")


# item keys; "name.k" carries a sub-index k (aggregate column, tree level)
_KEYS = ("bits", "comp", "sum", "count", "out", "vout", "z", "cells", "level", "v", "shape",
         "max", "index", "alpha", "fpos", "spec", "selected", "phase", "seed", "json", "error")
_KEY_CODES = {k: i + 1 for i, k in enumerate(_KEYS)}


def _key_word(key: str) -> int:
    base, _, sub = key.partition(".")
    try:
        return (_KEY_CODES[base] << 32) | (int(sub) if sub else 0xFFFFFFFF)
    except KeyError:
        raise ProtocolError(f"unknown item key {key!r}") from None


def _key_name(word: int) -> str:
    base = _KEYS[(word >> 32) - 1]
    sub = word & 0xFFFFFFFF
    return base if sub == 0xFFFFFFFF else f"{base}.{sub}"


@dataclass
class RoundMessage:
    mtype: MsgType
    sender: str
    receiver: str
    query_id: int
    items: dict = field(default_factory=dict)

    def vector(self, key: str) -> np.ndarray:
        try:
            return self.items[key]
        except KeyError:
            raise ProtocolError(f"{self.mtype.name} from {self.sender} lacks {key!r}") from None

    def scalar(self, key: str) -> int:
        return int(self.vector(key)[0])

    def text(self, key: str) -> str:
        return bytes(int(x) for x in self.vector(key)).decode()

    def json(self, key: str = "json"):
        return json.loads(self.text(key))


def text_item(s: str) -> np.ndarray:
    return np.frombuffer(s.encode(), dtype=np.uint8).astype(np.int64)


def json_item(obj) -> np.ndarray:
    return text_item(json.dumps(obj, sort_keys=True, separators=(",", ":")))


def _as_ints(value) -> list:
    if isinstance(value, (int, np.integer)):
        return [int(value)]
    return [int(x) for x in np.asarray(value).ravel()]


def _encode_vector(value) -> bytes:
    arr = np.asarray(value) if not isinstance(value, (int, np.integer)) else np.asarray([value])
    if arr.dtype != object and arr.size and arr.min() < 0:
        raise ProtocolError("payload values must be non-negative")
    if arr.dtype != object:
        arr = arr.ravel()
        return struct.pack("<QQ", arr.size, 1) + arr.astype("<u8").tobytes()
    values = _as_ints(arr)
    if any(v < 0 for v in values):
        raise ProtocolError("payload values must be non-negative")
    top = max(values, default=0)
    width = max(1, (top.bit_length() + 63) // 64)
    if width == 1:
        return struct.pack("<QQ", len(values), 1) + np.asarray(values, dtype="<u8").tobytes()
    out = [struct.pack("<QQ", len(values), width)]
    mask = (1 << 64) - 1
    for v in values:
        out.append(struct.pack(f"<{width}Q", *((v >> (64 * i)) & mask for i in range(width))))
    return b"".join(out)


def encode_payload(msg: RoundMessage) -> bytes:
    parts = [struct.pack("<QQQ", role_code(msg.sender), role_code(msg.receiver), len(msg.items))]
    for key in sorted(msg.items, key=_key_word):
        parts.append(struct.pack("<Q", _key_word(key)))
        parts.append(_encode_vector(msg.items[key]))
    return b"".join(parts)


def decode_payload(mtype: int, query_id: int, payload: bytes) -> RoundMessage:
    if len(payload) % 8:
        raise ProtocolError("payload is not a whole number of 64-bit words")
    words = np.frombuffer(payload, dtype="<u8")
    try:
        sender, receiver, n_items = (int(w) for w in words[:3])
        pos = 3
        items = {}
        for _ in range(n_items):
            key = _key_name(int(words[pos]))
            count, width = int(words[pos + 1]), int(words[pos + 2])
            pos += 3
            chunk = words[pos:pos + count * width]
            if chunk.size != count * width:
                raise ProtocolError("truncated payload")
            pos += count * width
            if width == 1:
                if count and int(chunk.max()) >= (1 << 63):
                    items[key] = np.array([int(x) for x in chunk], dtype=object)
                else:
                    items[key] = chunk.astype(np.int64)
            else:
                vals = np.empty(count, dtype=object)
                limbs = chunk.reshape(count, width)
                for i in range(count):
                    vals[i] = sum(int(x) << (64 * j) for j, x in enumerate(limbs[i]))
                items[key] = vals
        if pos != words.size:
            raise ProtocolError("trailing words in payload")
        return RoundMessage(MsgType(mtype), role_name(sender), role_name(receiver), query_id, items)
    except (IndexError, ValueError) as exc:
        raise ProtocolError(f"malformed payload: {exc}") from exc


def encode_frame(msg: RoundMessage) -> bytes:
    payload = encode_payload(msg)
    return HEADER.pack(1 + 8 + len(payload), int(msg.mtype), msg.query_id) + payload


def decode_frame(frame: bytes) -> RoundMessage:
    if len(frame) < HEADER.size:
        raise ProtocolError("frame shorter than its header")
    length, mtype, qid = HEADER.unpack_from(frame)
    if length != len(frame) - 4:
        raise ProtocolError(f"frame length {length} does not match {len(frame) - 4} bytes")
    try:
        MsgType(mtype)
    except ValueError:
        raise ProtocolError(f"unknown message type {mtype}") from None
    return decode_payload(mtype, qid, frame[HEADER.size:])


def read_frame(sock) -> bytes:
    """Read exactly one frame from a blocking socket; ``b""`` on clean EOF."""
    head = _recv_exact(sock, 4, allow_eof=True)
    if not head:
        return b""
    (length,) = struct.unpack(">I", head)
    if length < 9 or length > MAX_FRAME:
        raise ProtocolError(f"bad frame length {length}")
    return head + _recv_exact(sock, length)


def _recv_exact(sock, n: int, allow_eof: bool = False) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(min(n - len(buf), 1 << 20))
        if not chunk:
            if allow_eof and not buf:
                return b""
            raise ProtocolError("connection closed mid-frame")
        buf += chunk
    return bytes(buf)


def digest(payload: bytes) -> int:
    """64-bit payload fingerprint for transcripts (not an integrity check)."""
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")
