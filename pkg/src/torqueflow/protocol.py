"""Wire protocol between the controller and the connected torque wrench.

Frames are strict JSON objects, one per line, LF-terminated, UTF-8, with keys
serialized in the fixed order (t, seq, ref, target_cnm, applied_cnm, peak_cnm,
ts_ms) and absent fields omitted. Every byte sequence either decodes to a
valid message or raises ProtocolError -- nothing is silently accepted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

from .scene import TORQUE_MAX_CNM, TORQUE_MIN_CNM

UINT32_MAX = 2**32 - 1
UINT64_MAX = 2**64 - 1

DEFAULT_WRENCH_PORT = 7401
HEARTBEAT_PERIOD_MS = 2000
HEARTBEAT_MISS_LIMIT = 3


class MsgType(str, Enum):
    SET_TARGET = "SET_TARGET"
    ACK = "ACK"
    TELEMETRY = "TELEMETRY"
    TARGET_REACHED = "TARGET_REACHED"
    NACK = "NACK"
    PING = "PING"
    PONG = "PONG"


class ProtocolError(ValueError):
    """Framing or validation failure; `offset` is the byte position in the frame."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(message)
        self.offset = offset


@dataclass(frozen=True)
class WrenchMessage:
    msg_type: MsgType
    seq: int
    ref: int | None = None
    target_cnm: int | None = None
    applied_cnm: int | None = None
    peak_cnm: int | None = None
    ts_ms: int | None = None


# Required / optional payload fields per message type. ts_ms may ride on any
# message; ref is mandatory on ACK/NACK and allowed on PONG.
_REQUIRED: dict[MsgType, tuple[str, ...]] = {
    MsgType.SET_TARGET: ("target_cnm",),
    MsgType.ACK: ("ref",),
    MsgType.NACK: ("ref",),
    MsgType.TELEMETRY: ("applied_cnm", "ts_ms"),
    MsgType.TARGET_REACHED: ("peak_cnm", "ts_ms"),
    MsgType.PING: (),
    MsgType.PONG: (),
}
_OPTIONAL: dict[MsgType, tuple[str, ...]] = {
    MsgType.SET_TARGET: ("ts_ms",),
    MsgType.ACK: ("ts_ms",),
    MsgType.NACK: ("ts_ms",),
    MsgType.TELEMETRY: (),
    MsgType.TARGET_REACHED: (),
    MsgType.PING: ("ts_ms",),
    MsgType.PONG: ("ref", "ts_ms"),
}

_KEY_ORDER = ("t", "seq", "ref", "target_cnm", "applied_cnm", "peak_cnm", "ts_ms")


def _check_uint(name: str, value, limit: int) -> None:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ProtocolError(f"{name} must be an integer, got {value!r}")
    if not (0 <= value <= limit):
        raise ProtocolError(f"{name} out of range: {value}")


def validate_message(msg: WrenchMessage) -> None:
    if not isinstance(msg.msg_type, MsgType):
        raise ProtocolError(f"unknown msg_type {msg.msg_type!r}")
    _check_uint("seq", msg.seq, UINT32_MAX)
    required = _REQUIRED[msg.msg_type]
    allowed = set(required) | set(_OPTIONAL[msg.msg_type])
    for name in ("ref", "target_cnm", "applied_cnm", "peak_cnm", "ts_ms"):
        value = getattr(msg, name)
        if value is None:
            if name in required:
                raise ProtocolError(f"{msg.msg_type.value} requires {name}")
            continue
        if name not in allowed:
            raise ProtocolError(f"{msg.msg_type.value} does not carry {name}")
    if msg.ref is not None:
        _check_uint("ref", msg.ref, UINT32_MAX)
    if msg.ts_ms is not None:
        _check_uint("ts_ms", msg.ts_ms, UINT64_MAX)
    if msg.target_cnm is not None:
        _check_uint("target_cnm", msg.target_cnm, UINT32_MAX)
        if not (TORQUE_MIN_CNM <= msg.target_cnm <= TORQUE_MAX_CNM):
            raise ProtocolError(
                f"target_cnm out of range: {msg.target_cnm} "
                f"(supported {TORQUE_MIN_CNM}..{TORQUE_MAX_CNM})"
            )
    if msg.applied_cnm is not None:
        _check_uint("applied_cnm", msg.applied_cnm, UINT32_MAX)
    if msg.peak_cnm is not None:
        _check_uint("peak_cnm", msg.peak_cnm, UINT32_MAX)


def encode(msg: WrenchMessage) -> bytes:
    """Serialize one message to its wire frame; refuses invalid messages."""
    validate_message(msg)
    obj: dict = {"t": msg.msg_type.value, "seq": msg.seq}
    for key in _KEY_ORDER[2:]:
        value = getattr(msg, "ref" if key == "ref" else key)
        if value is not None:
            obj[key] = value
    return json.dumps(obj, separators=(",", ":")).encode("utf-8") + b"\n"


def decode(buf: bytes) -> tuple[WrenchMessage | None, bytes]:
    """Consume exactly one LF-terminated frame from the head of `buf`.

    Returns (message, remaining bytes); (None, buf) when no complete frame is
    buffered yet. Malformed frames raise ProtocolError with the byte offset of
    the failure within the frame.
    """
    nl = buf.find(b"\n")
    if nl < 0:
        return None, buf
    frame, rest = buf[:nl], buf[nl + 1:]
    try:
        text = frame.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ProtocolError(f"frame is not valid UTF-8: {e}", offset=e.start) from e
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProtocolError(f"frame is not valid JSON: {e.msg}", offset=e.pos) from e
    if not isinstance(obj, dict):
        raise ProtocolError(f"frame must be a JSON object, got {type(obj).__name__}")
    unknown = set(obj) - set(_KEY_ORDER)
    if unknown:
        raise ProtocolError(f"unknown frame keys: {sorted(unknown)}")
    if "t" not in obj or "seq" not in obj:
        raise ProtocolError("frame missing 't' or 'seq'")
    try:
        msg_type = MsgType(obj["t"])
    except ValueError:
        raise ProtocolError(f"unknown msg_type {obj['t']!r}") from None
    msg = WrenchMessage(
        msg_type=msg_type,
        seq=obj["seq"],
        ref=obj.get("ref"),
        target_cnm=obj.get("target_cnm"),
        applied_cnm=obj.get("applied_cnm"),
        peak_cnm=obj.get("peak_cnm"),
        ts_ms=obj.get("ts_ms"),
    )
    validate_message(msg)
    return msg, rest
