"""Canonical byte encoding used by signatures, proofs, files and the wire.

Every variable-length field is prefixed with a 4-byte big-endian length.
Integers are unsigned, big-endian and minimal (no leading zero byte; zero
encodes as the empty string).  Keeping one encoding everywhere means the
bytes a signature covers are exactly the bytes that travel on the wire.
"""

from __future__ import annotations

from .errors import MalformedMessage

# Hard cap on any single length-prefixed field; matches the frame limit.
MAX_FIELD = 1 << 20


def enc_bytes(b: bytes) -> bytes:
    if len(b) > MAX_FIELD:
        raise ValueError(f"field of {len(b)} bytes exceeds {MAX_FIELD}")
    return len(b).to_bytes(4, "big") + b


def enc_int(v: int) -> bytes:
    """Length-prefixed minimal big-endian encoding of a non-negative int."""
    if v < 0:
        raise ValueError("cannot encode negative integer")
    return enc_bytes(v.to_bytes((v.bit_length() + 7) // 8, "big"))


def enc_str(s: str) -> bytes:
    return enc_bytes(s.encode("utf-8"))


def enc_u8(v: int) -> bytes:
    return v.to_bytes(1, "big")


def enc_u32(v: int) -> bytes:
    return v.to_bytes(4, "big")


class Reader:
    """Strict sequential decoder.  Raises MalformedMessage with the byte
    offset of the first problem; never reads past the end."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def fail(self, reason: str):
        raise MalformedMessage(self.pos, reason)

    def _take(self, k: int) -> bytes:
        if self.pos + k > len(self.data):
            self.fail(f"need {k} more bytes, have {len(self.data) - self.pos}")
        out = self.data[self.pos:self.pos + k]
        self.pos += k
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return int.from_bytes(self._take(4), "big")

    def lp_bytes(self) -> bytes:
        n = self.u32()
        if n > MAX_FIELD:
            self.fail(f"field length {n} exceeds {MAX_FIELD}")
        return self._take(n)

    def lp_int(self) -> int:
        raw = self.lp_bytes()
        if raw and raw[0] == 0:
            self.fail("non-minimal integer encoding")
        return int.from_bytes(raw, "big")

    def lp_str(self) -> str:
        raw = self.lp_bytes()
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            self.fail("invalid utf-8 in string field")

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def expect_end(self):
        if self.pos != len(self.data):
            self.fail(f"{self.remaining()} trailing bytes")
