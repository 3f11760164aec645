"""Binary message formats and transports between the four parties.

One byte of type tag, then the type's fields in the canonical encoding.
Frames are a 4-byte big-endian length followed by the payload, capped at
1 MiB.  Deliberately absent from every message: buyer identifiers, session
identifiers, step counters.  A step request looks exactly the same whether
it is the first unit of a purchase or the last.

The channel itself is assumed confidential and authenticated (the usual
TLS-shaped seam); both transports here deliver plaintext bytes and a
production deployment wraps the socket one accordingly.
"""

from __future__ import annotations

import queue
import socket
import threading
from dataclasses import dataclass, fields
from typing import ClassVar

from .encoding import Reader, enc_bytes, enc_int, enc_str, enc_u8, enc_u32
from .errors import (
    ConnectionClosed,
    MalformedMessage,
    OversizeFrame,
    UnknownMessageType,
    WireTimeout,
)

MAX_FRAME = 1 << 20

# receipt record on the wire: (seq, card_id, value, account)
ReceiptRec = tuple[int, str, int, str]


def _enc_card_id(cid: str) -> bytes:
    try:
        return enc_bytes(bytes.fromhex(cid))
    except ValueError:
        raise ValueError(f"card id {cid!r} is not hex")


class Message:
    TYPE: ClassVar[int] = 0

    def encode_body(self) -> bytes:
        raise NotImplementedError

    @classmethod
    def decode_body(cls, r: Reader) -> "Message":
        raise NotImplementedError


@dataclass(frozen=True)
class CardIssue(Message):
    TYPE: ClassVar[int] = 1
    count: int
    value: int

    def encode_body(self):
        return enc_u32(self.count) + enc_u32(self.value)

    @classmethod
    def decode_body(cls, r):
        return cls(count=r.u32(), value=r.u32())


@dataclass(frozen=True)
class CardDistribute(Message):
    TYPE: ClassVar[int] = 2
    card_ids: tuple[str, ...]
    store_id: str

    def encode_body(self):
        out = enc_u32(len(self.card_ids))
        for cid in self.card_ids:
            out += _enc_card_id(cid)
        return out + enc_str(self.store_id)

    @classmethod
    def decode_body(cls, r):
        ids = tuple(r.lp_bytes().hex() for _ in range(r.u32()))
        return cls(card_ids=ids, store_id=r.lp_str())


@dataclass(frozen=True)
class CardSpend(Message):
    TYPE: ClassVar[int] = 3
    card_ids: tuple[str, ...]
    account: str

    def encode_body(self):
        out = enc_u32(len(self.card_ids))
        for cid in self.card_ids:
            out += _enc_card_id(cid)
        return out + enc_str(self.account)

    @classmethod
    def decode_body(cls, r):
        ids = tuple(r.lp_bytes().hex() for _ in range(r.u32()))
        return cls(card_ids=ids, account=r.lp_str())


@dataclass(frozen=True)
class SpendOk(Message):
    TYPE: ClassVar[int] = 4
    receipts: tuple[ReceiptRec, ...]

    def encode_body(self):
        out = enc_u32(len(self.receipts))
        for seq, cid, value, account in self.receipts:
            out += enc_int(seq) + _enc_card_id(cid) + enc_u32(value) + enc_str(account)
        return out

    @classmethod
    def decode_body(cls, r):
        n = r.u32()
        recs = tuple((r.lp_int(), r.lp_bytes().hex(), r.u32(), r.lp_str())
                     for _ in range(n))
        return cls(receipts=recs)


@dataclass(frozen=True)
class SpendErr(Message):
    TYPE: ClassVar[int] = 5
    code: str
    detail: str
    prior_seq: int = 0  # 0 when not applicable

    def encode_body(self):
        return enc_str(self.code) + enc_str(self.detail) + enc_int(self.prior_seq)

    @classmethod
    def decode_body(cls, r):
        return cls(code=r.lp_str(), detail=r.lp_str(), prior_seq=r.lp_int())


@dataclass(frozen=True)
class StepReq(Message):
    TYPE: ClassVar[int] = 6
    card_ids: tuple[str, ...]
    m: int

    def encode_body(self):
        out = enc_u32(len(self.card_ids))
        for cid in self.card_ids:
            out += _enc_card_id(cid)
        return out + enc_int(self.m)

    @classmethod
    def decode_body(cls, r):
        ids = tuple(r.lp_bytes().hex() for _ in range(r.u32()))
        return cls(card_ids=ids, m=r.lp_int())


@dataclass(frozen=True)
class StepResp(Message):
    TYPE: ClassVar[int] = 7
    m_out: int
    signature: bytes

    def encode_body(self):
        return enc_int(self.m_out) + enc_bytes(self.signature)

    @classmethod
    def decode_body(cls, r):
        return cls(m_out=r.lp_int(), signature=r.lp_bytes())


@dataclass(frozen=True)
class StepErr(Message):
    TYPE: ClassVar[int] = 8
    code: str
    detail: str

    def encode_body(self):
        return enc_str(self.code) + enc_str(self.detail)

    @classmethod
    def decode_body(cls, r):
        return cls(code=r.lp_str(), detail=r.lp_str())


@dataclass(frozen=True)
class CatalogGet(Message):
    TYPE: ClassVar[int] = 9

    def encode_body(self):
        return b""

    @classmethod
    def decode_body(cls, r):
        return cls()


@dataclass(frozen=True)
class CatalogDoc(Message):
    TYPE: ClassVar[int] = 10
    text: str

    def encode_body(self):
        return enc_str(self.text)

    @classmethod
    def decode_body(cls, r):
        return cls(text=r.lp_str())


def _enc_proof4(vals: tuple[int, int, int, int]) -> bytes:
    return b"".join(enc_int(v) for v in vals)


def _dec_proof4(r: Reader) -> tuple[int, int, int, int]:
    return (r.lp_int(), r.lp_int(), r.lp_int(), r.lp_int())


@dataclass(frozen=True)
class DisputeCaseFile(Message):
    TYPE: ClassVar[int] = 16
    kind: str
    case_text: str

    def encode_body(self):
        return enc_str(self.kind) + enc_str(self.case_text)

    @classmethod
    def decode_body(cls, r):
        return cls(kind=r.lp_str(), case_text=r.lp_str())


@dataclass(frozen=True)
class DisputeVerdict(Message):
    TYPE: ClassVar[int] = 17
    outcome: str
    rationale: str
    checked_steps: int

    def encode_body(self):
        return enc_str(self.outcome) + enc_str(self.rationale) + enc_u32(self.checked_steps)

    @classmethod
    def decode_body(cls, r):
        return cls(outcome=r.lp_str(), rationale=r.lp_str(), checked_steps=r.u32())


@dataclass(frozen=True)
class DisputeValuesReq(Message):
    TYPE: ClassVar[int] = 18
    m: int
    t: int

    def encode_body(self):
        return enc_int(self.m) + enc_u32(self.t)

    @classmethod
    def decode_body(cls, r):
        return cls(m=r.lp_int(), t=r.u32())


@dataclass(frozen=True)
class DisputeValues(Message):
    TYPE: ClassVar[int] = 19
    m: int
    m_out: int
    signature: bytes

    def encode_body(self):
        return enc_int(self.m) + enc_int(self.m_out) + enc_bytes(self.signature)

    @classmethod
    def decode_body(cls, r):
        return cls(m=r.lp_int(), m_out=r.lp_int(), signature=r.lp_bytes())


@dataclass(frozen=True)
class DisputeProofReq(Message):
    TYPE: ClassVar[int] = 20
    base1: int
    y1: int
    base2: int
    y2: int
    t: int

    def encode_body(self):
        return (enc_int(self.base1) + enc_int(self.y1) + enc_int(self.base2)
                + enc_int(self.y2) + enc_u32(self.t))

    @classmethod
    def decode_body(cls, r):
        return cls(base1=r.lp_int(), y1=r.lp_int(), base2=r.lp_int(),
                   y2=r.lp_int(), t=r.u32())


@dataclass(frozen=True)
class DisputeProof(Message):
    TYPE: ClassVar[int] = 21
    commitment_a: int
    commitment_b: int
    challenge: int
    response: int

    def encode_body(self):
        return _enc_proof4((self.commitment_a, self.commitment_b,
                            self.challenge, self.response))

    @classmethod
    def decode_body(cls, r):
        a, b, c, z = _dec_proof4(r)
        return cls(commitment_a=a, commitment_b=b, challenge=c, response=z)


@dataclass(frozen=True)
class DisputeChainReq(Message):
    TYPE: ClassVar[int] = 22
    license_id: str

    def encode_body(self):
        return enc_str(self.license_id)

    @classmethod
    def decode_body(cls, r):
        return cls(license_id=r.lp_str())


@dataclass(frozen=True)
class DisputeChain(Message):
    TYPE: ClassVar[int] = 23
    license_id: str
    chain: tuple[int, ...]
    link_proofs: tuple[tuple[int, int, int, int], ...]

    def encode_body(self):
        out = enc_str(self.license_id) + enc_u32(len(self.chain))
        for c in self.chain:
            out += enc_int(c)
        out += enc_u32(len(self.link_proofs))
        for pr in self.link_proofs:
            out += _enc_proof4(pr)
        return out

    @classmethod
    def decode_body(cls, r):
        license_id = r.lp_str()
        chain = tuple(r.lp_int() for _ in range(r.u32()))
        proofs = tuple(_dec_proof4(r) for _ in range(r.u32()))
        return cls(license_id=license_id, chain=chain, link_proofs=proofs)


MESSAGE_TYPES: dict[int, type[Message]] = {
    cls.TYPE: cls for cls in (
        CardIssue, CardDistribute, CardSpend, SpendOk, SpendErr,
        StepReq, StepResp, StepErr, CatalogGet, CatalogDoc,
        DisputeCaseFile, DisputeVerdict, DisputeValuesReq, DisputeValues,
        DisputeProofReq, DisputeProof, DisputeChainReq, DisputeChain,
    )
}


def message_field_names() -> dict[str, tuple[str, ...]]:
    """Field vocabulary of every message type, for schema audits."""
    return {cls.__name__: tuple(f.name for f in fields(cls))
            for cls in MESSAGE_TYPES.values()}


def encode(msg: Message) -> bytes:
    return enc_u8(msg.TYPE) + msg.encode_body()


def decode(data: bytes) -> Message:
    """Parse one message.  Any defect raises MalformedMessage (with the
    byte offset) or a subclass; arbitrary input never crashes differently."""
    r = Reader(data)
    if not data:
        r.fail("empty message")
    tag = r.u8()
    cls = MESSAGE_TYPES.get(tag)
    if cls is None:
        raise UnknownMessageType(0, tag)
    msg = cls.decode_body(r)
    r.expect_end()
    return msg


# --- framing --------------------------------------------------------------------

def frame(payload: bytes) -> bytes:
    if len(payload) > MAX_FRAME:
        raise OversizeFrame(len(payload), MAX_FRAME)
    return len(payload).to_bytes(4, "big") + payload


class FrameDecoder:
    """Incremental frame reassembly; feed it chunks split anywhere."""

    def __init__(self):
        self._buf = b""

    def feed(self, data: bytes) -> list[bytes]:
        self._buf += data
        out = []
        while len(self._buf) >= 4:
            length = int.from_bytes(self._buf[:4], "big")
            if length > MAX_FRAME:
                raise OversizeFrame(length, MAX_FRAME)
            if len(self._buf) < 4 + length:
                break
            out.append(self._buf[4:4 + length])
            self._buf = self._buf[4 + length:]
        return out


# --- transports -------------------------------------------------------------------

class MemoryEndpoint:
    """One side of an in-process connection.  Messages still round-trip
    through the codec and framing, so byte counts are real."""

    def __init__(self):
        self._inbox: queue.Queue[bytes | None] = queue.Queue()
        self._peer: "MemoryEndpoint | None" = None
        self._closed = False

    @staticmethod
    def pair() -> tuple["MemoryEndpoint", "MemoryEndpoint"]:
        a, b = MemoryEndpoint(), MemoryEndpoint()
        a._peer, b._peer = b, a
        return a, b

    def send(self, msg: Message):
        if self._closed or self._peer is None:
            raise ConnectionClosed("endpoint closed")
        self._peer._inbox.put(frame(encode(msg)))

    def recv(self, timeout: float = 5.0) -> Message:
        try:
            raw = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise WireTimeout(f"no message within {timeout}s")
        if raw is None:
            raise ConnectionClosed("peer closed the connection")
        dec = FrameDecoder()
        frames = dec.feed(raw)
        return decode(frames[0])

    def close(self):
        if not self._closed:
            self._closed = True
            if self._peer is not None:
                self._peer._inbox.put(None)


class SocketEndpoint:
    """One TCP connection carrying framed messages."""

    def __init__(self, sock: socket.socket, timeout: float = 5.0):
        self._sock = sock
        self._sock.settimeout(timeout)
        self._decoder = FrameDecoder()
        self._ready: list[bytes] = []

    def send(self, msg: Message):
        try:
            self._sock.sendall(frame(encode(msg)))
        except (BrokenPipeError, ConnectionResetError, OSError) as exc:
            raise ConnectionClosed(str(exc))

    def recv(self) -> Message:
        while not self._ready:
            try:
                chunk = self._sock.recv(65536)
            except socket.timeout:
                raise WireTimeout("receive timed out")
            except OSError as exc:
                raise ConnectionClosed(str(exc))
            if not chunk:
                raise ConnectionClosed("peer closed the connection")
            self._ready.extend(self._decoder.feed(chunk))
        return decode(self._ready.pop(0))

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass


def connect(host: str, port: int, timeout: float = 5.0) -> SocketEndpoint:
    return SocketEndpoint(socket.create_connection((host, port), timeout=timeout),
                          timeout=timeout)


class Server:
    """Threaded request/response server: one handler call per message, one
    connection per dialogue, no state shared between connections."""

    def __init__(self, host: str, port: int, handle):
        self._handle = handle
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(32)
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()

    def start(self) -> "Server":
        self._thread.start()
        return self

    def _accept_loop(self):
        self._sock.settimeout(0.2)
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            threading.Thread(target=self._serve_conn, args=(conn,), daemon=True).start()

    def _serve_conn(self, conn: socket.socket):
        ep = SocketEndpoint(conn, timeout=30.0)
        try:
            while not self._stop.is_set():
                try:
                    msg = ep.recv()
                except (ConnectionClosed, WireTimeout, OversizeFrame):
                    break
                except MalformedMessage as exc:
                    ep.send(StepErr(code="malformed", detail=str(exc)))
                    continue
                try:
                    reply = self._handle(msg)
                except MalformedMessage as exc:
                    reply = StepErr(code="malformed", detail=str(exc))
                if reply is not None:
                    ep.send(reply)
        except ConnectionClosed:
            pass
        finally:
            ep.close()

    def stop(self):
        self._stop.set()
        try:
            self._sock.close()
        except OSError:
            pass
        self._thread.join(timeout=2.0)
