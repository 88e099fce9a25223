"""Framed byte-stream transport running the protocol as two endpoints.

Frame layout: a 32-bit big-endian length (tag byte + payload), one tag
byte, then the payload. Integers are big-endian; bit arrays are packed
most significant bit first. The quantum channel is simulated on the
sender side: the receiver submits basis choices and gets loss flags and
outcomes back, which preserves every protocol statistic but makes this a
protocol-flow and interoperability vehicle, not a security boundary.

Message flow: HELLO, then batches of PHOTON_BATCH_REQ / MEASURE_SUBMIT /
OUTCOME_BATCH until k*N photons are retained, then DECLARATION, SIFT_ACK,
SHIFT and CIPHERTEXT. Any out-of-order or malformed frame aborts the
session with an ERROR frame.
"""

import socket
import struct
import threading
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import CapacityError, ProtocolAbort, QpqError
from .protocol import (
    SessionConfig,
    SessionReport,
    FinalKey,
    QueryExchange,
    RawKey,
    draw_bases,
    query_stream,
    sift_batch,
    simulate_batch,
    stream,
    xor_compress,
)

MAX_FRAME_LENGTH = 1 << 24  # tag byte + payload
WIRE_BATCH = 4096           # photons per round, bounds frame sizes

ERR_ORDER = 1
ERR_BAD_PARAMS = 2
ERR_DECODE = 3
ERR_SESSION_FAILED = 4

_HEADER = struct.Struct(">IB")
_HELLO = struct.Struct(">dIHd")
_U32 = struct.Struct(">I")


class FrameDecodeError(QpqError, ValueError):
    """A frame or payload could not be parsed."""


class MsgType(IntEnum):
    HELLO = 0x01
    PHOTON_BATCH_REQ = 0x02
    MEASURE_SUBMIT = 0x03
    OUTCOME_BATCH = 0x04
    DECLARATION = 0x05
    SIFT_ACK = 0x06
    SHIFT = 0x07
    CIPHERTEXT = 0x08
    ERROR = 0x7F


def _pack_bits(bits):
    bits = np.asarray(bits, dtype=np.uint8)
    return _U32.pack(bits.size) + np.packbits(bits).tobytes()


def _unpack_bits(payload, offset):
    if len(payload) < offset + 4:
        raise FrameDecodeError("truncated bit array header")
    (count,) = _U32.unpack_from(payload, offset)
    nbytes = (count + 7) // 8
    start = offset + 4
    if len(payload) < start + nbytes:
        raise FrameDecodeError("truncated bit array body")
    packed = np.frombuffer(payload[start:start + nbytes], dtype=np.uint8)
    bits = np.unpackbits(packed)[:count].astype(np.uint8)
    return bits, start + nbytes


@dataclass(eq=False)
class Hello:
    TAG = MsgType.HELLO
    theta: float
    n_items: int
    substrings: int
    loss_rate: float

    def encode_payload(self):
        return _HELLO.pack(self.theta, self.n_items, self.substrings, self.loss_rate)

    @classmethod
    def decode_payload(cls, payload):
        if len(payload) != _HELLO.size:
            raise FrameDecodeError(f"HELLO payload must be {_HELLO.size} bytes")
        theta, n_items, substrings, loss_rate = _HELLO.unpack(payload)
        return cls(theta=theta, n_items=n_items, substrings=substrings, loss_rate=loss_rate)

    def __eq__(self, other):
        return (
            isinstance(other, Hello)
            and self.theta == other.theta
            and self.n_items == other.n_items
            and self.substrings == other.substrings
            and self.loss_rate == other.loss_rate
        )


@dataclass(eq=False)
class PhotonBatchReq:
    TAG = MsgType.PHOTON_BATCH_REQ
    count: int

    def encode_payload(self):
        return _U32.pack(self.count)

    @classmethod
    def decode_payload(cls, payload):
        if len(payload) != 4:
            raise FrameDecodeError("PHOTON_BATCH_REQ payload must be 4 bytes")
        return cls(count=_U32.unpack(payload)[0])

    def __eq__(self, other):
        return isinstance(other, PhotonBatchReq) and self.count == other.count


@dataclass(eq=False)
class MeasureSubmit:
    TAG = MsgType.MEASURE_SUBMIT
    bases: np.ndarray

    def encode_payload(self):
        return _pack_bits(self.bases)

    @classmethod
    def decode_payload(cls, payload):
        bits, end = _unpack_bits(payload, 0)
        if end != len(payload):
            raise FrameDecodeError("trailing bytes after MEASURE_SUBMIT bases")
        return cls(bases=bits)

    def __eq__(self, other):
        return isinstance(other, MeasureSubmit) and np.array_equal(self.bases, other.bases)


@dataclass(eq=False)
class OutcomeBatch:
    TAG = MsgType.OUTCOME_BATCH
    received: np.ndarray
    outcomes: np.ndarray

    def encode_payload(self):
        return _pack_bits(self.received) + _pack_bits(self.outcomes)

    @classmethod
    def decode_payload(cls, payload):
        received, offset = _unpack_bits(payload, 0)
        outcomes, end = _unpack_bits(payload, offset)
        if end != len(payload):
            raise FrameDecodeError("trailing bytes after OUTCOME_BATCH")
        if received.size != outcomes.size:
            raise FrameDecodeError("OUTCOME_BATCH flag/outcome length mismatch")
        return cls(received=received.astype(bool), outcomes=outcomes)

    def __eq__(self, other):
        return (
            isinstance(other, OutcomeBatch)
            and np.array_equal(self.received, other.received)
            and np.array_equal(self.outcomes, other.outcomes)
        )


@dataclass(eq=False)
class Declaration:
    TAG = MsgType.DECLARATION
    letters: np.ndarray

    def encode_payload(self):
        return _pack_bits(self.letters)

    @classmethod
    def decode_payload(cls, payload):
        bits, end = _unpack_bits(payload, 0)
        if end != len(payload):
            raise FrameDecodeError("trailing bytes after DECLARATION")
        return cls(letters=bits)

    def __eq__(self, other):
        return isinstance(other, Declaration) and np.array_equal(self.letters, other.letters)


@dataclass(eq=False)
class SiftAck:
    TAG = MsgType.SIFT_ACK
    conclusive_count: int

    def encode_payload(self):
        return _U32.pack(self.conclusive_count)

    @classmethod
    def decode_payload(cls, payload):
        if len(payload) != 4:
            raise FrameDecodeError("SIFT_ACK payload must be 4 bytes")
        return cls(conclusive_count=_U32.unpack(payload)[0])

    def __eq__(self, other):
        return isinstance(other, SiftAck) and self.conclusive_count == other.conclusive_count


@dataclass(eq=False)
class Shift:
    TAG = MsgType.SHIFT
    shift: int

    def encode_payload(self):
        return _U32.pack(self.shift)

    @classmethod
    def decode_payload(cls, payload):
        if len(payload) != 4:
            raise FrameDecodeError("SHIFT payload must be 4 bytes")
        return cls(shift=_U32.unpack(payload)[0])

    def __eq__(self, other):
        return isinstance(other, Shift) and self.shift == other.shift


@dataclass(eq=False)
class Ciphertext:
    TAG = MsgType.CIPHERTEXT
    bits: np.ndarray

    def encode_payload(self):
        return _pack_bits(self.bits)

    @classmethod
    def decode_payload(cls, payload):
        bits, end = _unpack_bits(payload, 0)
        if end != len(payload):
            raise FrameDecodeError("trailing bytes after CIPHERTEXT")
        return cls(bits=bits)

    def __eq__(self, other):
        return isinstance(other, Ciphertext) and np.array_equal(self.bits, other.bits)


@dataclass(eq=False)
class Error:
    TAG = MsgType.ERROR
    code: int
    message: str

    def encode_payload(self):
        return bytes([self.code]) + self.message.encode("utf-8")

    @classmethod
    def decode_payload(cls, payload):
        if len(payload) < 1:
            raise FrameDecodeError("ERROR payload must carry a code byte")
        return cls(code=payload[0], message=payload[1:].decode("utf-8", "replace"))

    def __eq__(self, other):
        return (
            isinstance(other, Error)
            and self.code == other.code
            and self.message == other.message
        )


MESSAGE_TYPES = {
    cls.TAG: cls
    for cls in (
        Hello,
        PhotonBatchReq,
        MeasureSubmit,
        OutcomeBatch,
        Declaration,
        SiftAck,
        Shift,
        Ciphertext,
        Error,
    )
}


def encode_frame(msg):
    payload = msg.encode_payload()
    length = 1 + len(payload)
    if length > MAX_FRAME_LENGTH:
        raise CapacityError(f"frame length {length} exceeds the {MAX_FRAME_LENGTH} cap")
    return _HEADER.pack(length, int(msg.TAG)) + payload


def decode_frame(data):
    if len(data) < _HEADER.size:
        raise FrameDecodeError("truncated frame header")
    length, tag = _HEADER.unpack_from(data, 0)
    if length > MAX_FRAME_LENGTH:
        raise CapacityError(f"frame length {length} exceeds the {MAX_FRAME_LENGTH} cap")
    if len(data) != 4 + length:
        raise FrameDecodeError(f"frame body holds {len(data) - 5} bytes, header says {length - 1}")
    cls = MESSAGE_TYPES.get(tag)
    if cls is None:
        raise FrameDecodeError(f"unknown message type 0x{tag:02x}")
    return cls.decode_payload(data[5:])


class FrameStream:
    """Blocking framed message transport over a connected byte stream.

    The optional audit hook is called as audit(direction, msg) with
    direction "send" or "recv" for every frame this endpoint handles.
    """

    def __init__(self, conn, audit=None):
        self._conn = conn
        self._audit = audit

    def send(self, msg):
        if self._audit is not None:
            self._audit("send", msg)
        try:
            self._conn.sendall(encode_frame(msg))
        except OSError as exc:
            raise self._disconnected(exc)

    def _disconnected(self, exc):
        # a closing peer usually left an ERROR frame in the buffer; surface
        # it so the caller sees the real cause instead of a broken pipe
        try:
            header = self._read_exact(_HEADER.size)
            length, tag = _HEADER.unpack(header)
            if tag == MsgType.ERROR and 1 <= length <= MAX_FRAME_LENGTH:
                err = Error.decode_payload(self._read_exact(length - 1))
                return ProtocolAbort(
                    f"peer error {err.code}: {err.message}", code=err.code
                )
        except Exception:
            pass
        return ProtocolAbort(f"peer disconnected: {exc}")

    def _read_exact(self, count):
        chunks = []
        got = 0
        while got < count:
            try:
                chunk = self._conn.recv(count - got)
            except OSError as exc:
                raise ProtocolAbort(f"connection lost mid-frame: {exc}")
            if not chunk:
                raise ProtocolAbort("peer disconnected mid-frame")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def recv(self):
        header = self._read_exact(_HEADER.size)
        length, tag = _HEADER.unpack(header)
        if length > MAX_FRAME_LENGTH:
            raise ProtocolAbort(f"oversize frame announced ({length} bytes)", code=ERR_DECODE)
        body = self._read_exact(length - 1) if length > 1 else b""
        cls = MESSAGE_TYPES.get(tag)
        if cls is None:
            self.send(Error(code=ERR_DECODE, message=f"unknown message type 0x{tag:02x}"))
            raise ProtocolAbort(f"unknown message type 0x{tag:02x}", code=ERR_DECODE)
        try:
            msg = cls.decode_payload(body)
        except FrameDecodeError as exc:
            self.send(Error(code=ERR_DECODE, message=str(exc)))
            raise ProtocolAbort(f"frame decode failed: {exc}", code=ERR_DECODE)
        if self._audit is not None:
            self._audit("recv", msg)
        return msg

    def expect(self, *allowed):
        msg = self.recv()
        if isinstance(msg, Error):
            raise ProtocolAbort(f"peer error {msg.code}: {msg.message}", code=msg.code)
        if not isinstance(msg, allowed):
            names = "/".join(c.__name__ for c in allowed)
            self.send(
                Error(code=ERR_ORDER, message=f"expected {names}, got {type(msg).__name__}")
            )
            raise ProtocolAbort(
                f"phase violation: expected {names}, got {type(msg).__name__}",
                code=ERR_ORDER,
            )
        return msg

    def fail(self, code, message):
        self.send(Error(code=code, message=message))
        raise ProtocolAbort(message, code=code)


@dataclass
class BobWireResult:
    report: SessionReport
    raw_bits: np.ndarray
    final_bits: np.ndarray


@dataclass
class AliceWireResult:
    report: SessionReport
    final: FinalKey
    retrieved_bit: int


def _hello_matches(hello, config):
    return (
        hello.theta == config.theta
        and hello.n_items == config.n_items
        and hello.substrings == config.substrings
        and hello.loss_rate == config.loss_rate
    )


def run_bob_endpoint(config, database, conn, audit=None):
    """Database-holder side of one wire session (single pass, no restart)."""
    fs = FrameStream(conn, audit)
    database = np.asarray(database, dtype=np.uint8)
    hello = fs.expect(Hello)
    if not 0.0 < hello.theta < np.pi / 2:
        fs.fail(ERR_BAD_PARAMS, f"theta out of range: {hello.theta}")
    if hello.n_items < 1 or hello.substrings < 1 or not 0.0 <= hello.loss_rate < 1.0:
        fs.fail(ERR_BAD_PARAMS, "invalid session parameters")
    if not _hello_matches(hello, config):
        fs.fail(ERR_BAD_PARAMS, "session parameters do not match this endpoint")
    if database.size != config.n_items:
        fs.fail(ERR_BAD_PARAMS, "database size does not match session parameters")

    source = stream(config.source_seed, 0)
    channel = stream(config.channel_seed, 0)
    need = config.raw_length
    kept_labels = []
    sent = received_total = retained = 0
    while retained < need:
        req = fs.expect(PhotonBatchReq)
        if not 1 <= req.count <= WIRE_BATCH:
            fs.fail(ERR_BAD_PARAMS, f"batch size {req.count} outside [1, {WIRE_BATCH}]")
        sub = fs.expect(MeasureSubmit)
        if sub.bases.size != req.count:
            fs.fail(ERR_BAD_PARAMS, "basis array does not match requested batch size")
        labels, received, outcomes = simulate_batch(source, channel, sub.bases, config)
        sent += req.count
        received_total += int(np.count_nonzero(received))
        take = min(need - retained, int(np.count_nonzero(received)))
        kept_labels.append(labels[np.flatnonzero(received)[:take]])
        retained += take
        fs.send(OutcomeBatch(received=received, outcomes=outcomes))

    labels = np.concatenate(kept_labels)
    raw_bits = (labels >> 1).astype(np.uint8)
    letters = (labels & 1).astype(np.uint8)
    fs.send(Declaration(letters=letters))
    ack = fs.expect(SiftAck)

    final_bits = np.bitwise_xor.reduce(
        raw_bits.reshape(config.substrings, config.n_items), axis=0
    ).astype(np.uint8)

    shift_msg = fs.expect(Shift)
    s = shift_msg.shift % config.n_items
    ciphertext = (database ^ np.roll(final_bits, -s)).astype(np.uint8)
    fs.send(Ciphertext(bits=ciphertext))

    report = SessionReport(
        config=config,
        photons_sent=sent,
        photons_received=received_total,
        conclusive_count=ack.conclusive_count,
        known_final_count=0,  # receiver-private, unknown on this side
        restarted=0,
        query=QueryExchange(
            target_index=-1, known_index=-1, shift=s, ciphertext=ciphertext, retrieved_bit=-1
        ),
        success=True,
    )
    return BobWireResult(report=report, raw_bits=raw_bits, final_bits=final_bits)


def run_alice_endpoint(config, target_index, conn, audit=None):
    """Querying side of one wire session (single pass, no restart)."""
    fs = FrameStream(conn, audit)
    if not 0 <= target_index < config.n_items:
        raise ProtocolAbort(f"target index {target_index} out of range")
    fs.send(
        Hello(
            theta=config.theta,
            n_items=config.n_items,
            substrings=config.substrings,
            loss_rate=config.loss_rate,
        )
    )
    measure_rng = stream(config.measure_seed, 0)
    need = config.raw_length
    kept_bases, kept_outcomes = [], []
    sent = received_total = retained = 0
    while retained < need:
        fs.send(PhotonBatchReq(count=WIRE_BATCH))
        bases = draw_bases(measure_rng, WIRE_BATCH)
        fs.send(MeasureSubmit(bases=bases))
        batch = fs.expect(OutcomeBatch)
        if batch.received.size != WIRE_BATCH:
            fs.fail(ERR_BAD_PARAMS, "outcome batch does not match requested size")
        sent += WIRE_BATCH
        received_total += int(np.count_nonzero(batch.received))
        take = min(need - retained, int(np.count_nonzero(batch.received)))
        idx = np.flatnonzero(batch.received)[:take]
        kept_bases.append(bases[idx])
        kept_outcomes.append(batch.outcomes[idx])
        retained += take

    bases = np.concatenate(kept_bases)
    outcomes = np.concatenate(kept_outcomes)
    decl = fs.expect(Declaration)
    if decl.letters.size != need:
        fs.fail(ERR_BAD_PARAMS, "declaration length does not match raw key length")
    mask, alice_bits = sift_batch(bases, outcomes, decl.letters)
    fs.send(SiftAck(conclusive_count=int(np.count_nonzero(mask))))

    # receiver-side fold: she has no truth bits, only her mask and values
    shadow = RawKey(
        bits=np.zeros(need, dtype=np.uint8), alice_mask=mask, alice_bits=alice_bits
    )
    final = xor_compress(shadow, config.substrings, config.n_items)
    known = final.known_positions()
    if known.size == 0:
        fs.fail(ERR_SESSION_FAILED, "no known final-key bits; session must restart")

    qrng = query_stream(config, attempt=0)
    j = int(known[int(qrng.random() * known.size)])
    s = (j - target_index) % config.n_items
    fs.send(Shift(shift=s))
    ct = fs.expect(Ciphertext)
    if ct.bits.size != config.n_items:
        fs.fail(ERR_BAD_PARAMS, "ciphertext length does not match database size")
    retrieved = int(ct.bits[target_index] ^ final.alice_bits[j])

    report = SessionReport(
        config=config,
        photons_sent=sent,
        photons_received=received_total,
        conclusive_count=int(np.count_nonzero(mask)),
        known_final_count=int(known.size),
        restarted=0,
        query=QueryExchange(
            target_index=target_index,
            known_index=j,
            shift=s,
            ciphertext=ct.bits,
            retrieved_bit=retrieved,
        ),
        success=True,
    )
    return AliceWireResult(report=report, final=final, retrieved_bit=retrieved)


def public_report_fields(report):
    """The report fields both endpoints can know and must agree on.

    Only the HELLO-negotiated parameters survive from the config echo;
    seeds, batching and endpoint-local knobs stay private to each side.
    """
    doc = report.to_dict(public_only=True)
    doc.pop("known_final_count")
    doc["config"] = {
        key: doc["config"][key]
        for key in ("n_items", "substrings", "theta", "loss_rate")
    }
    return doc


def run_local_session(config, database, target_index, audit_bob=None, audit_alice=None):
    """Run both endpoints over an in-memory socket pair (two threads)."""
    left, right = socket.socketpair()
    results = {}
    errors = {}

    def bob():
        try:
            results["bob"] = run_bob_endpoint(config, database, left, audit=audit_bob)
        except QpqError as exc:
            errors["bob"] = exc
        finally:
            left.close()

    thread = threading.Thread(target=bob, daemon=True)
    thread.start()
    try:
        results["alice"] = run_alice_endpoint(config, target_index, right, audit=audit_alice)
    except QpqError as exc:
        errors["alice"] = exc
    finally:
        right.close()
        thread.join(timeout=30)
    if errors:
        raise ProtocolAbort(f"local session failed: {errors}")
    return results["bob"], results["alice"]


class WireServer:
    """TCP listener hosting independent sessions, one thread each.

    The bound port is available immediately after construction, so port 0
    (OS-assigned) works for tests and scripted runs.
    """

    def __init__(self, host, port, config, database, sessions=None):
        self._srv = socket.create_server((host, port))
        self._config = config
        self._database = np.asarray(database, dtype=np.uint8)
        self._sessions = sessions
        self.host = host
        self.port = self._srv.getsockname()[1]

    def serve(self):
        """Accept and handle connections; returns after the session limit."""
        handled = 0
        threads = []
        try:
            while self._sessions is None or handled < self._sessions:
                try:
                    conn, _ = self._srv.accept()
                except OSError:
                    break  # listener closed
                handled += 1

                def _handle(channel=conn):
                    try:
                        run_bob_endpoint(self._config, self._database, channel)
                    except QpqError:
                        pass
                    finally:
                        channel.close()

                t = threading.Thread(target=_handle, daemon=True)
                t.start()
                threads.append(t)
            for t in threads:
                t.join(timeout=60)
        finally:
            self.close()
        return handled

    def close(self):
        self._srv.close()
