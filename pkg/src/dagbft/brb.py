"""Authenticated double-echo byzantine reliable broadcast.

The reference protocol for the framework: one broadcast per instance, ECHO
and READY phases with quorums at 2f+1, READY amplification at f+1, delivery
at 2f+1 READYs. A broadcast request is accepted only when the requesting
server is the label's originator, which is what makes requests
self-authenticating inside a simulation.
"""

from __future__ import annotations

from .crypto import enc_bytes, enc_seq, enc_u32, enc_u64, enc_u8
from .protocol import ContractError, Label, Message, ProcessInstance, Protocol, ProtocolError

ECHO = 1
READY = 2

_VALUE_BYTES = 8


def encode_broadcast(value: int) -> bytes:
    """Request payload: the 64-bit value to broadcast."""
    return enc_u64(value)


def decode_broadcast(payload: bytes) -> int:
    if len(payload) != _VALUE_BYTES:
        raise ProtocolError("broadcast request must be exactly 8 bytes")
    return int.from_bytes(payload, "big")


def encode_payload(kind: int, value: int) -> bytes:
    """Message payload: 1-byte kind tag + 8-byte big-endian value."""
    if kind not in (ECHO, READY):
        raise ProtocolError(f"unknown message kind {kind}")
    return enc_u8(kind) + enc_u64(value)


def decode_payload(payload: bytes) -> tuple[int, int]:
    if len(payload) != 1 + _VALUE_BYTES or payload[0] not in (ECHO, READY):
        raise ProtocolError("not a broadcast protocol message")
    return payload[0], int.from_bytes(payload[1:], "big")


def encode_deliver(value: int) -> bytes:
    """Indication payload."""
    return enc_u64(value)


def decode_deliver(payload: bytes) -> int:
    if len(payload) != _VALUE_BYTES:
        raise ProtocolError("deliver indication must be exactly 8 bytes")
    return int.from_bytes(payload, "big")


class BrbInstance(ProcessInstance):
    """State machine for one (label, server) pair.

    Flags only ever flip false -> true and the per-value sender sets only
    grow, so replaying the same inputs always lands in the same state.
    """

    def __init__(self, label: Label, server: int, server_count: int, fault_bound: int) -> None:
        super().__init__(label, server)
        self.server_count = server_count
        self.fault_bound = fault_bound
        self.echoed = False
        self.readied = False
        self.delivered = False
        self.echo_senders: dict[int, set[int]] = {}
        self.ready_senders: dict[int, set[int]] = {}
        self._pending_indications: list[bytes] = []

    # quorum thresholds
    @property
    def _echo_quorum(self) -> int:
        return 2 * self.fault_bound + 1

    @property
    def _ready_amplify(self) -> int:
        return self.fault_bound + 1

    @property
    def _deliver_quorum(self) -> int:
        return 2 * self.fault_bound + 1

    def _to_all(self, kind: int, value: int) -> list[Message]:
        payload = encode_payload(kind, value)
        return [Message(self.server, rcv, payload) for rcv in range(self.server_count)]

    def on_request(self, payload: bytes) -> list[Message]:
        value = decode_broadcast(payload)  # raises ProtocolError, state untouched
        if self.server != self.label.originator:
            return []  # request not authenticated for this server
        if self.echoed:
            return []
        self.echoed = True
        return self._to_all(ECHO, value)

    def on_receive(self, message: Message) -> list[Message]:
        if message.receiver != self.server:
            raise ContractError(
                f"message for {message.receiver} fed to instance of {self.server}"
            )
        try:
            kind, value = decode_payload(message.payload)
        except ProtocolError:
            return []  # byzantine payloads must not crash correct servers
        if kind == ECHO:
            self.echo_senders.setdefault(value, set()).add(message.sender)
        else:
            self.ready_senders.setdefault(value, set()).add(message.sender)

        out: list[Message] = []
        if kind == ECHO and not self.echoed:
            self.echoed = True
            out.extend(self._to_all(ECHO, value))
        if not self.readied and len(self.echo_senders.get(value, ())) >= self._echo_quorum:
            self.readied = True
            out.extend(self._to_all(READY, value))
        if not self.readied and len(self.ready_senders.get(value, ())) >= self._ready_amplify:
            self.readied = True
            out.extend(self._to_all(READY, value))
        if not self.delivered and len(self.ready_senders.get(value, ())) >= self._deliver_quorum:
            self.delivered = True
            self._pending_indications.append(encode_deliver(value))
        return out

    def take_indications(self) -> list[bytes]:
        out = self._pending_indications
        self._pending_indications = []
        return out

    def clone(self) -> "BrbInstance":
        dup = BrbInstance(self.label, self.server, self.server_count, self.fault_bound)
        dup.echoed = self.echoed
        dup.readied = self.readied
        dup.delivered = self.delivered
        dup.echo_senders = {v: set(s) for v, s in self.echo_senders.items()}
        dup.ready_senders = {v: set(s) for v, s in self.ready_senders.items()}
        dup._pending_indications = list(self._pending_indications)
        return dup

    def state_bytes(self) -> bytes:
        def sender_sets(table: dict[int, set[int]]) -> bytes:
            return enc_seq(
                enc_u64(value) + enc_seq(enc_u32(s) for s in sorted(senders))
                for value, senders in sorted(table.items())
                if senders
            )

        return (
            self.label.canonical_bytes()
            + enc_u32(self.server)
            + enc_u32(self.server_count)
            + enc_u32(self.fault_bound)
            + enc_u8(self.echoed)
            + enc_u8(self.readied)
            + enc_u8(self.delivered)
            + sender_sets(self.echo_senders)
            + sender_sets(self.ready_senders)
            + enc_seq(enc_bytes(i) for i in self._pending_indications)
        )


class ReliableBroadcast(Protocol):
    """Protocol factory; one instance per (label, server)."""

    def spawn(self, label: Label, server: int) -> BrbInstance:
        return BrbInstance(label, server, self.server_count, self.fault_bound)
