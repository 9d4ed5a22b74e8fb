"""The black-box deterministic protocol contract driven by the interpreter.

A protocol is a factory of per-(label, server) state machines. Each machine
consumes requests and messages and synchronously returns the messages it
emits; indications are buffered and drained by the caller. Determinism and
clonability are load-bearing: the interpreter replays the same machine on
every server and relies on equal inputs producing equal states.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

from .crypto import ENCODING_VERSION, enc_bytes, enc_u8, enc_u32, enc_u64

_TAG_LABEL = 0x10
_TAG_MESSAGE = 0x11


class ProtocolError(Exception):
    """A request or payload does not decode under the protocol."""


class ContractError(Exception):
    """A caller violated the process-instance contract (e.g. wrong receiver)."""


@dataclass(frozen=True, order=True)
class Label:
    """Identity of one protocol instance running over the shared DAG.

    ``originator`` names the server entitled to issue the instance's
    authenticated requests; ``nonce`` distinguishes instances of the same
    originator.
    """

    originator: int
    nonce: int

    def canonical_bytes(self) -> bytes:
        return (
            enc_u8(ENCODING_VERSION)
            + enc_u8(_TAG_LABEL)
            + enc_u32(self.originator)
            + enc_u64(self.nonce)
        )


@dataclass(frozen=True)
class Message:
    sender: int
    receiver: int
    payload: bytes

    def canonical_bytes(self) -> bytes:
        return (
            enc_u8(ENCODING_VERSION)
            + enc_u8(_TAG_MESSAGE)
            + enc_u32(self.sender)
            + enc_u32(self.receiver)
            + enc_bytes(self.payload)
        )


def message_from_canonical(data: bytes) -> Message:
    """Inverse of :meth:`Message.canonical_bytes`; used by trace checkers."""
    from .crypto import EncodingError, reader

    r = reader(data)
    if r.u8() != ENCODING_VERSION or r.u8() != _TAG_MESSAGE:
        raise EncodingError("not a message encoding")
    sender = r.u32()
    receiver = r.u32()
    payload = r.raw_bytes()
    if not r.done():
        raise EncodingError("trailing bytes after message encoding")
    return Message(sender, receiver, payload)


def message_sort_key(message: Message) -> bytes:
    return message.canonical_bytes()


def message_less(m1: Message, m2: Message) -> bool:
    """Strict total order on messages: byte order of the canonical encoding.

    Any fixed order works; bytes are stable across machines, which is what
    keeps independent interpreters feeding messages in the same sequence.
    """
    return message_sort_key(m1) < message_sort_key(m2)


class ProcessInstance(ABC):
    """One simulated state machine for a (label, server) pair.

    Implementations must be deterministic (same state + same inputs => same
    outputs and successor state), clonable, and expose a canonical state
    encoding for cross-interpreter equality checks.
    """

    def __init__(self, label: Label, server: int) -> None:
        self.label = label
        self.server = server

    @abstractmethod
    def on_request(self, payload: bytes) -> list[Message]:
        """Feed a user request; returns the synchronously emitted messages.

        Raises ProtocolError on an undecodable payload, leaving state
        unchanged.
        """

    @abstractmethod
    def on_receive(self, message: Message) -> list[Message]:
        """Feed a message addressed to this instance's server."""

    @abstractmethod
    def take_indications(self) -> list[bytes]:
        """Drain indications raised since the last call (at-most-once each)."""

    @abstractmethod
    def clone(self) -> "ProcessInstance":
        """Deep copy, observationally identical to the original."""

    @abstractmethod
    def state_bytes(self) -> bytes:
        """Canonical encoding of the full state, identity fields included."""


class Protocol(ABC):
    """Factory for process instances; carries the deployment constants.

    ``server_count`` and ``fault_bound`` are exposed so instances can compute
    their quorum thresholds.
    """

    def __init__(self, server_count: int, fault_bound: int) -> None:
        self.server_count = server_count
        self.fault_bound = fault_bound

    @abstractmethod
    def spawn(self, label: Label, server: int) -> ProcessInstance:
        """Fresh instance in its protocol-defined initial state."""
