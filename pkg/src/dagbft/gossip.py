"""Block exchange: receive, validate, insert, recover missing predecessors.

One node per server. Received blocks sit in a pending buffer until every
predecessor is present and the block validates, at which point it is
promoted into the DAG and its reference is appended to the block the server
is currently building. Missing predecessors are requested from the builder
of the block that references them (FWD), throttled per reference by a
request interval. ``disseminate`` seals the current block with the drained
request buffer, signs it, inserts it locally, and addresses it to every
server (the builder included, for wire uniformity; the duplicate arrival is
absorbed by the already-in-DAG guard).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .blockdag import (
    Block,
    BlockDag,
    BlockRef,
    block_from_wire,
    block_ref,
    block_to_wire,
)
from .crypto import (
    DIGEST_SIZE,
    ENCODING_VERSION,
    EncodingError,
    UnknownServerError,
    enc_u32,
    enc_u8,
    reader,
)
from .protocol import Label

BLOCK_ENVELOPE = 1
FWD_ENVELOPE = 2

_KIND_NAMES = {BLOCK_ENVELOPE: "BLOCK", FWD_ENVELOPE: "FWD"}


@dataclass(frozen=True)
class WireEnvelope:
    """What actually crosses the simulated network: a block or a FWD request."""

    kind: int
    sender: int
    receiver: int
    block: Optional[Block] = None
    ref: Optional[BlockRef] = None

    @property
    def kind_name(self) -> str:
        return _KIND_NAMES[self.kind]

    def encode(self) -> bytes:
        head = enc_u8(ENCODING_VERSION) + enc_u8(self.kind)
        head += enc_u32(self.sender) + enc_u32(self.receiver)
        if self.kind == BLOCK_ENVELOPE:
            assert self.block is not None
            return head + block_to_wire(self.block)
        assert self.ref is not None
        return head + self.ref.digest

    @classmethod
    def decode(cls, data: bytes) -> "WireEnvelope":
        r = reader(data)
        if r.u8() != ENCODING_VERSION:
            raise EncodingError("unsupported envelope version")
        kind = r.u8()
        sender = r.u32()
        receiver = r.u32()
        if kind == BLOCK_ENVELOPE:
            block = block_from_wire(data[r.pos :])
            return cls(kind, sender, receiver, block=block)
        if kind == FWD_ENVELOPE:
            ref = BlockRef(r.take(DIGEST_SIZE))
            if not r.done():
                raise EncodingError("trailing bytes after FWD envelope")
            return cls(kind, sender, receiver, ref=ref)
        raise EncodingError(f"unknown envelope kind {kind}")


class Disposition(Enum):
    """Outcome of handing a received block to the node."""

    BUFFERED = "buffered"
    ALREADY_KNOWN = "already_known"
    BAD_SIGNATURE = "bad_signature"
    EVICTED_OLDEST = "evicted_oldest"


class GossipNode:
    """Per-server gossip state: the DAG, the pending buffer, and the block
    under construction."""

    def __init__(
        self,
        server: int,
        dag: BlockDag,
        requests: deque,
        registry,
        *,
        fwd_interval: int = 5,
        max_requests_per_block: int = 8,
        pending_cap_per_builder: int = 1024,
        debug_checks: bool = False,
    ) -> None:
        self.server = server
        self.dag = dag
        self.requests = requests  # shared FIFO of (Label, payload)
        self.registry = registry
        self.handle = registry.handle(server)
        self.fwd_interval = fwd_interval
        self.max_requests_per_block = max_requests_per_block
        self.pending_cap_per_builder = pending_cap_per_builder
        self.debug_checks = debug_checks

        self._next_seqno = 0
        self._draft_preds: list[BlockRef] = []
        self._draft_pred_set: set[BlockRef] = set()
        self.pending: dict[BlockRef, Block] = {}
        self._pending_per_builder: dict[int, int] = {}
        self.fwd_clock: dict[BlockRef, int] = {}
        self.evicted = 0

    # -- receiving ----------------------------------------------------------

    def on_receive_block(self, block: Block) -> Disposition:
        """Buffer a received block unless it is already known. Blocks whose
        signature does not verify are rejected outright; nothing downstream
        could ever validate them."""
        ref = block_ref(block)
        if ref in self.dag or ref in self.pending:
            return Disposition.ALREADY_KNOWN
        try:
            if block.signature is None or not self.registry.verify(
                block.builder, ref.digest, block.signature
            ):
                return Disposition.BAD_SIGNATURE
        except UnknownServerError:
            return Disposition.BAD_SIGNATURE
        disposition = Disposition.BUFFERED
        count = self._pending_per_builder.get(block.builder, 0)
        if count >= self.pending_cap_per_builder:
            self._evict_oldest(block.builder)
            disposition = Disposition.EVICTED_OLDEST
        self.pending[ref] = block
        self._pending_per_builder[block.builder] = (
            self._pending_per_builder.get(block.builder, 0) + 1
        )
        return disposition

    def _evict_oldest(self, builder: int) -> None:
        for ref, blk in self.pending.items():  # insertion order
            if blk.builder == builder:
                del self.pending[ref]
                self._pending_per_builder[builder] -= 1
                self.evicted += 1
                return

    # -- promotion ------------------------------------------------------------

    def try_promote(self) -> list[Block]:
        """Promote every pending block that validates, cascading until no
        further block becomes valid. Simultaneously eligible blocks are
        processed in ascending reference order so runs are reproducible."""
        promoted: list[Block] = []
        while True:
            batch = sorted(
                (ref for ref, blk in self.pending.items() if self.dag.is_valid(blk)),
            )
            if not batch:
                break
            for ref in batch:
                block = self.pending.pop(ref)
                self._pending_per_builder[block.builder] -= 1
                self.dag.insert(block)
                if ref not in self._draft_pred_set:
                    self._draft_pred_set.add(ref)
                    self._draft_preds.append(ref)
                for key in [k for k in self.fwd_clock if k[0] == ref]:
                    del self.fwd_clock[key]
                promoted.append(block)
                if self.debug_checks:
                    self.dag.self_check()
        return promoted

    # -- predecessor recovery -----------------------------------------------------

    def missing_predecessors(self) -> list[tuple[BlockRef, int]]:
        """(missing ref, builder to ask) pairs. Every distinct referencing
        builder is a candidate responder (a single unresponsive builder must
        not wedge recovery); repeats from the same builder collapse."""
        out: list[tuple[BlockRef, int]] = []
        seen: set[tuple[BlockRef, int]] = set()
        for ref in sorted(self.pending):
            block = self.pending[ref]
            for pred in block.distinct_preds():
                if pred in self.dag or pred in self.pending:
                    continue
                key = (pred, block.builder)
                if key in seen:
                    continue
                seen.add(key)
                out.append(key)
        return out

    def request_missing(self, now: int, *, force: bool = False) -> list[WireEnvelope]:
        """Issue FWD requests for missing predecessors. A (reference, target)
        pair is re-requested only after ``fwd_interval`` steps (``force``
        bypasses the timer; the drain phase uses it)."""
        envelopes: list[WireEnvelope] = []
        for missing, target in self.missing_predecessors():
            stamp = self.fwd_clock.get((missing, target))
            if not force and stamp is not None and now - stamp < self.fwd_interval:
                continue
            self.fwd_clock[(missing, target)] = now
            envelopes.append(
                WireEnvelope(FWD_ENVELOPE, self.server, target, ref=missing)
            )
        return envelopes

    def on_fwd_request(self, ref: BlockRef, requester: int) -> Optional[WireEnvelope]:
        """Answer a FWD with the full block when we hold it; stateless."""
        if ref in self.dag:
            return WireEnvelope(
                BLOCK_ENVELOPE, self.server, requester, block=self.dag.get(ref)
            )
        return None

    # -- dissemination ----------------------------------------------------------

    def disseminate(self) -> tuple[Block, list[WireEnvelope]]:
        """Seal the current block: drain buffered requests into it, sign it,
        insert it locally, and address it to every server. The next draft
        starts with the sealed block as its parent."""
        drained: list[tuple[Label, bytes]] = []
        while self.requests and len(drained) < self.max_requests_per_block:
            drained.append(self.requests.popleft())
        core = Block(
            self.server, self._next_seqno, tuple(self._draft_preds), tuple(drained)
        )
        signature = self.registry.sign(self.handle, block_ref(core).digest)
        block = core.with_signature(signature)
        self.dag.insert(block)
        if self.debug_checks:
            self.dag.self_check()
        ref = block_ref(block)
        self._next_seqno += 1
        self._draft_preds = [ref]
        self._draft_pred_set = {ref}
        envelopes = [
            WireEnvelope(BLOCK_ENVELOPE, self.server, receiver, block=block)
            for receiver in range(self.registry.server_count)
        ]
        return block, envelopes
