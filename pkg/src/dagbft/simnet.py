"""Deterministic seeded network simulator with byzantine behaviors.

Time is an integer step counter. Every envelope put on the wire gets a
delivery delay drawn uniformly from the scenario's bounds by a Mersenne
Twister seeded from the scenario; envelopes due at the same step are
delivered in (receiver, sender, send step, envelope hash) order. The whole
run is a pure function of the scenario, so equal scenarios produce
byte-identical traces.

Correct servers run the full stack (gossip + interpretation + shim filter).
Byzantine servers run scripted behaviors against a restricted crypto view
that can only sign as their own id; their outbound traffic is throttled by a
per-step envelope budget.

The optional drain phase realizes "eventually" at a finite horizon: each
correct server publishes its current block once more, then deliveries,
promotions, and forced FWD recovery run to fixpoint with no new
disseminations.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, replace
from random import Random
from typing import Optional

from . import trace
from .blockdag import Block, BlockDag, BlockRef, block_ref
from .brb import ReliableBroadcast, encode_broadcast
from .crypto import KeyRegistry, Signature, SignatureScheme, UnknownServerError
from .gossip import BLOCK_ENVELOPE, FWD_ENVELOPE, Disposition, WireEnvelope
from .interpret import BlockInterpretation
from .protocol import Label
from .shim import Shim

BEHAVIOR_KINDS = (
    "EQUIVOCATE",
    "SILENT",
    "SELECTIVE_SEND",
    "GARBAGE",
    "CRASH_AT",
    "DUPLICATE_REFS",
)


class ScenarioError(Exception):
    """The scenario violates a configuration invariant."""


@dataclass(frozen=True)
class BehaviorSpec:
    kind: str
    crash_step: int = 0
    targets: tuple[int, ...] = ()

    def validate(self, n: int) -> None:
        if self.kind not in BEHAVIOR_KINDS:
            raise ScenarioError(f"unknown behavior kind {self.kind!r}")
        if self.kind == "CRASH_AT" and self.crash_step < 0:
            raise ScenarioError("crash_step must be non-negative")
        if any(not 0 <= t < n for t in self.targets):
            raise ScenarioError("behavior targets out of range")

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind == "CRASH_AT":
            out["crash_step"] = self.crash_step
        if self.targets:
            out["targets"] = list(self.targets)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "BehaviorSpec":
        return cls(
            kind=data["kind"],
            crash_step=int(data.get("crash_step", 0)),
            targets=tuple(int(t) for t in data.get("targets", ())),
        )


@dataclass(frozen=True)
class RequestInjection:
    step: int
    server: int
    label: Label
    value: int


@dataclass(frozen=True)
class Scenario:
    n: int
    f: int
    seed: int
    max_steps: int
    delay_bounds: tuple[int, int] = (1, 1)
    cadence: int = 3
    fwd_interval: int = 5
    max_requests_per_block: int = 8
    drain: bool = True
    byzantine: tuple[tuple[int, BehaviorSpec], ...] = ()
    requests: tuple[RequestInjection, ...] = ()
    snapshot_steps: tuple[int, ...] = ()
    adversary_budget: int = 4
    debug_checks: bool = False

    def validate(self) -> None:
        if self.n != 3 * self.f + 1:
            raise ScenarioError(f"need n = 3f + 1 servers, got n={self.n}, f={self.f}")
        if len(self.byzantine) > self.f:
            raise ScenarioError("more byzantine servers than the fault bound")
        seen = set()
        for server, spec in self.byzantine:
            if not 0 <= server < self.n:
                raise ScenarioError(f"byzantine server {server} out of range")
            if server in seen:
                raise ScenarioError(f"server {server} listed byzantine twice")
            seen.add(server)
            spec.validate(self.n)
        if len(self.delay_bounds) != 2:
            raise ScenarioError("delay_bounds must be a (min, max) pair")
        lo, hi = self.delay_bounds
        if not 1 <= lo <= hi:
            raise ScenarioError("delay bounds must satisfy 1 <= min <= max")
        if self.max_steps < 1:
            raise ScenarioError("max_steps must be positive")
        if self.cadence < 1 or self.fwd_interval < 1 or self.adversary_budget < 1:
            raise ScenarioError("cadence, fwd_interval, adversary_budget must be >= 1")
        for req in self.requests:
            if not 0 <= req.server < self.n:
                raise ScenarioError(f"request targets unknown server {req.server}")
            if not 0 <= req.step < self.max_steps:
                raise ScenarioError("request step must fall inside the run horizon")
        for step in self.snapshot_steps:
            if not 0 <= step < self.max_steps:
                raise ScenarioError("snapshot step must fall inside the run horizon")

    def byzantine_map(self) -> dict[int, BehaviorSpec]:
        return dict(self.byzantine)

    def correct_servers(self) -> list[int]:
        byz = {s for s, _ in self.byzantine}
        return [s for s in range(self.n) if s not in byz]

    # -- JSON -----------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "f": self.f,
            "seed": self.seed,
            "max_steps": self.max_steps,
            "delay_bounds": list(self.delay_bounds),
            "cadence": self.cadence,
            "fwd_interval": self.fwd_interval,
            "max_requests_per_block": self.max_requests_per_block,
            "drain": self.drain,
            "byzantine": {str(s): spec.to_dict() for s, spec in self.byzantine},
            "requests": [
                {
                    "step": r.step,
                    "server": r.server,
                    "label": [r.label.originator, r.label.nonce],
                    "value": r.value,
                }
                for r in self.requests
            ],
            "snapshot_steps": list(self.snapshot_steps),
            "adversary_budget": self.adversary_budget,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        try:
            scenario = cls(
                n=int(data["n"]),
                f=int(data["f"]),
                seed=int(data["seed"]),
                max_steps=int(data["max_steps"]),
                delay_bounds=tuple(int(x) for x in data.get("delay_bounds", (1, 1))),
                cadence=int(data.get("cadence", 3)),
                fwd_interval=int(data.get("fwd_interval", 5)),
                max_requests_per_block=int(data.get("max_requests_per_block", 8)),
                drain=bool(data.get("drain", True)),
                byzantine=tuple(
                    sorted(
                        (int(s), BehaviorSpec.from_dict(spec))
                        for s, spec in data.get("byzantine", {}).items()
                    )
                ),
                requests=tuple(
                    RequestInjection(
                        step=int(r["step"]),
                        server=int(r["server"]),
                        label=Label(int(r["label"][0]), int(r["label"][1])),
                        value=int(r["value"]),
                    )
                    for r in data.get("requests", ())
                ),
                snapshot_steps=tuple(int(s) for s in data.get("snapshot_steps", ())),
                adversary_budget=int(data.get("adversary_budget", 4)),
            )
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ScenarioError(f"malformed scenario: {exc}") from exc
        scenario.validate()
        return scenario

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)


@dataclass
class RunResult:
    scenario: Scenario
    events: list[dict]
    final_dags: dict[int, BlockDag]
    snapshots: dict[int, dict[int, BlockDag]]
    counters: dict[str, int]

    def trace_text(self) -> str:
        return trace.dumps(self.events)


# ---------------------------------------------------------------------------
# Byzantine behaviors
# ---------------------------------------------------------------------------


class _RestrictedRegistryAdapter:
    """Registry facade over a RestrictedSigner: verifies anyone, signs only
    as the adversary's own id."""

    def __init__(self, restricted, server_count: int) -> None:
        self._restricted = restricted
        self.server_count = server_count

    def handle(self, server: int):
        if server != self._restricted.server:
            raise UnknownServerError("adversary holds only its own key")
        return self._restricted.handle

    def sign(self, handle, digest: bytes) -> Signature:
        return self._restricted.sign(digest)

    def verify(self, server: int, digest: bytes, sig: Signature) -> bool:
        return self._restricted.verify(server, digest, sig)


class _ScriptedChain:
    """Minimal chain mechanics for scripted adversaries: validate and insert
    received blocks, collect references, seal and commit own blocks. Unlike
    the honest gossip node, sealing is manual so behaviors can fork or
    malform their blocks."""

    def __init__(self, server: int, registry_like) -> None:
        self.server = server
        self.registry = registry_like
        self.dag = BlockDag(server, registry_like)
        self.pending: dict[BlockRef, Block] = {}
        self.draft_preds: list[BlockRef] = []
        self._draft_set: set[BlockRef] = set()
        self.seqno = 0

    def receive(self, block: Block) -> None:
        ref = block_ref(block)
        if ref in self.dag or ref in self.pending:
            return
        try:
            if block.signature is None or not self.registry.verify(
                block.builder, ref.digest, block.signature
            ):
                return
        except UnknownServerError:
            return
        self.pending[ref] = block

    def promote(self) -> None:
        while True:
            batch = sorted(
                ref for ref, blk in self.pending.items() if self.dag.is_valid(blk)
            )
            if not batch:
                return
            for ref in batch:
                block = self.pending.pop(ref)
                self.dag.insert(block)
                if ref not in self._draft_set:
                    self._draft_set.add(ref)
                    self.draft_preds.append(ref)

    def seal(
        self,
        requests: tuple[tuple[Label, bytes], ...],
        *,
        double_refs: bool = False,
    ) -> Block:
        use = tuple(self.draft_preds)
        if double_refs:
            use = tuple(p for p in use for _ in range(2))
        core = Block(self.server, self.seqno, use, requests)
        sig = self.registry.sign(None, block_ref(core).digest)
        return core.with_signature(sig)

    def commit(self, block: Block) -> None:
        self.dag.insert(block)
        self.seqno = block.seqno + 1
        ref = block_ref(block)
        self.draft_preds = [ref]
        self._draft_set = {ref}


class _Adversary:
    """One scripted byzantine server. Produces wire traffic into an outbox
    that the engine drains at the per-step budget."""

    def __init__(
        self,
        server: int,
        spec: BehaviorSpec,
        scenario: Scenario,
        restricted,
        rng: Random,
    ) -> None:
        self.server = server
        self.spec = spec
        self.scenario = scenario
        self.rng = rng
        self.adapter = _RestrictedRegistryAdapter(restricted, scenario.n)
        self.chain = _ScriptedChain(server, self.adapter)
        self.pending_requests: list[tuple[Label, int]] = []
        self.outbox: deque[tuple[int, bytes, Optional[str], Optional[str]]] = deque()
        self._marker_nonce = 0

    # -- engine hooks ---------------------------------------------------------

    def enqueue_request(self, label: Label, value: int) -> None:
        self.pending_requests.append((label, value))

    def on_deliver(self, now: int, envelope: Optional[WireEnvelope]) -> None:
        if envelope is None or self._dead(now):
            return
        kind = self.spec.kind
        if kind in ("SILENT", "GARBAGE"):
            return
        if envelope.kind == BLOCK_ENVELOPE:
            self.chain.receive(envelope.block)
        elif envelope.kind == FWD_ENVELOPE and kind == "CRASH_AT":
            reply = None
            if envelope.ref in self.chain.dag:
                reply = self.chain.dag.get(envelope.ref)
            if reply is not None:
                self._post_block(reply, [envelope.sender])

    def on_step(self, now: int) -> None:
        if self._dead(now):
            self.outbox.clear()
            return
        kind = self.spec.kind
        if kind == "SILENT":
            return
        if kind == "GARBAGE":
            if now % self.scenario.cadence == 0:
                self._emit_garbage()
            return
        self.chain.promote()
        if now % self.scenario.cadence != 0:
            return
        if kind == "EQUIVOCATE":
            self._emit_equivocation()
        elif kind == "SELECTIVE_SEND":
            block = self.chain.seal(self._drain_requests())
            self.chain.commit(block)
            targets = self.spec.targets or tuple(range(self.scenario.n))
            self._post_block(block, targets)
        elif kind == "DUPLICATE_REFS":
            block = self.chain.seal(self._drain_requests(), double_refs=True)
            self.chain.commit(block)
            self._post_block(block, range(self.scenario.n))
        elif kind == "CRASH_AT":
            block = self.chain.seal(self._drain_requests())
            self.chain.commit(block)
            self._post_block(block, range(self.scenario.n))

    def drain_outbox(self, budget: int) -> list[tuple[int, bytes, Optional[str], Optional[str]]]:
        out = []
        while self.outbox and len(out) < budget:
            out.append(self.outbox.popleft())
        return out

    # -- internals --------------------------------------------------------------

    def _dead(self, now: int) -> bool:
        return self.spec.kind == "CRASH_AT" and now >= self.spec.crash_step

    def _drain_requests(self) -> tuple[tuple[Label, bytes], ...]:
        take = self.pending_requests[: self.scenario.max_requests_per_block]
        self.pending_requests = self.pending_requests[len(take) :]
        return tuple((label, encode_broadcast(value)) for label, value in take)

    def _post_block(self, block: Block, receivers) -> None:
        ref_hex = block_ref(block).hex()
        for receiver in receivers:
            env = WireEnvelope(BLOCK_ENVELOPE, self.server, receiver, block=block)
            self.outbox.append((receiver, env.encode(), "BLOCK", ref_hex))

    def _emit_equivocation(self) -> None:
        taken = self.pending_requests[: self.scenario.max_requests_per_block]
        self.pending_requests = self.pending_requests[len(taken) :]
        rs_a = tuple((label, encode_broadcast(v)) for label, v in taken)
        if self.chain.seqno == 0:
            # needs a prior own block to fork from; first block is played straight
            block = self.chain.seal(rs_a)
            self.chain.commit(block)
            self._post_block(block, range(self.scenario.n))
            return
        if taken:
            rs_b = tuple((label, encode_broadcast(v + 1)) for label, v in taken)
        else:
            self._marker_nonce += 1
            marker = Label(self.server, 1_000_000 + self._marker_nonce)
            rs_b = ((marker, b"\x00"),)  # undecodable filler; just forces a distinct ref
        fork_a = self.chain.seal(rs_a)
        fork_b = self.chain.seal(rs_b)
        self.chain.commit(fork_a)
        self.chain.dag.insert(fork_b)  # both forks are individually valid
        half = (self.scenario.n + 1) // 2
        self._post_block(fork_a, range(half))
        self._post_block(fork_b, range(half, self.scenario.n))

    def _emit_garbage(self) -> None:
        for receiver in range(self.scenario.n):
            junk = bytes(self.rng.getrandbits(8) for _ in range(24))
            self.outbox.append((receiver, junk, "RAW", None))
        self._marker_nonce += 1
        bogus_core = Block(self.server, self._marker_nonce, (), ())
        bogus = bogus_core.with_signature(
            Signature(SignatureScheme.HMAC_SHA256, bytes(32))
        )
        self._post_block(bogus, range(self.scenario.n))


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


class _CorrectServer:
    def __init__(self, server: int, scenario: Scenario, registry: KeyRegistry) -> None:
        protocol = ReliableBroadcast(scenario.n, scenario.f)
        self.shim = Shim(
            server,
            protocol,
            registry,
            cadence=scenario.cadence,
            fwd_interval=scenario.fwd_interval,
            max_requests_per_block=scenario.max_requests_per_block,
            debug_checks=scenario.debug_checks,
        )
        self.server = server

    @property
    def gossip(self):
        return self.shim.gossip

    @property
    def interpreter(self):
        return self.shim.interpreter

    @property
    def dag(self) -> BlockDag:
        return self.shim.dag


class Simulation:
    def __init__(self, scenario: Scenario) -> None:
        scenario.validate()
        self.scenario = scenario
        self.registry = KeyRegistry.generate(scenario.n, seed=scenario.seed)
        self.delay_rng = Random(scenario.seed ^ 0x5E11A5ED)
        byz = scenario.byzantine_map()
        self.correct: dict[int, _CorrectServer] = {}
        self.adversaries: dict[int, _Adversary] = {}
        for server in range(scenario.n):
            if server in byz:
                self.adversaries[server] = _Adversary(
                    server,
                    byz[server],
                    scenario,
                    self.registry.restricted(server),
                    Random((scenario.seed << 8) ^ server),
                )
            else:
                self.correct[server] = _CorrectServer(server, scenario, self.registry)
        self.events: list[dict] = []
        self.inflight: dict[int, list[tuple[tuple, int, int, int, bytes]]] = {}
        self.snapshots: dict[int, dict[int, BlockDag]] = {}
        self.counters = {
            "sends": 0,
            "delivers": 0,
            "drops": 0,
            "indications_surfaced": 0,
            "indications_dropped": 0,
        }

    # -- wire ------------------------------------------------------------------

    def _schedule(
        self,
        now: int,
        sender: int,
        receiver: int,
        wire: bytes,
        env_kind: Optional[str],
        ref_hex: Optional[str],
    ) -> None:
        delay = self.delay_rng.randint(*self.scenario.delay_bounds)
        due = now + delay
        key = (receiver, sender, now, hashlib.sha256(wire).digest())
        self.inflight.setdefault(due, []).append((key, sender, receiver, now, wire))
        self.counters["sends"] += 1
        self.events.append(
            trace.event(
                now,
                "SEND",
                frm=sender,
                to=receiver,
                envelope=env_kind,
                ref=ref_hex,
                size=len(wire),
            )
        )

    def _send_envelopes(self, now: int, envelopes: list[WireEnvelope]) -> None:
        for env in envelopes:
            ref_hex = (
                block_ref(env.block).hex() if env.kind == BLOCK_ENVELOPE else env.ref.hex()
            )
            self._schedule(now, env.sender, env.receiver, env.encode(), env.kind_name, ref_hex)

    def _deliver_due(self, now: int, *, drain: bool = False) -> int:
        batch = self.inflight.pop(now, [])
        batch.sort(key=lambda item: item[0])
        delivered = 0
        for _key, sender, receiver, _send_step, wire in batch:
            delivered += 1
            if receiver in self.adversaries:
                if not drain:
                    try:
                        env = WireEnvelope.decode(wire)
                    except Exception:
                        env = None
                    self.adversaries[receiver].on_deliver(now, env)
                continue
            node = self.correct[receiver]
            try:
                env = WireEnvelope.decode(wire)
            except Exception:
                self.counters["drops"] += 1
                self.events.append(
                    trace.event(
                        now, "DROP", server=receiver, reason="undecodable", frm=sender
                    )
                )
                continue
            ref_hex = (
                block_ref(env.block).hex() if env.kind == BLOCK_ENVELOPE else env.ref.hex()
            )
            self.counters["delivers"] += 1
            self.events.append(
                trace.event(
                    now,
                    "DELIVER",
                    frm=sender,
                    to=receiver,
                    envelope=env.kind_name,
                    ref=ref_hex,
                )
            )
            if env.kind == BLOCK_ENVELOPE:
                disposition = node.gossip.on_receive_block(env.block)
                if disposition == Disposition.BAD_SIGNATURE:
                    self.counters["drops"] += 1
                    self.events.append(
                        trace.event(
                            now,
                            "DROP",
                            server=receiver,
                            reason="bad_signature",
                            ref=ref_hex,
                        )
                    )
                elif disposition == Disposition.EVICTED_OLDEST:
                    self.events.append(
                        trace.event(
                            now,
                            "DROP",
                            server=receiver,
                            reason="pending_evicted",
                            ref=ref_hex,
                        )
                    )
            else:
                reply = node.gossip.on_fwd_request(env.ref, env.sender)
                if reply is not None:
                    self.events.append(
                        trace.event(
                            now,
                            "FWD_RESP",
                            server=receiver,
                            to=env.sender,
                            ref=env.ref.hex(),
                        )
                    )
                    self._send_envelopes(now, [reply])
        return delivered

    # -- per-node recording -------------------------------------------------------

    def _record_insert(self, now: int, server: int, block: Block) -> None:
        self.events.append(
            trace.event(
                now,
                "INSERT",
                server=server,
                ref=block_ref(block).hex(),
                builder=block.builder,
                seqno=block.seqno,
                preds=[p.hex() for p in block.preds],
                requests=[
                    [label.originator, label.nonce, payload.hex()]
                    for label, payload in block.requests
                ],
            )
        )

    def _gossip_phase(self, now: int, node: _CorrectServer) -> None:
        for block in node.gossip.try_promote():
            ref = block_ref(block)
            self.events.append(
                trace.event(now, "PROMOTE", server=node.server, ref=ref.hex())
            )
            self._record_insert(now, node.server, block)
        for env in node.gossip.request_missing(now):
            self.events.append(
                trace.event(
                    now, "FWD_REQ", server=node.server, ref=env.ref.hex(), to=env.receiver
                )
            )
            self._send_envelopes(now, [env])
        envelopes = node.shim.tick(now)
        if envelopes:
            self._record_insert(now, node.server, envelopes[0].block)
            self._send_envelopes(now, envelopes)

    def _interpret_phase(self, now: int, node: _CorrectServer) -> None:
        for report in node.interpreter.run_to_fixpoint():
            self._record_interpretation(now, node.server, report)
        self._emit_indications(now, node)

    def _emit_indications(self, now: int, node: _CorrectServer) -> None:
        for ind in node.interpreter.take_indications():
            surfaced = node.shim.filter_indication(ind)
            key = "indications_surfaced" if surfaced else "indications_dropped"
            self.counters[key] += 1
            self.events.append(
                trace.event(
                    now,
                    "INDICATE",
                    server=node.server,
                    label=[ind.label.originator, ind.label.nonce],
                    indication=ind.payload.hex(),
                    on_behalf_of=ind.on_behalf_of,
                    block=ind.block.hex(),
                    surfaced=surfaced,
                )
            )

    def _record_interpretation(
        self, now: int, server: int, report: BlockInterpretation
    ) -> None:
        self.events.append(
            trace.event(
                now,
                "INTERPRET",
                server=server,
                ref=report.ref.hex(),
                builder=report.builder,
                labels=[
                    {
                        "label": [act.label.originator, act.label.nonce],
                        "fed": [m.canonical_bytes().hex() for m in act.fed],
                        "emitted": [m.canonical_bytes().hex() for m in act.emitted],
                        "state": act.state_digest.hex(),
                        "skipped": act.skipped_requests,
                    }
                    for act in report.labels
                ],
            )
        )

    # -- main loop ------------------------------------------------------------------

    def run(self) -> RunResult:
        scenario = self.scenario
        for now in range(scenario.max_steps):
            for req in scenario.requests:
                if req.step != now:
                    continue
                if req.server in self.correct:
                    self.correct[req.server].shim.request(
                        req.label, encode_broadcast(req.value)
                    )
                else:
                    self.adversaries[req.server].enqueue_request(req.label, req.value)
            self._deliver_due(now)
            for server in sorted(self.correct):
                self._gossip_phase(now, self.correct[server])
            for server in sorted(self.adversaries):
                adversary = self.adversaries[server]
                adversary.on_step(now)
                for receiver, wire, kind, ref_hex in adversary.drain_outbox(
                    scenario.adversary_budget
                ):
                    self._schedule(now, server, receiver, wire, kind, ref_hex)
            for server in sorted(self.correct):
                self._interpret_phase(now, self.correct[server])
            if now in scenario.snapshot_steps:
                self.snapshots[now] = {
                    s: node.dag.copy() for s, node in self.correct.items()
                }
        now = scenario.max_steps
        if scenario.drain:
            now = self._drain(now)
        final_dags = {s: node.dag.copy() for s, node in self.correct.items()}
        self.counters["pending_evicted"] = sum(
            node.gossip.evicted for node in self.correct.values()
        )
        self.counters["skipped_requests"] = sum(
            node.interpreter.skipped_requests for node in self.correct.values()
        )
        self.counters["blocks_stored"] = sum(len(d) for d in final_dags.values())
        return RunResult(scenario, self.events, final_dags, self.snapshots, self.counters)

    def _drain(self, start: int) -> int:
        """Continue the dissemination cadence with byzantine servers halted
        until the interpretation quiesces: a round whose blocks feed and emit
        nothing is a global fixpoint, so eventual-delivery obligations are
        settled at the horizon."""
        now = start
        requested: set[tuple[int, str, int]] = set()
        for _round in range(64):
            for server in sorted(self.correct):
                node = self.correct[server]
                block, envelopes = node.gossip.disseminate()
                self._record_insert(now, server, block)
                self._send_envelopes(now, envelopes)
            # deliver, promote, and recover missing predecessors to fixpoint
            for _ in range(100_000):
                progressed = False
                if self.inflight:
                    now = min(self.inflight)
                    if self._deliver_due(now, drain=True):
                        progressed = True
                for server in sorted(self.correct):
                    node = self.correct[server]
                    for block in node.gossip.try_promote():
                        ref = block_ref(block)
                        self.events.append(
                            trace.event(now, "PROMOTE", server=server, ref=ref.hex())
                        )
                        self._record_insert(now, server, block)
                        progressed = True
                    for env in node.gossip.request_missing(now, force=True):
                        key = (server, env.ref.hex(), env.receiver)
                        if key in requested:
                            continue
                        requested.add(key)
                        self.events.append(
                            trace.event(
                                now,
                                "FWD_REQ",
                                server=server,
                                ref=env.ref.hex(),
                                to=env.receiver,
                            )
                        )
                        self._send_envelopes(now, [env])
                        progressed = True
                if not progressed and not self.inflight:
                    break
            else:  # pragma: no cover - defensive bound
                raise RuntimeError("drain delivery loop did not settle")
            quiet = True
            for server in sorted(self.correct):
                node = self.correct[server]
                for report in node.interpreter.run_to_fixpoint():
                    self._record_interpretation(now, server, report)
                    if any(act.fed or act.emitted for act in report.labels):
                        quiet = False
                self._emit_indications(now, node)
            if quiet:
                return now
        raise RuntimeError("drain did not quiesce within the round bound")


def run(scenario: Scenario) -> RunResult:
    """Execute the scenario; a pure function of its argument."""
    return Simulation(scenario).run()
