"""Hand-forged traces for the negative checker fixtures.

The base trace is consistent: server 0's genesis block emits one echo and
server 1's chain consumes it. Each forgery perturbs exactly one thing so the
corresponding checker must flag exactly one violation.
"""

from __future__ import annotations

from dagbft import trace
from dagbft.brb import encode_payload
from dagbft.protocol import Label, Message
from dagbft.simnet import RequestInjection, Scenario

X, Y, Z, W = "aa" * 32, "bb" * 32, "cc" * 32, "dd" * 32


def msg_hex(sender: int, receiver: int, value: int = 42, kind: int = 1) -> str:
    return Message(sender, receiver, encode_payload(kind, value)).canonical_bytes().hex()


def forged_base() -> tuple[Scenario, list[dict]]:
    scenario = Scenario(
        n=4,
        f=1,
        seed=0,
        max_steps=3,
        requests=(RequestInjection(0, 0, Label(0, 1), 42),),
    )
    events = [
        trace.event(0, "INSERT", server=1, ref=X, builder=0, seqno=0, preds=[], requests=[[0, 1, "2a" * 8]]),
        trace.event(0, "INSERT", server=1, ref=Y, builder=1, seqno=0, preds=[], requests=[]),
        trace.event(
            0,
            "INTERPRET",
            server=1,
            ref=X,
            builder=0,
            labels=[
                {
                    "label": [0, 1],
                    "fed": [],
                    "emitted": [msg_hex(0, r) for r in range(4)],
                    "state": "11" * 32,
                    "skipped": 0,
                }
            ],
        ),
        trace.event(0, "INTERPRET", server=1, ref=Y, builder=1, labels=[]),
        trace.event(1, "INSERT", server=1, ref=Z, builder=1, seqno=1, preds=[Y, X], requests=[]),
        trace.event(
            1,
            "INTERPRET",
            server=1,
            ref=Z,
            builder=1,
            labels=[
                {
                    "label": [0, 1],
                    "fed": [msg_hex(0, 1)],
                    "emitted": [msg_hex(1, r) for r in range(4)],
                    "state": "22" * 32,
                    "skipped": 0,
                }
            ],
        ),
    ]
    return scenario, events


def forged_duplicate() -> tuple[Scenario, list[dict]]:
    """Server 1 references block X twice along its chain: the echo from X is
    fed a second time (one no-duplication violation)."""
    scenario, events = forged_base()
    events.append(
        trace.event(2, "INSERT", server=1, ref=W, builder=1, seqno=2, preds=[Z, X], requests=[])
    )
    events.append(
        trace.event(
            2,
            "INTERPRET",
            server=1,
            ref=W,
            builder=1,
            labels=[
                {
                    "label": [0, 1],
                    "fed": [msg_hex(0, 1), msg_hex(1, 1)],
                    "emitted": [],
                    "state": "33" * 32,
                    "skipped": 0,
                }
            ],
        )
    )
    return scenario, events


def forged_unsigned_origin() -> tuple[Scenario, list[dict]]:
    """An in-buffer claims a message from sender 2 although no referenced
    block of builder 2 emitted it (one authenticity violation)."""
    scenario, events = forged_base()
    events.append(
        trace.event(2, "INSERT", server=1, ref=W, builder=1, seqno=2, preds=[Z], requests=[])
    )
    events.append(
        trace.event(
            2,
            "INTERPRET",
            server=1,
            ref=W,
            builder=1,
            labels=[
                {
                    "label": [0, 1],
                    "fed": [msg_hex(1, 1), msg_hex(2, 1)],
                    "emitted": [],
                    "state": "33" * 32,
                    "skipped": 0,
                }
            ],
        )
    )
    return scenario, events
