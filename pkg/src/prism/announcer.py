"""Announcer: finds the max (or median) of permuted encodings and re-shares it.

It only ever talks to the two additive servers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ProtocolError
from .messages import MsgType, RoundMessage
from .query import QuerySpec
from .sharing import RandomStream, reconstruct_vector

_SERVERS = ("server1", "server2")


@dataclass(frozen=True)
class AnnouncerResult:
    max_shares: tuple
    index_shares: tuple | None
    reveal_identity: bool
    value: int = 0
    index: int = 0

    def __post_init__(self):
        if (self.index_shares is not None) != self.reveal_identity:
            raise ProtocolError("index shares travel exactly when identity is revealed")


def _combine(out1, out2, max_modulus: int) -> list[int]:
    if len(out1) != len(out2):
        raise ProtocolError(f"server vectors differ in length: {len(out1)} vs {len(out2)}")
    if len(out1) == 0:
        raise ProtocolError("nothing to compare")
    return [int(v) for v in reconstruct_vector([np.asarray(out1, dtype=object),
                                                np.asarray(out2, dtype=object)], max_modulus)]


def _reshare(value: int, modulus: int, rng) -> tuple:
    s1 = int(rng.below(modulus))
    return s1, (value - s1) % modulus


def combine_and_findmax(out1, out2, max_modulus: int, reveal_identity: bool,
                        rng=None) -> AnnouncerResult:
    """Sum the two vectors, take the max (first index on ties) and re-share."""
    rng = rng or RandomStream(0)
    fout = _combine(out1, out2, max_modulus)
    best = max(fout)
    index = fout.index(best)
    max_shares = _reshare(best, max_modulus, rng)
    index_shares = _reshare(index, max_modulus, rng) if reveal_identity else None
    return AnnouncerResult(max_shares, index_shares, reveal_identity, best, index)


def median_select(out1, out2, max_modulus: int, rng=None) -> AnnouncerResult:
    """Lower median of the summed vector, re-shared."""
    rng = rng or RandomStream(0)
    fout = _combine(out1, out2, max_modulus)
    order = sorted(range(len(fout)), key=lambda i: (fout[i], i))
    index = order[(len(fout) - 1) // 2]
    return AnnouncerResult(_reshare(fout[index], max_modulus, rng), None, False, fout[index], index)


class AnnouncerNode:
    """Waits for both servers' permuted matrices, answers each row."""

    name = "announcer"

    def __init__(self, view, seed: int = 0):
        self.view = view
        self.seed = seed
        self._pending: dict = {}

    def handle(self, msg: RoundMessage) -> list[RoundMessage]:
        if msg.sender not in _SERVERS:
            raise ProtocolError(f"announcer only talks to {_SERVERS}, not {msg.sender}")
        if msg.mtype != MsgType.MAX_ROUND:
            raise ProtocolError(f"announcer cannot handle {msg.mtype.name}")
        box = self._pending.setdefault(msg.query_id, {})
        if msg.sender in box:
            raise ProtocolError(f"duplicate max round from {msg.sender}")
        box[msg.sender] = msg
        if len(box) < len(_SERVERS):
            return []
        del self._pending[msg.query_id]
        m1, m2 = box["server1"], box["server2"]
        shape = tuple(int(x) for x in m1.vector("shape"))
        if shape != tuple(int(x) for x in m2.vector("shape")) or len(shape) != 2:
            raise ProtocolError("servers disagree on the matrix shape")
        spec = QuerySpec.from_json(m1.json("spec"))
        rows, cols = shape
        v1 = np.asarray(m1.vector("v"), dtype=object).reshape(rows, cols)
        v2 = np.asarray(m2.vector("v"), dtype=object).reshape(rows, cols)
        rng = RandomStream([self.seed, msg.query_id])
        mod = self.view.max_modulus
        reveal = spec.op == "max" and spec.reveal_max_identity
        results = []
        for r in range(rows):
            if spec.op == "median":
                results.append(median_select(v1[r], v2[r], mod, rng))
            else:
                results.append(combine_and_findmax(v1[r], v2[r], mod, reveal, rng))
        replies = []
        for k, server in enumerate(_SERVERS):
            items = {"max": np.array([res.max_shares[k] for res in results], dtype=object)}
            if reveal:
                items["index"] = np.array([res.index_shares[k] for res in results], dtype=object)
            replies.append(RoundMessage(MsgType.MAX_ROUND, self.name, server, msg.query_id, items))
        return replies
