"""Round-driven protocol execution over a FIFO message hub.

Every message, in both modes, is encoded to a wire frame, logged in the
transcript and decoded again before it reaches its receiver, so the
simulation exercises exactly the bytes the network would carry.
"""
from __future__ import annotations

import json
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .announcer import AnnouncerNode
from .errors import ParameterError, ProtocolError, TamperAlarm
from .messages import MsgType, RoundMessage, decode_frame, digest, encode_frame, json_item, role_kind, text_item
from .owner import QUERIER, OwnerNode
from .params import PublicParams, load_view, view_for
from .query import QueryResult, QuerySpec
from .server import ServerNode, Tamper
from .sharing import RandomStream

ROLE_FILES = ("owner", "server1", "server2", "server3", "announcer")
_FORBIDDEN = {("server", "server"), ("announcer", "owner"), ("owner", "announcer")}


@dataclass(frozen=True)
class TranscriptEntry:
    sender: str
    receiver: str
    mtype: str
    query_id: int
    digest: int


@dataclass
class Transcript:
    entries: list = field(default_factory=list)

    def record(self, msg: RoundMessage, payload_digest: int) -> None:
        edge = (role_kind(msg.sender), role_kind(msg.receiver))
        if edge in _FORBIDDEN:
            raise ProtocolError(f"forbidden edge {msg.sender} -> {msg.receiver}")
        self.entries.append(TranscriptEntry(msg.sender, msg.receiver, msg.mtype.name, msg.query_id, payload_digest))

    def __len__(self) -> int:
        return len(self.entries)

    def edges(self) -> set:
        return {(e.sender, e.receiver) for e in self.entries}

    def kind_edges(self) -> set:
        return {(role_kind(e.sender), role_kind(e.receiver)) for e in self.entries}

    def server_edges(self) -> list:
        return [e for e in self.entries if role_kind(e.sender) == role_kind(e.receiver) == "server"]

    def rounds(self, query_id: int | None = None) -> int:
        """Owner<->server rounds: an owner request after server replies opens a new one.

        Share uploads are not rounds; they happen once, before any query.
        """
        rounds = 0
        replied = True
        for e in self.entries:
            if query_id is not None and e.query_id != query_id:
                continue
            kinds = (role_kind(e.sender), role_kind(e.receiver))
            if kinds == ("owner", "server") and e.mtype != "STORE_SHARES":
                if replied:
                    rounds += 1
                    replied = False
            elif kinds == ("server", "owner"):
                replied = True
        return rounds

    def to_json(self) -> list:
        return [[e.sender, e.receiver, e.mtype, e.query_id, f"{e.digest:016x}"] for e in self.entries]


class SimTransport:
    """In-process role state machines."""

    def __init__(self, nodes: dict):
        self.nodes = nodes

    def deliver(self, msg: RoundMessage) -> list[RoundMessage]:
        try:
            node = self.nodes[msg.receiver]
        except KeyError:
            raise ProtocolError(f"no role {msg.receiver!r}") from None
        return node.handle(msg)

    def close(self) -> None:
        pass


class Hub:
    """FIFO message switch; messages addressed to the orchestrator land in ``inbox``."""

    def __init__(self, transport, transcript: Transcript | None = None, max_messages: int = 10_000_000):
        self.transport = transport
        self.transcript = transcript if transcript is not None else Transcript()
        self.inbox: list[RoundMessage] = []
        self.max_messages = max_messages

    def run(self, messages) -> None:
        queue = deque(messages)
        handled = 0
        while queue:
            msg = queue.popleft()
            frame = encode_frame(msg)
            self.transcript.record(msg, digest(frame[13:]))
            wire = decode_frame(frame)
            if wire.receiver == "orchestrator":
                self.inbox.append(wire)
                continue
            for reply in self.transport.deliver(wire):
                if reply.sender != wire.receiver:
                    raise ProtocolError(f"{wire.receiver} tried to speak as {reply.sender}")
                queue.append(reply)
            handled += 1
            if handled > self.max_messages:
                raise ProtocolError("message budget exhausted; protocol does not terminate")


@dataclass
class QueryOutcome:
    result: QueryResult
    transcript: Transcript
    query_id: int
    verification: dict | None = None
    timings: dict = field(default_factory=dict)

    @property
    def rounds(self) -> int:
        return self.transcript.rounds(self.query_id)

    def to_json(self, timings: bool = False) -> dict:
        out = {"query_id": self.query_id, **self.result.to_json(), "verification": self.verification,
               "rounds": self.rounds}
        if timings:
            out["timings"] = self.timings
        return out

    def dumps(self, timings: bool = False) -> str:
        return json.dumps(self.to_json(timings), sort_keys=True)


def role_views(params: PublicParams | None = None, directory=None) -> dict:
    if params is not None:
        return {r: view_for(params, r) for r in ROLE_FILES}
    return {r: load_view(r, directory) for r in ROLE_FILES}


def build_nodes(views: dict, owners, seed: int = 0, tamper: dict | None = None, workers: int = 1,
                chunk_size: int | None = None) -> dict:
    m = views["owner"].m
    if len(owners) != m:
        raise ParameterError(f"parameters are for {m} owners, got {len(owners)} datasets")
    tamper = dict(tamper or {})
    nodes = {}
    for j, rel in enumerate(owners, start=1):
        nodes[f"owner{j}"] = OwnerNode(f"owner{j}", views["owner"], rel, seed)
    extra = {} if chunk_size is None else {"chunk_size": chunk_size}
    for k in (1, 2, 3):
        name = f"server{k}"
        attack = tamper.pop(name, None)
        if isinstance(attack, str):
            attack = Tamper(attack)
        nodes[name] = ServerNode(name, views[name], seed, attack, workers=workers, **extra)
    if tamper:
        raise ParameterError(f"tampering is only modelled for servers, not {sorted(tamper)}")
    nodes["announcer"] = AnnouncerNode(views["announcer"], seed)
    return nodes


def select_owner(seed: int, query_id: int, m: int) -> int:
    """The seeded-random owner that receives the first-round output of sum/avg."""
    return 1 + RandomStream([seed, query_id, 0x5E1]).below(m)


def _start(owner: str, qid: int, phase: str, spec: QuerySpec, selected: int) -> RoundMessage:
    items = {"phase": text_item(phase)}
    if phase == "upload":
        items["spec"] = json_item(spec.to_json())
        items["selected"] = np.array([selected])
    return RoundMessage(MsgType.START, "orchestrator", owner, qid, items)


def execute(hub: Hub, spec: QuerySpec, m: int, seed: int = 0, query_id: int = 1) -> QueryOutcome:
    """Drive one query through ``hub`` with a barrier between upload and query."""
    owners = [f"owner{j}" for j in range(1, m + 1)]
    selected = select_owner(seed, query_id, m)
    timings = {}
    t0 = time.perf_counter()
    hub.run(_start(o, query_id, "upload", spec, selected) for o in owners)
    t1 = time.perf_counter()
    hub.run([_start(QUERIER, query_id, "query", spec, selected)])
    t2 = time.perf_counter()
    timings["upload_s"] = t1 - t0
    timings["query_s"] = t2 - t1
    answers = {}
    for msg in hub.inbox:
        if msg.query_id == query_id and msg.mtype == MsgType.RESULT:
            if msg.sender in answers:
                raise ProtocolError(f"{msg.sender} answered twice")
            answers[msg.sender] = msg.json()
    hub.inbox = [msg for msg in hub.inbox if msg.query_id != query_id]
    missing = [o for o in owners if o not in answers]
    if missing:
        raise ProtocolError(f"no final answer from {missing}")
    first = answers[owners[0]]
    for o in owners[1:]:
        if answers[o] != first:
            raise ProtocolError(f"{o} disagrees with {owners[0]} on the result")
    outcome = QueryOutcome(result=QueryResult.from_json(first["result"]), transcript=hub.transcript,
                           query_id=query_id, verification=first["verification"], timings=timings)
    ver = first["verification"]
    if ver is not None and not ver["passed"]:
        raise TamperAlarm(ver["cells"], outcome)
    return outcome


def run_query(spec: QuerySpec, owners=None, params: PublicParams | None = None, *, mode: str = "sim",
              seed: int = 0, query_id: int = 1, params_dir=None, endpoints: dict | None = None,
              tamper: dict | None = None, workers: int = 1, chunk_size: int | None = None) -> QueryOutcome:
    """Run one query end to end.

    ``sim`` builds every role in this process; ``owners`` are the owners'
    :class:`OwnerRelation` datasets.  ``net`` talks to already running role
    processes at ``endpoints`` (role -> (host, port)), which hold their own
    data; ``owners`` is then ignored.
    """
    if mode == "sim":
        if owners is None:
            raise ParameterError("simulation needs the owners' datasets")
        views = role_views(params, params_dir)
        transport = SimTransport(build_nodes(views, list(owners), seed, tamper, workers, chunk_size))
        m = len(owners)
    elif mode == "net":
        from .transport import NetTransport
        if tamper:
            raise ParameterError("tampering is only available in simulation")
        if not endpoints:
            raise ParameterError("networked mode needs role endpoints")
        transport = NetTransport(endpoints)
        m = sum(1 for r in endpoints if r.startswith("owner"))
        if m < 2:
            raise ParameterError("networked mode needs endpoints for at least two owners")
    else:
        raise ParameterError(f"unknown mode {mode!r}")
    try:
        return execute(Hub(transport), spec, m, seed, query_id)
    finally:
        transport.close()


def run_bucketized_psi(spec: QuerySpec, owners=None, params: PublicParams | None = None, **kwargs) -> QueryOutcome:
    """Level-by-level PSI over the bucket tree; stats land in ``result.metadata['bucket']``."""
    if not spec.bucketize:
        raise ParameterError("spec has no bucket fanout")
    return run_query(spec, owners, params, **kwargs)
