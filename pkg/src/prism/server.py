"""Server-side oblivious evaluation and the per-server state machine.

Every function here takes only the calling server's own view and stored
shares; nothing accepts another server's state.
"""
from __future__ import annotations

import hashlib
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .algebra import OpCounter, Permutation, mod_pow, pow_vector, prg_sequence
from .errors import ParameterError, ProtocolError
from .messages import MsgType, RoundMessage
from .query import QuerySpec
from .sharing import RandomStream

DEFAULT_CHUNK = 65536
ATTACKS = ("drop_cell", "replay_cell", "forge_cell", "skip_all")
_KEEP_QUERIES = 4


def _stack(vectors) -> np.ndarray:
    if not vectors:
        raise ProtocolError("no share vectors to evaluate")
    n = len(vectors[0])
    if any(len(v) != n for v in vectors):
        raise ProtocolError(f"share vectors differ in length: {sorted({len(v) for v in vectors})}")
    return np.vstack([np.asarray(v, dtype=np.int64) for v in vectors])


def _exp_chunks(g: int, exps: np.ndarray, modulus: int, exp_bits: int, chunk_size: int,
                workers: int, counter: OpCounter | None) -> np.ndarray:
    n = exps.shape[0]
    bounds = [(lo, min(n, lo + chunk_size)) for lo in range(0, n, chunk_size)] or [(0, 0)]
    out = np.empty(n, dtype=np.uint64)

    def run(span):
        lo, hi = span
        out[lo:hi] = pow_vector(g, exps[lo:hi], modulus, exp_bits)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, bounds))
    else:
        for span in bounds:
            run(span)
    if counter is not None:
        counter.add(exp_bits * n)
    return out


def psi_eval(view, table_shares, m_share: int, chunk_size: int = DEFAULT_CHUNK, workers: int = 1,
             counter: OpCounter | None = None) -> np.ndarray:
    """``g ** ((sum of shares - m_share) mod delta) mod eta'`` per cell."""
    delta = view.delta
    total = _stack(table_shares).sum(axis=0) % delta
    exps = (total - int(m_share)) % delta
    return _exp_chunks(view.g, exps, view.eta_prime, delta.bit_length(), chunk_size, workers, counter)


def vout_eval(view, complement_shares, chunk_size: int = DEFAULT_CHUNK, workers: int = 1,
              counter: OpCounter | None = None) -> np.ndarray:
    """``g ** (sum of complement shares mod delta) mod eta'`` per cell."""
    delta = view.delta
    exps = _stack(complement_shares).sum(axis=0) % delta
    return _exp_chunks(view.g, exps, view.eta_prime, delta.bit_length(), chunk_size, workers, counter)


def query_prg_seed(prg_seed: int, query_id: int) -> int:
    """Per-query PRG seed so repeated queries never reuse one random vector."""
    raw = hashlib.blake2b(f"{prg_seed}:{query_id}".encode(), digest_size=16).digest()
    return int.from_bytes(raw, "little")


def psu_eval(view, table_shares, query_id: int = 0) -> np.ndarray:
    """``(sum of shares) * rand[i] mod delta`` with ``rand`` from the shared PRG."""
    delta = view.delta
    total = _stack(table_shares).sum(axis=0) % delta
    rand = prg_sequence(query_prg_seed(view.prg_seed, query_id), max(1, total.shape[0]), delta)
    return (total * rand[:total.shape[0]]) % delta


def count_permute(output, pf_s1: Permutation) -> np.ndarray:
    return pf_s1.apply(np.asarray(output))


def sum_eval(p: int, payload_shares, z_share) -> np.ndarray:
    """``sum_j payload_j[i] * z[i]`` in F_p, all at this server's evaluation point."""
    if not payload_shares:
        raise ProtocolError("no payload shares")
    n = len(z_share)
    acc = np.zeros(n, dtype=object)
    for v in payload_shares:
        if len(v) != n:
            raise ProtocolError("payload and z share vectors differ in length")
        v = np.asarray(v, dtype=object)
        if n and (v.max() >= p or v.min() < 0):
            raise ProtocolError("payload share outside the field")
        acc = (acc + v) % p
    return (acc * np.asarray(z_share, dtype=object)) % p


def max_collect_permute(v_by_owner, pf_shared: Permutation) -> np.ndarray:
    """Stack one share vector per owner into columns and permute the owner axis."""
    if any(v is None for v in v_by_owner) or len(v_by_owner) != pf_shared.n:
        raise ProtocolError("missing owner share in max round")
    matrix = np.column_stack([np.asarray(v, dtype=object) for v in v_by_owner])
    return pf_shared.apply(matrix.T).T


def fpos_assemble(alpha_by_owner) -> np.ndarray:
    """Owner-ordered matrix of alpha shares, one column per owner."""
    if any(a is None for a in alpha_by_owner):
        raise ProtocolError("missing owner share in identity round")
    return np.column_stack([np.asarray(a, dtype=object) for a in alpha_by_owner])


@dataclass
class Tamper:
    """A one-shot malicious mutation of the next outgoing ``out`` vector."""

    attack: str
    cell: int | None = None
    source: int | None = None
    armed: bool = True

    def __post_init__(self):
        if self.attack not in ATTACKS:
            raise ParameterError(f"unknown attack {self.attack!r}; choose from {ATTACKS}")
        self.cells = ()

    def apply(self, out: np.ndarray, view, rng: RandomStream) -> np.ndarray:
        out = np.array(out, copy=True)
        n = out.shape[0]
        if not self.armed or n == 0:
            return out
        self.armed = False
        if self.attack == "skip_all":
            out[:] = 1
            self.cells = tuple(range(n))
            return out
        if self.cell is None:
            self.cell = rng.below(n)
        if self.attack == "drop_cell":
            out[self.cell] = 1
        elif self.attack == "replay_cell":
            if n < 2:
                return out
            if self.source is None:
                self.source = (self.cell + 1 + rng.below(n - 1)) % n
            out[self.cell] = out[self.source]
        else:
            out[self.cell] = mod_pow(view.g, rng.below(view.delta), view.eta_prime)
        self.cells = (self.cell,)
        return out


class ServerNode:
    """Deterministic request/response state machine for one server.

    ``stored`` maps ``(owner, query_id, column)`` to this server's share
    vector; only messages addressed to this server ever reach it.
    """

    def __init__(self, name: str, view, seed: int = 0, tamper: Tamper | None = None,
                 chunk_size: int = DEFAULT_CHUNK, workers: int = 1):
        if name not in ("server1", "server2", "server3"):
            raise ParameterError(f"not a server role: {name!r}")
        self.name = name
        self.index = int(name[-1])
        self.view = view
        self.seed = seed
        self.tamper = tamper
        self.chunk_size = chunk_size
        self.workers = workers
        self.counter = OpCounter()
        self.stored: dict = {}
        self._queries: OrderedDict = OrderedDict()

    @property
    def m(self) -> int:
        return self.view.m

    def owners(self) -> list[str]:
        return [f"owner{j}" for j in range(1, self.m + 1)]

    def _context(self, qid: int) -> dict:
        if qid not in self._queries:
            self._queries[qid] = {"v": {}, "alpha": {}}
            while len(self._queries) > _KEEP_QUERIES:
                old, _ = self._queries.popitem(last=False)
                self.stored = {k: v for k, v in self.stored.items() if k[1] != old}
        self._queries.move_to_end(qid)
        return self._queries[qid]

    def _column(self, qid: int, column: str) -> list:
        vectors = []
        for owner in self.owners():
            try:
                vectors.append(self.stored[(owner, qid, column)])
            except KeyError:
                raise ProtocolError(f"{self.name} has no {column!r} shares from {owner} for query {qid}") from None
        return vectors

    def _reply(self, mtype, receiver, qid, items) -> RoundMessage:
        return RoundMessage(mtype, self.name, receiver, qid, items)

    def handle(self, msg: RoundMessage) -> list[RoundMessage]:
        if msg.receiver != self.name:
            raise ProtocolError(f"{self.name} received a message for {msg.receiver}")
        if msg.sender.startswith("server"):
            raise ProtocolError("servers never talk to each other")
        ctx = self._context(msg.query_id)
        if msg.mtype == MsgType.STORE_SHARES:
            for key, vec in msg.items.items():
                self.stored[(msg.sender, msg.query_id, key)] = vec
            return []
        if msg.mtype in (MsgType.PSI_EVAL, MsgType.PSU_EVAL):
            return self._set_eval(msg, ctx)
        if msg.mtype == MsgType.SUM_EVAL:
            return self._sum_eval(msg)
        if msg.mtype == MsgType.MAX_ROUND:
            if msg.sender == "announcer":
                return self._forward_max(msg)
            return self._collect_max(msg, ctx)
        if msg.mtype == MsgType.FPOS:
            return self._collect_alpha(msg, ctx)
        raise ProtocolError(f"{self.name} cannot handle {msg.mtype.name}")

    def _set_eval(self, msg: RoundMessage, ctx: dict) -> list[RoundMessage]:
        if self.index == 3:
            raise ProtocolError("server3 holds no additive shares")
        spec = QuerySpec.from_json(msg.json("spec"))
        ctx["spec"] = spec
        qid = msg.query_id
        column = "bits"
        cells = None
        if "level" in msg.items:
            column = f"bits.{msg.scalar('level')}"
            cells = np.asarray(msg.vector("cells"), dtype=np.int64)
        shares = self._column(qid, column)
        if cells is not None:
            if cells.size and (cells.min() < 0 or cells.max() >= len(shares[0])):
                raise ProtocolError("requested cells out of range")
            shares = [np.asarray(v)[cells] for v in shares]
        items = {}
        if spec.set_op == "psi":
            out = psi_eval(self.view, shares, self.view.m_share, self.chunk_size, self.workers, self.counter)
        else:
            out = psu_eval(self.view, shares, qid)
        if self.tamper is not None and self.tamper.armed:
            out = self.tamper.apply(out, self.view, RandomStream([self.seed, self.index, qid]))
        if spec.verify:
            items["vout"] = vout_eval(self.view, self._column(qid, "comp"), self.chunk_size, self.workers)
        if spec.op == "count":
            out = count_permute(out, self.view.pf_s1)
        items["out"] = out
        if cells is not None:
            items["level"] = msg.vector("level")
            items["cells"] = cells
        selected = msg.scalar("selected") if "selected" in msg.items else 0
        if spec.op in ("sum", "avg") and selected:
            receivers = [f"owner{selected}"]
        else:
            receivers = self.owners()
        return [self._reply(MsgType.RESULT, r, qid, dict(items)) for r in receivers]

    def _sum_eval(self, msg: RoundMessage) -> list[RoundMessage]:
        spec = QuerySpec.from_json(msg.json("spec"))
        qid = msg.query_id
        z = msg.vector("z")
        p = self.view.shamir_p
        items = {"z": z}
        for k in range(len(spec.agg_attrs)):
            items[f"sum.{k}"] = sum_eval(p, self._column(qid, f"sum.{k}"), z)
        if spec.op == "avg":
            items["count"] = sum_eval(p, self._column(qid, "count"), z)
        return [self._reply(MsgType.RESULT, r, qid, dict(items)) for r in self.owners()]

    def _collect_max(self, msg: RoundMessage, ctx: dict) -> list[RoundMessage]:
        if self.index == 3:
            raise ProtocolError("server3 takes no part in the max round")
        ctx["v"][msg.sender] = msg.vector("v")
        if "spec" in msg.items:
            ctx["spec_json"] = msg.vector("spec")
        if len(ctx["v"]) < self.m:
            return []
        matrix = max_collect_permute([ctx["v"].get(o) for o in self.owners()], self.view.pf_shared)
        ctx["v"] = {}
        items = {"v": matrix.ravel(), "shape": np.array(matrix.shape, dtype=np.int64),
                 "spec": ctx["spec_json"]}
        return [self._reply(MsgType.MAX_ROUND, "announcer", msg.query_id, items)]

    def _forward_max(self, msg: RoundMessage) -> list[RoundMessage]:
        items = {k: msg.vector(k) for k in ("max", "index") if k in msg.items}
        return [self._reply(MsgType.RESULT, r, msg.query_id, dict(items)) for r in self.owners()]

    def _collect_alpha(self, msg: RoundMessage, ctx: dict) -> list[RoundMessage]:
        if self.index == 3:
            raise ProtocolError("server3 takes no part in the identity round")
        ctx["alpha"][msg.sender] = msg.vector("alpha")
        if len(ctx["alpha"]) < self.m:
            return []
        fpos = fpos_assemble([ctx["alpha"].get(o) for o in self.owners()])
        ctx["alpha"] = {}
        items = {"fpos": fpos.ravel(), "shape": np.array(fpos.shape, dtype=np.int64)}
        return [self._reply(MsgType.RESULT, r, msg.query_id, dict(items)) for r in self.owners()]
