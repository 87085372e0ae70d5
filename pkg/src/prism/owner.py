"""DB-owner computation: tables, shares, finalization, verification, max codec."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import IngestionError, ParameterError, ProtocolError, TamperAlarm
from .messages import MsgType, RoundMessage, json_item
from .params import noise_cap
from .query import Domain, OwnerRelation, QueryResult, QuerySpec, average, scale_value
from .sharing import (ADDITIVE_SERVERS, SHAMIR_SERVERS, RandomStream, additive_share_vector,
                      lagrange_vector, reconstruct_vector, shamir_share_vector)

QUERIER = "owner1"
ADDITIVE_ROLES = tuple(f"server{k}" for k in range(1, ADDITIVE_SERVERS + 1))
SHAMIR_ROLES = tuple(f"server{k}" for k in range(1, SHAMIR_SERVERS + 1))


@dataclass
class PresenceTable:
    bits: np.ndarray
    domain: list
    payload_sum: tuple = ()
    payload_count: np.ndarray | None = None

    def __len__(self) -> int:
        return int(self.bits.shape[0])


@dataclass
class PsiResult:
    fop: np.ndarray
    common: np.ndarray


@dataclass(frozen=True)
class MaxEncoding:
    M: int
    r: int
    v: int


@dataclass
class VerificationVerdict:
    passed: bool
    cells: tuple = ()

    def to_json(self) -> dict:
        return {"passed": self.passed, "cells": list(self.cells)}


def _as_domain(domain) -> Domain:
    if isinstance(domain, Domain):
        return domain
    return Domain(("value",), {"value": list(domain)})


def build_presence_table(column_values, domain) -> PresenceTable:
    dom = _as_domain(domain)
    bits = np.zeros(len(dom), dtype=np.int64)
    for v in column_values:
        bits[dom.cell(v)] = 1
    return PresenceTable(bits=bits, domain=dom.labels())


def build_sum_table(rows, domain) -> PresenceTable:
    """``rows`` are ``(key, payload)`` pairs; ``payload`` is an int or a tuple of ints."""
    dom = _as_domain(domain)
    n = len(dom)
    bits = np.zeros(n, dtype=np.int64)
    count = np.zeros(n, dtype=np.int64)
    sums = None
    for key, payload in rows:
        values = payload if isinstance(payload, (tuple, list)) else (payload,)
        if sums is None:
            sums = [np.zeros(n, dtype=object) for _ in values]
        if len(values) != len(sums):
            raise IngestionError("rows carry different numbers of aggregate values")
        cell = dom.cell(key)
        bits[cell] = 1
        count[cell] += 1
        for s, v in zip(sums, values):
            v = int(v)
            if v < 0:
                raise IngestionError(f"aggregate value {v} is negative")
            s[cell] += v
    return PresenceTable(bits=bits, domain=dom.labels(), payload_sum=tuple(sums or ()),
                         payload_count=count)


def share_tables(table: PresenceTable, view, rng, verify: bool = False) -> dict:
    """Split a table into per-server share bundles ``{role: {item key: vector}}``.

    Presence bits (and, with ``verify``, the complement table permuted by
    ``pf_db1``) become two additive share vectors mod delta; payload columns
    become three degree-1 Shamir share vectors.
    """
    bundle = {role: {} for role in SHAMIR_ROLES}
    for role, vec in zip(ADDITIVE_ROLES, additive_share_vector(table.bits, view.delta, rng)):
        bundle[role]["bits"] = vec
    if verify:
        complement = view.pf_db1.apply(1 - table.bits)
        for role, vec in zip(ADDITIVE_ROLES, additive_share_vector(complement, view.delta, rng)):
            bundle[role]["comp"] = vec
    p = view.shamir_p
    for k, payload in enumerate(table.payload_sum):
        for role, vec in zip(SHAMIR_ROLES, shamir_share_vector(payload, p, rng)):
            bundle[role][f"sum.{k}"] = vec
    if table.payload_count is not None and table.payload_sum:
        for role, vec in zip(SHAMIR_ROLES, shamir_share_vector(table.payload_count, p, rng)):
            bundle[role]["count"] = vec
    return {role: items for role, items in bundle.items() if items}


def _check_lengths(*vectors) -> None:
    if len({len(v) for v in vectors}) > 1:
        raise ProtocolError(f"result vectors differ in length: {[len(v) for v in vectors]}")


def psi_finalize(out1, out2, view) -> PsiResult:
    _check_lengths(out1, out2)
    eta = view.eta
    a = np.asarray(out1, dtype=np.uint64) % np.uint64(eta)
    b = np.asarray(out2, dtype=np.uint64) % np.uint64(eta)
    fop = ((a * b) % np.uint64(eta)).astype(np.int64)
    return PsiResult(fop=fop, common=(fop == 1).astype(np.int64))


def psu_finalize(out1, out2, delta: int) -> np.ndarray:
    _check_lengths(out1, out2)
    total = (np.asarray(out1, dtype=np.int64) + np.asarray(out2, dtype=np.int64)) % delta
    return (total != 0).astype(np.int64)


def check_psi(fop, vout1, vout2, view) -> VerificationVerdict:
    """Per-cell test ``fop * vout1 * vout2 == 1 (mod eta)`` after undoing ``pf_db1``."""
    _check_lengths(fop, vout1, vout2)
    eta = np.uint64(view.eta)
    pv1 = view.pf_db1.unapply(np.asarray(vout1, dtype=np.uint64) % eta)
    pv2 = view.pf_db1.unapply(np.asarray(vout2, dtype=np.uint64) % eta)
    prod = (np.asarray(fop, dtype=np.uint64) * ((pv1 * pv2) % eta)) % eta
    bad = np.flatnonzero(prod != 1)
    return VerificationVerdict(passed=bad.size == 0, cells=tuple(int(i) for i in bad))


def verify_psi(fop, vout1, vout2, view) -> VerificationVerdict:
    verdict = check_psi(fop, vout1, vout2, view)
    if not verdict.passed:
        raise TamperAlarm(verdict.cells, verdict)
    return verdict


def make_z_shares(common, view, rng) -> list[np.ndarray]:
    z = (np.asarray(common) != 0).astype(np.int64)
    return shamir_share_vector(z, view.shamir_p, rng)


def sum_finalize(vectors, view) -> np.ndarray:
    """Degree-2 interpolation at 0 of the three servers' product vectors."""
    if len(vectors) != SHAMIR_SERVERS:
        raise ProtocolError(f"need {SHAMIR_SERVERS} result vectors, got {len(vectors)}")
    _check_lengths(*vectors)
    try:
        return lagrange_vector(range(1, SHAMIR_SERVERS + 1), vectors, view.shamir_p)
    except ParameterError as exc:
        raise ProtocolError(str(exc)) from exc


def max_encode(group_max: int, view, rng, present: bool = True) -> tuple:
    """Order-preserving encoding ``F(M) + r`` and its two additive shares.

    An owner without the group sends the sentinel 0, which lies below every
    real encoding since ``F(0) >= 1``; it never claims to hold the maximum.
    """
    mod = view.max_modulus
    if present:
        M = int(group_max)
        if M < 0:
            raise ParameterError(f"cannot encode negative value {M}")
        if M > view.domain_max:
            raise ParameterError(f"value {M} exceeds domain_max {view.domain_max}")
        r = int(rng.below(noise_cap(view.F_coeffs, M, view.m) + 1))
        v = view.F(M) + r
    else:
        M, r, v = 0, 0, 0
    if v >= mod:
        raise ParameterError(f"encoding {v} does not fit max_modulus {mod}")
    s1 = int(rng.below(mod))
    return MaxEncoding(M, r, v), (s1, (v - s1) % mod)


def decode_max(value: int, view) -> int:
    """The ``z`` with ``F(z) <= value < F(z+1)``, by binary search."""
    lo, hi = 0, view.domain_max + 1
    if value < view.F(lo) or value >= view.F(hi):
        raise ProtocolError(f"reconstructed value {value} is not bracketed by F over [0, {hi}]")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if view.F(mid) <= value:
            lo = mid
        else:
            hi = mid
    return lo


def max_finalize(max_shares, index_shares, view) -> tuple:
    """Return ``(z, pos)``; ``pos`` is the owner slot (0-based) or None."""
    mod = view.max_modulus
    z = decode_max(sum(int(s) for s in max_shares) % mod, view)
    pos = None
    if index_shares is not None:
        index = sum(int(s) for s in index_shares) % mod
        if index >= view.m:
            raise ProtocolError(f"announced index {index} is not an owner slot")
        pos = view.pf_shared.inverse()(index)
    return z, pos


def max_round3_flag(holds_max: bool, view, rng) -> tuple:
    mod = view.max_modulus
    s1 = int(rng.below(mod))
    return s1, (int(bool(holds_max)) - s1) % mod


def fpos_combine(fpos1, fpos2, modulus: int) -> np.ndarray:
    _check_lengths(fpos1, fpos2)
    total = reconstruct_vector([np.asarray(fpos1, dtype=object), np.asarray(fpos2, dtype=object)], modulus)
    bits = np.array([int(t) for t in total], dtype=np.int64)
    if bits.size and (bits.min() < 0 or bits.max() > 1):
        raise ProtocolError("holder flags did not reconstruct to bits")
    return bits


def count_finalize(permuted_out1, permuted_out2, view, over: str = "psi") -> int:
    if over == "psi":
        return int(psi_finalize(permuted_out1, permuted_out2, view).common.sum())
    return int(psu_finalize(permuted_out1, permuted_out2, view.delta).sum())


def build_bucket_tree(bits, fanout: int) -> list[np.ndarray]:
    """Levels leaf first; each parent ORs ``fanout`` children; stop at <= fanout nodes."""
    if fanout < 2:
        raise ParameterError("fanout must be >= 2")
    levels = [(np.asarray(bits) != 0).astype(np.int64)]
    while levels[-1].shape[0] > fanout:
        child = levels[-1]
        n = -(-child.shape[0] // fanout)
        padded = np.zeros(n * fanout, dtype=np.int64)
        padded[:child.shape[0]] = child
        levels.append(padded.reshape(n, fanout).max(axis=1))
    return levels


def bucket_children(cells, fanout: int, child_size: int) -> np.ndarray:
    cells = np.asarray(cells, dtype=np.int64)
    if cells.size == 0:
        return cells
    kids = (cells[:, None] * fanout + np.arange(fanout)[None, :]).ravel()
    return kids[kids < child_size]


# -- share bundle files ----------------------------------------------------

def bundle_columns(spec: QuerySpec) -> dict:
    """Column header -> item key, mirroring the data / v-prefixed / a-prefixed layout."""
    a = "_".join(spec.set_attr)
    cols = {a: "bits", f"v{a}": "comp"}
    for k, x in enumerate(spec.agg_attrs):
        cols[x] = f"sum.{k}"
    cols[f"a{a}"] = "count"
    return cols


def write_share_bundle(path, items: dict, spec: QuerySpec) -> None:
    cols = [(name, key) for name, key in bundle_columns(spec).items() if key in items]
    n = len(next(iter(items.values()))) if items else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([name for name, _ in cols])
        for i in range(n):
            w.writerow([int(items[key][i]) for _, key in cols])


def read_share_bundle(path, spec: QuerySpec) -> dict:
    lookup = bundle_columns(spec)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise IngestionError(f"{path}: empty share bundle")
    header = rows[0]
    unknown = [h for h in header if h not in lookup]
    if unknown:
        raise IngestionError(f"{path}: unknown columns {unknown}")
    cols = list(zip(*rows[1:])) if len(rows) > 1 else [()] * len(header)
    return {lookup[h]: np.array([int(x) for x in col], dtype=object) for h, col in zip(header, cols)}


# -- owner state machine ---------------------------------------------------

@dataclass
class _Query:
    spec: QuerySpec
    selected: int
    domain: Domain
    table: PresenceTable | None = None
    levels: list = field(default_factory=list)
    inbox: dict = field(default_factory=dict)
    groups: list = field(default_factory=list)
    local: list = field(default_factory=list)
    present: list = field(default_factory=list)
    decoded: list = field(default_factory=list)
    announced: list = field(default_factory=list)
    verdict: VerificationVerdict | None = None
    stats: list = field(default_factory=list)
    done: bool = False


class OwnerNode:
    """One DB owner as a deterministic message-driven state machine."""

    def __init__(self, name: str, view, relation: OwnerRelation, seed: int = 0):
        if not name.startswith("owner") or not name[5:].isdigit():
            raise ParameterError(f"not an owner role: {name!r}")
        self.name = name
        self.index = int(name[5:])
        if not 1 <= self.index <= view.m:
            raise ParameterError(f"{name} is outside 1..{view.m}")
        self.view = view
        self.relation = relation
        self.seed = seed
        self.queries: dict = {}

    def _rng(self, qid: int, stage: int) -> RandomStream:
        return RandomStream([self.seed, self.index, qid, stage])

    def _msg(self, mtype, receiver, qid, items) -> RoundMessage:
        return RoundMessage(mtype, self.name, receiver, qid, items)

    def handle(self, msg: RoundMessage) -> list[RoundMessage]:
        if msg.receiver != self.name:
            raise ProtocolError(f"{self.name} received a message for {msg.receiver}")
        if msg.sender == "announcer":
            raise ProtocolError("owners never talk to the announcer")
        if msg.mtype == MsgType.START:
            return self._start(msg)
        if msg.mtype == MsgType.RESULT and msg.sender.startswith("server"):
            q = self.queries.get(msg.query_id)
            if q is None:
                raise ProtocolError(f"{self.name} has no query {msg.query_id}")
            return self._result(q, msg)
        raise ProtocolError(f"{self.name} cannot handle {msg.mtype.name} from {msg.sender}")

    # -- phase 1: tables and uploads

    def _start(self, msg: RoundMessage) -> list[RoundMessage]:
        phase = msg.text("phase")
        qid = msg.query_id
        if phase == "upload":
            spec = QuerySpec.from_json(msg.json("spec"))
            selected = msg.scalar("selected")
            domain = Domain(spec.set_attr, self.relation.domains)
            if len(domain) != self.view.b:
                raise ParameterError(f"domain has {len(domain)} cells, parameters expect {self.view.b}")
            q = _Query(spec=spec, selected=selected, domain=domain)
            self.queries[qid] = q
            return self._upload(q, qid)
        if phase == "query":
            q = self.queries[qid]
            if self.name != QUERIER:
                return []
            items = {"spec": json_item(q.spec.to_json()), "selected": np.array([q.selected])}
            if q.levels:
                top = len(q.levels) - 1
                items["level"] = np.array([top])
                items["cells"] = np.arange(q.levels[top].shape[0])
            mtype = MsgType.PSI_EVAL if q.spec.set_op == "psi" else MsgType.PSU_EVAL
            return [self._msg(mtype, role, qid, dict(items)) for role in ADDITIVE_ROLES]
        raise ProtocolError(f"unknown phase {phase!r}")

    def _keys(self, q: _Query) -> list:
        return [self.relation.key_of(row, q.spec.set_attr) for row in self.relation.rows]

    def _upload(self, q: _Query, qid: int) -> list[RoundMessage]:
        spec = q.spec
        rng = self._rng(qid, 0)
        if spec.op in ("sum", "avg"):
            rows = [(self.relation.key_of(r, spec.set_attr), tuple(int(r[x]) for x in spec.agg_attrs))
                    for r in self.relation.rows]
            table = build_sum_table(rows, q.domain)
            if not table.payload_sum:
                table.payload_sum = tuple(np.zeros(len(q.domain), dtype=object) for _ in spec.agg_attrs)
            if spec.op == "sum":
                table.payload_count = None
        else:
            table = build_presence_table(self._keys(q), q.domain)
        q.table = table
        if spec.bucketize:
            q.levels = build_bucket_tree(table.bits, spec.bucketize)
            bundle = {role: {} for role in ADDITIVE_ROLES}
            for level, bits in enumerate(q.levels):
                for role, vec in zip(ADDITIVE_ROLES, additive_share_vector(bits, self.view.delta, rng)):
                    bundle[role][f"bits.{level}"] = vec
        else:
            bundle = share_tables(table, self.view, rng, verify=spec.verify)
        return [self._msg(MsgType.STORE_SHARES, role, qid, items) for role, items in bundle.items()]

    # -- result handling

    def _result(self, q: _Query, msg: RoundMessage) -> list[RoundMessage]:
        if q.done:
            raise ProtocolError(f"{self.name} got a late {msg.mtype.name} for finished query {msg.query_id}")
        if "out" in msg.items:
            stage = ("out", msg.scalar("level") if "level" in msg.items else None)
            need = ADDITIVE_ROLES
        elif "sum.0" in msg.items:
            stage, need = ("sum", None), SHAMIR_ROLES
        elif "max" in msg.items:
            stage, need = ("max", None), ADDITIVE_ROLES
        elif "fpos" in msg.items:
            stage, need = ("fpos", None), ADDITIVE_ROLES
        else:
            raise ProtocolError(f"unrecognised result from {msg.sender}")
        box = q.inbox.setdefault(stage, {})
        if msg.sender in box:
            raise ProtocolError(f"duplicate {stage[0]} result from {msg.sender}")
        if msg.sender not in need:
            raise ProtocolError(f"{msg.sender} does not send {stage[0]} results")
        box[msg.sender] = msg
        if len(box) < len(need):
            return []
        parts = [box[r] for r in need]
        qid = msg.query_id
        if stage[0] == "out":
            return self._after_set_round(q, qid, parts, stage[1])
        if stage[0] == "sum":
            return self._after_sum(q, qid, parts)
        if stage[0] == "max":
            return self._after_max(q, qid, parts)
        return self._after_fpos(q, qid, parts)

    def _set_bits(self, q: _Query, out1, out2) -> np.ndarray:
        if q.spec.set_op == "psi":
            return psi_finalize(out1, out2, self.view).common
        return psu_finalize(out1, out2, self.view.delta)

    def _after_set_round(self, q: _Query, qid: int, parts, level) -> list[RoundMessage]:
        spec = q.spec
        out1, out2 = (m.vector("out") for m in parts)
        if level is not None:
            return self._after_level(q, qid, parts, level)
        if spec.op == "count":
            return self._finish(q, qid, QueryResult(op="count", count=count_finalize(out1, out2, self.view, spec.over)))
        bits = self._set_bits(q, out1, out2)
        cells = [int(i) for i in np.flatnonzero(bits)]
        if spec.op in ("psi", "psu"):
            if spec.verify:
                fop = psi_finalize(out1, out2, self.view).fop
                q.verdict = check_psi(fop, parts[0].vector("vout"), parts[1].vector("vout"), self.view)
            return self._finish(q, qid, QueryResult(op=spec.op, groups=tuple(q.domain.label(c) for c in cells)))
        if spec.op in ("sum", "avg"):
            z = make_z_shares(bits, self.view, self._rng(qid, 1))
            items = {"spec": json_item(spec.to_json())}
            return [self._msg(MsgType.SUM_EVAL, role, qid, {**items, "z": zk})
                    for role, zk in zip(SHAMIR_ROLES, z)]
        return self._max_round(q, qid, cells)

    def _after_level(self, q: _Query, qid: int, parts, level: int) -> list[RoundMessage]:
        out1, out2 = (m.vector("out") for m in parts)
        cells = np.asarray(parts[0].vector("cells"), dtype=np.int64)
        common = cells[psi_finalize(out1, out2, self.view).common == 1]
        q.stats.append({"level": level, "cells": int(cells.size), "common": int(common.size)})
        if level == 0 or common.size == 0:
            leaves = sorted(int(c) for c in common) if level == 0 else []
            transmitted = sum(s["cells"] for s in q.stats)
            meta = {"bucket": {"fanout": q.spec.bucketize, "levels": q.stats,
                               "transmitted": transmitted, "domain": len(q.domain)}}
            return self._finish(q, qid, QueryResult(op="psi", groups=tuple(q.domain.label(c) for c in leaves),
                                                    metadata=meta))
        if self.name != QUERIER:
            return []
        kids = bucket_children(common, q.spec.bucketize, q.levels[level - 1].shape[0])
        items = {"spec": json_item(q.spec.to_json()), "selected": np.array([q.selected]),
                 "level": np.array([level - 1]), "cells": kids}
        return [self._msg(MsgType.PSI_EVAL, role, qid, dict(items)) for role in ADDITIVE_ROLES]

    def _after_sum(self, q: _Query, qid: int, parts) -> list[RoundMessage]:
        spec = q.spec
        z = sum_finalize([m.vector("z") for m in parts], self.view)
        cells = [i for i, v in enumerate(z) if v == 1]
        if any(v not in (0, 1) for v in z):
            raise ProtocolError("group indicator did not reconstruct to bits")
        values = {}
        counts = None
        if spec.op == "avg":
            counts = sum_finalize([m.vector("count") for m in parts], self.view)
        for k, attr in enumerate(spec.agg_attrs):
            sums = sum_finalize([m.vector(f"sum.{k}") for m in parts], self.view)
            if spec.op == "sum":
                values[attr] = tuple(scale_value(sums[c], spec.decimal_scale) for c in cells)
            else:
                values[attr] = tuple(average(sums[c], counts[c], spec.decimal_scale) for c in cells)
        return self._finish(q, qid, QueryResult(op=spec.op, groups=tuple(q.domain.label(c) for c in cells),
                                                values=values))

    def _local_values(self, q: _Query, cells) -> tuple:
        """Per (attribute, group) entry: this owner's max (or sum for median) and presence."""
        spec = q.spec
        per_cell = {c: [] for c in cells}
        for row in self.relation.rows:
            c = q.domain.cell(self.relation.key_of(row, spec.set_attr))
            if c in per_cell:
                per_cell[c].append(row)
        local, present = [], []
        for attr in spec.agg_attrs:
            for c in cells:
                vals = [int(r[attr]) for r in per_cell[c]]
                present.append(bool(vals))
                if not vals:
                    local.append(0)
                else:
                    local.append(max(vals) if spec.op == "max" else sum(vals))
        return local, present

    def _max_round(self, q: _Query, qid: int, cells) -> list[RoundMessage]:
        q.groups = cells
        q.local, q.present = self._local_values(q, cells)
        rng = self._rng(qid, 2)
        s1, s2 = [], []
        for M, here in zip(q.local, q.present):
            _, (a, b) = max_encode(M, self.view, rng, present=here)
            s1.append(a)
            s2.append(b)
        spec_item = json_item(q.spec.to_json())
        return [self._msg(MsgType.MAX_ROUND, role, qid, {"v": np.array(sh, dtype=object), "spec": spec_item})
                for role, sh in zip(ADDITIVE_ROLES, (s1, s2))]

    def _after_max(self, q: _Query, qid: int, parts) -> list[RoundMessage]:
        spec = q.spec
        maxes = [m.vector("max") for m in parts]
        has_index = all("index" in m.items for m in parts)
        indices = [m.vector("index") for m in parts] if has_index else None
        if len(maxes[0]) != len(q.local):
            raise ProtocolError("announced vector does not match the group count")
        q.decoded, q.announced = [], []
        for e in range(len(q.local)):
            pair = (maxes[0][e], maxes[1][e])
            ipair = (indices[0][e], indices[1][e]) if indices is not None else None
            z, pos = max_finalize(pair, ipair, self.view)
            q.decoded.append(z)
            q.announced.append(pos)
        if spec.op == "max" and spec.reveal_max_identity:
            rng = self._rng(qid, 3)
            s1, s2 = [], []
            for M, here, z in zip(q.local, q.present, q.decoded):
                a, b = max_round3_flag(here and M == z, self.view, rng)
                s1.append(a)
                s2.append(b)
            return [self._msg(MsgType.FPOS, role, qid, {"alpha": np.array(sh, dtype=object)})
                    for role, sh in zip(ADDITIVE_ROLES, (s1, s2))]
        return self._finish(q, qid, self._max_result(q, None))

    def _after_fpos(self, q: _Query, qid: int, parts) -> list[RoundMessage]:
        shape = tuple(int(x) for x in parts[0].vector("shape"))
        flags = fpos_combine(parts[0].vector("fpos"), parts[1].vector("fpos"), self.view.max_modulus)
        flags = flags.reshape(shape) if flags.size else np.zeros((len(q.local), self.view.m), dtype=np.int64)
        holders = []
        for e, row in enumerate(flags):
            owners = tuple(int(j) + 1 for j in np.flatnonzero(row))
            pos = q.announced[e]
            if not owners or (pos is not None and pos + 1 not in owners):
                raise ProtocolError(f"holder census disagrees with the announced maximum at entry {e}")
            holders.append(owners)
        return self._finish(q, qid, self._max_result(q, holders))

    def _max_result(self, q: _Query, holders) -> QueryResult:
        spec = q.spec
        n = len(q.groups)
        values = {attr: tuple(scale_value(z, spec.decimal_scale) for z in q.decoded[k * n:(k + 1) * n])
                  for k, attr in enumerate(spec.agg_attrs)}
        held = None
        if holders is not None:
            held = {attr: tuple(holders[k * n:(k + 1) * n]) for k, attr in enumerate(spec.agg_attrs)}
        meta = {"median": "lower"} if spec.op == "median" else {}
        return QueryResult(op=spec.op, groups=tuple(q.domain.label(c) for c in q.groups), values=values,
                           holders=held, metadata=meta)

    def _finish(self, q: _Query, qid: int, result: QueryResult) -> list[RoundMessage]:
        q.done = True
        payload = {"result": result.to_json(),
                   "verification": None if q.verdict is None else q.verdict.to_json()}
        return [self._msg(MsgType.RESULT, "orchestrator", qid, {"json": json_item(payload)})]
