"""Query descriptions, domains, owner relations and typed results."""
from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field

from .errors import IngestionError, ParameterError

OPS = ("psi", "psu", "count", "sum", "avg", "max", "median")
SET_OPS = ("psi", "psu")
OP_CODES = {op: i + 1 for i, op in enumerate(OPS)}
MEDIAN_CONVENTION = "lower"


@dataclass(frozen=True)
class QuerySpec:
    op: str
    set_attr: tuple = ()
    agg_attrs: tuple = ()
    over: str = "psi"
    verify: bool = False
    reveal_max_identity: bool = False
    bucketize: int | None = None
    decimal_scale: int = 0

    def __post_init__(self):
        object.__setattr__(self, "set_attr", _as_tuple(self.set_attr))
        object.__setattr__(self, "agg_attrs", _as_tuple(self.agg_attrs))
        if self.op in SET_OPS:
            object.__setattr__(self, "over", self.op)
        self.validate()

    def validate(self) -> None:
        if self.op not in OPS:
            raise ParameterError(f"unknown op {self.op!r}")
        if self.over not in SET_OPS:
            raise ParameterError(f"aggregates run over psi or psu, not {self.over!r}")
        if not self.set_attr:
            raise ParameterError("set_attr must name at least one attribute")
        needs_agg = self.op in ("sum", "avg", "max", "median")
        if needs_agg and not self.agg_attrs:
            raise ParameterError(f"{self.op} needs at least one aggregate attribute")
        if not needs_agg and self.agg_attrs:
            raise ParameterError(f"{self.op} takes no aggregate attributes")
        overlap = set(self.agg_attrs) & set(self.set_attr)
        if overlap:
            raise ParameterError(f"attributes {sorted(overlap)} cannot be both set and aggregate")
        if self.verify and self.op != "psi":
            raise ParameterError("verification is only defined for psi")
        if self.reveal_max_identity and self.op != "max":
            raise ParameterError("identity disclosure only applies to max")
        if self.op == "median" and self.over != "psi":
            raise ParameterError("median is only defined over psi")
        if self.bucketize is not None:
            if self.bucketize < 2:
                raise ParameterError("bucket fanout must be >= 2")
            if self.op != "psi" or self.verify:
                raise ParameterError("bucketization drives plain psi only")
        if self.decimal_scale < 0:
            raise ParameterError("decimal_scale must be >= 0")

    @property
    def set_op(self) -> str:
        return self.over

    def to_json(self) -> dict:
        d = asdict(self)
        d["set_attr"] = list(self.set_attr)
        d["agg_attrs"] = list(self.agg_attrs)
        return d

    @classmethod
    def from_json(cls, d: dict) -> QuerySpec:
        return cls(**d)


def _as_tuple(v) -> tuple:
    if v is None:
        return ()
    if isinstance(v, str):
        return tuple(x.strip() for x in v.split(",") if x.strip())
    return tuple(v)


class Domain:
    """Canonically ordered cells for one or more set attributes.

    Multi-attribute domains are the row-major cartesian product of the
    declared per-attribute domains.  The cell index is the shared dictionary
    position, identical at every owner.
    """

    def __init__(self, attrs, declarations: dict):
        self.attrs = _as_tuple(attrs)
        missing = [a for a in self.attrs if a not in declarations]
        if missing:
            raise IngestionError(f"no domain declared for {missing}")
        self.parts = [[str(v) for v in declarations[a]] for a in self.attrs]
        for a, part in zip(self.attrs, self.parts):
            if len(set(part)) != len(part):
                raise IngestionError(f"domain of {a!r} has duplicate values")
        self._index = [{v: i for i, v in enumerate(part)} for part in self.parts]
        self.size = 1
        for part in self.parts:
            self.size *= len(part)
        if self.size == 0:
            raise IngestionError("empty domain")

    def __len__(self) -> int:
        return self.size

    def cell(self, values) -> int:
        if len(self.attrs) == 1 and not isinstance(values, tuple):
            values = (values,)
        idx = 0
        for attr, lookup, part, v in zip(self.attrs, self._index, self.parts, values):
            try:
                pos = lookup[str(v)]
            except KeyError:
                raise IngestionError(f"value {v!r} of {attr!r} is outside its declared domain") from None
            idx = idx * len(part) + pos
        return idx

    def label(self, cell: int):
        coords = []
        for part in reversed(self.parts):
            cell, pos = divmod(cell, len(part))
            coords.append(part[pos])
        coords.reverse()
        return coords[0] if len(coords) == 1 else tuple(coords)

    def labels(self) -> list:
        if len(self.parts) == 1:
            return list(self.parts[0])
        return [tuple(c) for c in itertools.product(*self.parts)]


@dataclass
class OwnerRelation:
    """One owner's plaintext rows plus the shared domain declarations."""

    rows: list
    domains: dict

    def key_of(self, row, attrs):
        return tuple(row[a] for a in attrs) if len(attrs) > 1 else row[attrs[0]]

    def to_json(self) -> dict:
        return {"rows": self.rows, "domains": self.domains}

    @classmethod
    def from_json(cls, d: dict) -> OwnerRelation:
        return cls(rows=list(d["rows"]), domains={k: list(v) for k, v in d["domains"].items()})

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> OwnerRelation:
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class QueryResult:
    """Typed answer of one query.

    ``values[attr]`` and ``holders[attr]`` are aligned with ``groups``.  Owner
    numbers in ``holders`` are 1-based, matching role names ``owner1..m``.
    """

    op: str
    groups: tuple = ()
    values: dict | None = None
    holders: dict | None = None
    count: int | None = None
    metadata: dict = field(default_factory=dict)

    def __eq__(self, other) -> bool:
        if not isinstance(other, QueryResult):
            return NotImplemented
        return (self.op, tuple(self.groups), self.values, self.holders, self.count) == (
            other.op, tuple(other.groups), other.values, other.holders, other.count)

    def to_json(self) -> dict:
        return {
            "op": self.op,
            "groups": [list(g) if isinstance(g, tuple) else g for g in self.groups],
            "values": None if self.values is None else {k: list(v) for k, v in self.values.items()},
            "holders": None if self.holders is None else {
                k: [list(h) for h in v] for k, v in self.holders.items()},
            "count": self.count,
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, d: dict) -> QueryResult:
        return cls(
            op=d["op"],
            groups=tuple(tuple(g) if isinstance(g, list) else g for g in d["groups"]),
            values=None if d["values"] is None else {k: tuple(v) for k, v in d["values"].items()},
            holders=None if d["holders"] is None else {
                k: tuple(tuple(h) for h in v) for k, v in d["holders"].items()},
            count=d["count"],
            metadata=d.get("metadata", {}),
        )


def scale_value(v: int, decimal_scale: int):
    """Undo ingestion-time decimal scaling; integers stay integers when k = 0."""
    if decimal_scale == 0:
        return int(v)
    return int(v) / 10 ** decimal_scale


def average(total: int, count: int, decimal_scale: int) -> float:
    if count == 0:
        raise ParameterError("average over an empty group")
    return int(total) / int(count) / 10 ** decimal_scale


def lower_median(values):
    """Lower middle element of the sorted values (the only middle one for odd length)."""
    ordered = sorted(values)
    if not ordered:
        raise ParameterError("median of nothing")
    return ordered[(len(ordered) - 1) // 2]
