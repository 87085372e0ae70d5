"""Plaintext brute-force reference answers for every query type."""
from __future__ import annotations

from dataclasses import dataclass

from .query import Domain, OwnerRelation, QueryResult, QuerySpec, average, lower_median, scale_value


@dataclass
class PlainInstance:
    owners: list
    domains: dict

    @classmethod
    def from_relations(cls, relations) -> PlainInstance:
        relations = list(relations)
        return cls(owners=[list(r.rows) for r in relations], domains=dict(relations[0].domains))

    def relations(self) -> list[OwnerRelation]:
        return [OwnerRelation(rows=list(rows), domains=self.domains) for rows in self.owners]


def _key(row, attrs):
    return tuple(row[a] for a in attrs) if len(attrs) > 1 else row[attrs[0]]


def oracle_eval(instance: PlainInstance, spec: QuerySpec) -> QueryResult:
    domain = Domain(spec.set_attr, instance.domains)
    per_owner = []
    for rows in instance.owners:
        groups = {}
        for row in rows:
            groups.setdefault(domain.cell(_key(row, spec.set_attr)), []).append(row)
        per_owner.append(groups)
    present = [set(g) for g in per_owner]
    if spec.set_op == "psi":
        cells = set.intersection(*present) if present else set()
    else:
        cells = set.union(*present) if present else set()
    cells = sorted(cells)
    labels = tuple(domain.label(c) for c in cells)
    if spec.op in ("psi", "psu"):
        return QueryResult(op=spec.op, groups=labels)
    if spec.op == "count":
        return QueryResult(op="count", count=len(cells))
    k = spec.decimal_scale
    values, holders = {}, {}
    for attr in spec.agg_attrs:
        col, held = [], []
        for c in cells:
            rows_by_owner = [(j + 1, g.get(c, [])) for j, g in enumerate(per_owner)]
            if spec.op in ("sum", "avg"):
                vals = [int(r[attr]) for _, rows in rows_by_owner for r in rows]
                col.append(scale_value(sum(vals), k) if spec.op == "sum" else average(sum(vals), len(vals), k))
            elif spec.op == "max":
                maxima = {j: max(int(r[attr]) for r in rows) for j, rows in rows_by_owner if rows}
                best = max(maxima.values())
                col.append(scale_value(best, k))
                held.append(tuple(j for j, v in maxima.items() if v == best))
            else:
                sums = [sum(int(r[attr]) for r in rows) for _, rows in rows_by_owner if rows]
                col.append(scale_value(lower_median(sums), k))
        values[attr] = tuple(col)
        holders[attr] = tuple(held)
    reveal = spec.op == "max" and spec.reveal_max_identity
    meta = {"median": "lower"} if spec.op == "median" else {}
    return QueryResult(op=spec.op, groups=labels, values=values, holders=holders if reveal else None,
                       metadata=meta)
