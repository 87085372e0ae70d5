"""CSV ingestion and domain declarations."""
from __future__ import annotations

import csv
import json
from decimal import Decimal, InvalidOperation
from pathlib import Path

from .errors import IngestionError
from .query import Domain, OwnerRelation, _as_tuple


def parse_domain_decl(text: str) -> tuple:
    """``attr=v1,v2,...``, ``attr=lo..hi`` (inclusive integers) or ``attr=@file`` (one value per line)."""
    attr, sep, spec = text.partition("=")
    attr = attr.strip()
    if not sep or not attr or not spec:
        raise IngestionError(f"domain declaration {text!r} is not attr=values")
    if spec.startswith("@"):
        values = [ln.strip() for ln in Path(spec[1:]).read_text().splitlines() if ln.strip()]
    elif ".." in spec and "," not in spec:
        lo, _, hi = spec.partition("..")
        try:
            values = [str(v) for v in range(int(lo), int(hi) + 1)]
        except ValueError:
            raise IngestionError(f"bad integer range {spec!r}") from None
    else:
        values = [v.strip() for v in spec.split(",") if v.strip()]
    if not values:
        raise IngestionError(f"empty domain for {attr!r}")
    return attr, values


def load_domains(decls=(), domain_file=None) -> dict:
    domains = {}
    if domain_file:
        with open(domain_file) as fh:
            domains.update({k: [str(v) for v in vs] for k, vs in json.load(fh).items()})
    for d in decls or ():
        attr, values = parse_domain_decl(d)
        domains[attr] = values
    return domains


def scale_decimal(text: str, k: int, where: str) -> int:
    """Parse ``text`` and multiply by ``10**k``; the result must be a non-negative integer."""
    try:
        value = Decimal(text.strip()) * (Decimal(10) ** k)
    except InvalidOperation:
        raise IngestionError(f"{where}: {text!r} is not a number") from None
    if value != value.to_integral_value():
        raise IngestionError(f"{where}: {text!r} has more than {k} decimal places")
    if value < 0:
        raise IngestionError(f"{where}: negative value {text!r}")
    return int(value)


def ingest_csv(path, set_attrs, agg_attrs=(), domains: dict | None = None, decimal_scale: int = 0) -> OwnerRelation:
    """Read one owner's CSV into rows holding the set and aggregate attributes.

    Set attribute values stay strings and must lie in their declared domain;
    aggregate values are scaled by ``10**decimal_scale`` into integers.
    """
    set_attrs = _as_tuple(set_attrs)
    agg_attrs = _as_tuple(agg_attrs)
    domains = dict(domains or {})
    domain = Domain(set_attrs, domains)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError(f"{path}: empty file, expected a header row") from None
        missing = [a for a in (*set_attrs, *agg_attrs) if a not in header]
        if missing:
            raise IngestionError(f"{path}: header lacks columns {missing}")
        pos = {h: i for i, h in enumerate(header)}
        for line_no, record in enumerate(reader, start=2):
            if not record or all(not c.strip() for c in record):
                continue
            where = f"{path}:{line_no}"
            if len(record) != len(header):
                raise IngestionError(f"{where}: expected {len(header)} fields, got {len(record)}")
            row = {a: record[pos[a]].strip() for a in set_attrs}
            try:
                domain.cell(tuple(row[a] for a in set_attrs))
            except IngestionError as exc:
                raise IngestionError(f"{where}: {exc}") from None
            for a in agg_attrs:
                row[a] = scale_decimal(record[pos[a]], decimal_scale, where)
            rows.append(row)
    return OwnerRelation(rows=rows, domains={a: list(domains[a]) for a in set_attrs})
