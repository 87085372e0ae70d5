"""Desk-scale timing grid: share generation, server evaluation, owner finalization."""
from __future__ import annotations

import csv
import io
import itertools
import time

import numpy as np

from .owner import PresenceTable, psi_finalize, share_tables
from .params import generate_params, view_for
from .server import psi_eval
from .sharing import RandomStream

FIELDS = ("b", "m", "threads", "share_gen_s", "server_eval_s", "owner_finalize_s")


def parse_grid(text: str) -> dict:
    """``b=1000,2000;m=2,4;threads=1`` -> ``{"b": [...], "m": [...], "threads": [...]}``."""
    grid = {"b": [1000], "m": [2], "threads": [1]}
    for part in filter(None, (p.strip() for p in text.split(";"))):
        key, _, values = part.partition("=")
        key = key.strip()
        if key not in grid:
            raise ValueError(f"unknown grid axis {key!r}")
        grid[key] = [int(v) for v in values.split(",") if v.strip()]
    return grid


def _best(fn, repeats: int) -> tuple:
    best, result = float("inf"), None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def bench_point(b: int, m: int, threads: int = 1, seed: int = 0, repeats: int = 1,
                fill: float = 0.5, chunk_size: int = 65536) -> dict:
    params = generate_params(m, b, domain_max=10, seed=seed)
    owner_view = view_for(params, "owner")
    s1 = view_for(params, "server1")
    s2 = view_for(params, "server2")
    rng = np.random.default_rng(seed)
    tables = [PresenceTable(bits=(rng.random(b) < fill).astype(np.int64), domain=[]) for _ in range(m)]

    def share():
        return [share_tables(t, owner_view, RandomStream([seed, j])) for j, t in enumerate(tables)]

    t_share, bundles = _best(share, repeats)

    def evaluate():
        return [psi_eval(v, [bd[v.role]["bits"] for bd in bundles], v.m_share, chunk_size, threads)
                for v in (s1, s2)]

    t_eval, outs = _best(evaluate, repeats)
    t_eval /= 2  # per server
    t_fin, _ = _best(lambda: psi_finalize(outs[0], outs[1], owner_view), repeats)
    return {"b": b, "m": m, "threads": threads, "share_gen_s": t_share, "server_eval_s": t_eval,
            "owner_finalize_s": t_fin}


def bench(grid: dict, seed: int = 0, repeats: int = 1) -> list[dict]:
    rows = []
    for b, m, threads in itertools.product(grid["b"], grid["m"], grid["threads"]):
        rows.append(bench_point(b, m, threads, seed, repeats))
    return rows


def to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=FIELDS)
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()
