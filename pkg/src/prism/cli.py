"""Command line: setup, ingest, query, bench, serve."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import PrismError, TamperAlarm
from .params import ENV_PARAMS_DIR, generate_params, params_dir, write_param_files


def _cmd_setup(args) -> int:
    params = generate_params(args.owners, args.domain_size, domain_max=args.domain_max, seed=args.seed)
    out = params_dir(args.params_dir)
    written = write_param_files(params, out)
    for role, path in written.items():
        print(f"{role}: {path}")
    return 0


def _cmd_ingest(args) -> int:
    from .ingest import ingest_csv, load_domains

    domains = load_domains(args.domain, args.domain_file)
    rel = ingest_csv(args.csv, args.set_attr, args.agg_attrs or (), domains, args.scale_decimals)
    out = Path(args.data_dir) if args.data_dir else params_dir(args.params_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"owner{args.owner}.json"
    rel.save(path)
    print(f"owner{args.owner}: {len(rel.rows)} rows -> {path}")
    return 0


def _parse_endpoints(text: str) -> dict:
    eps = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        role, _, addr = part.partition("=")
        host, _, port = addr.rpartition(":")
        eps[role] = (host or "127.0.0.1", int(port))
    return eps


def _cmd_query(args) -> int:
    from .orchestrator import run_query
    from .params import load_view
    from .query import OwnerRelation, QuerySpec

    spec = QuerySpec(op=args.op, set_attr=args.set_attr, agg_attrs=args.agg_attrs or (),
                     over=args.over, verify=args.verify, reveal_max_identity=args.reveal_identity,
                     bucketize=args.bucketize, decimal_scale=args.scale_decimals)
    pdir = params_dir(args.params_dir)
    data_dir = Path(args.data_dir) if args.data_dir else pdir
    m = load_view("owner", pdir).m
    data = {f"owner{j}": data_dir / f"owner{j}.json" for j in range(1, m + 1)}
    try:
        if args.mode == "sim":
            owners = [OwnerRelation.load(data[f"owner{j}"]) for j in range(1, m + 1)]
            outcome = run_query(spec, owners, mode="sim", seed=args.seed, query_id=args.query_id,
                                params_dir=pdir)
        elif args.endpoints:
            outcome = run_query(spec, mode="net", seed=args.seed, query_id=args.query_id,
                                endpoints=_parse_endpoints(args.endpoints))
        else:
            from .transport import RoleProcesses
            roles = [*data, "server1", "server2", "server3", "announcer"]
            with RoleProcesses(roles, pdir, data, seed=args.seed) as procs:
                outcome = run_query(spec, mode="net", seed=args.seed, query_id=args.query_id,
                                    endpoints=procs.endpoints)
    except TamperAlarm as alarm:
        if alarm.outcome is not None:
            print(alarm.outcome.dumps(args.timings))
        print(f"error: {alarm}", file=sys.stderr)
        return 3
    print(outcome.dumps(args.timings))
    return 0


def _cmd_bench(args) -> int:
    from .bench import bench, parse_grid, to_csv

    text = to_csv(bench(parse_grid(args.grid), seed=args.seed, repeats=args.repeats))
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def _cmd_serve(args) -> int:
    from .transport import serve

    serve(args.role, args.port, args.host, params_dir(args.params_dir), args.data, args.seed)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prism", description="Multi-owner private set computation over secret shares.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--params-dir", help=f"parameter file directory (default ${ENV_PARAMS_DIR} or .)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("setup", parents=[common], help="generate parameter files for every role")
    s.add_argument("--owners", type=int, required=True)
    s.add_argument("--domain-size", type=int, required=True)
    s.add_argument("--domain-max", type=int, default=1000, help="largest aggregate value the max codec must hold")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=_cmd_setup)

    s = sub.add_parser("ingest", parents=[common], help="load one owner's CSV")
    s.add_argument("--owner", type=int, required=True)
    s.add_argument("--csv", required=True)
    s.add_argument("--set-attr", required=True, help="comma separated set attributes")
    s.add_argument("--agg-attrs", default="")
    s.add_argument("--domain", action="append", default=[], help="attr=v1,v2 | attr=lo..hi | attr=@file")
    s.add_argument("--domain-file", help="JSON object attr -> list of values")
    s.add_argument("--scale-decimals", type=int, default=0)
    s.add_argument("--data-dir")
    s.set_defaults(func=_cmd_ingest)

    s = sub.add_parser("query", parents=[common], help="run one query and print its JSON result")
    s.add_argument("--op", required=True, choices=["psi", "psu", "count", "sum", "avg", "max", "median"])
    s.add_argument("--set-attr", required=True)
    s.add_argument("--agg-attrs", default="")
    s.add_argument("--over", default="psi", choices=["psi", "psu"])
    s.add_argument("--verify", action="store_true")
    s.add_argument("--reveal-identity", action="store_true")
    s.add_argument("--bucketize", type=int)
    s.add_argument("--scale-decimals", type=int, default=0)
    s.add_argument("--mode", default="sim", choices=["sim", "net"])
    s.add_argument("--endpoints", help="role=host:port,... of running role processes (net mode)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--query-id", type=int, default=1)
    s.add_argument("--data-dir")
    s.add_argument("--timings", action="store_true")
    s.set_defaults(func=_cmd_query)

    s = sub.add_parser("bench", parents=[common], help="timing grid as CSV")
    s.add_argument("--grid", default="b=10000,20000;m=2,4;threads=1")
    s.add_argument("--repeats", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_bench)

    s = sub.add_parser("serve", parents=[common], help="run one role as a TCP process")
    s.add_argument("--role", required=True)
    s.add_argument("--port", type=int, default=0)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--data", help="owner dataset JSON (owner roles)")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=_cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PrismError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
