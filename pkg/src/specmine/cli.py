"""Command-line interface.

Subcommands:

* gen-block        -- build a seeded benchmark workload (work file)
* mine             -- execute a work file speculatively, publish a block
* validate         -- deterministically replay a block package (exit 0/1)
* bench            -- timed sweeps over block size or conflict percentage
* compare-engines  -- same case across every available engine
"""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from . import bench as benchmod
from .chainio import (
    WorkFile,
    append_block,
    chain_tip_digest,
    parse_package,
    parse_work,
    serialize_package,
    serialize_work,
)
from .engine import available_engines, get_engine
from .engine.base import format_events
from .mining import mine_block
from .model import SpecmineError, TxStatus, Verdict
from .validating import replay_block
from .workloads import BENCHMARKS, generate


def _engine_option(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--engine",
        choices=("auto", "native", "pure"),
        default="auto",
        help="execution engine (auto prefers the compiled core)",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specmine",
        description="speculative miner and deterministic validator for "
        "smart-contract transaction blocks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-block", help="generate a seeded benchmark workload")
    gen.add_argument("--benchmark", choices=BENCHMARKS, required=True)
    gen.add_argument("--size", type=int, required=True, help="number of transactions")
    gen.add_argument("--conflict", type=int, default=0, help="conflict percentage 0..100")
    gen.add_argument("--seed", type=int, default=benchmod.DEFAULT_SEED)
    gen.add_argument("--out", required=True, help="work file to write")

    mine = sub.add_parser("mine", help="execute a work file and publish the block")
    mine.add_argument("--in", dest="infile", required=True, help="work file from gen-block")
    mine.add_argument("--workers", type=int, default=benchmod.DEFAULT_WORKERS)
    mine.add_argument("--chain", help="append the block to this chain file")
    mine.add_argument("--out", help="write a validation package (pre-state + block)")
    mine.add_argument("--events", help="write the execution event log to this file")
    _engine_option(mine)

    val = sub.add_parser("validate", help="replay a validation package")
    val.add_argument("--block", required=True, help="package file from mine --out")
    val.add_argument("--workers", type=int, default=benchmod.DEFAULT_WORKERS)
    _engine_option(val)

    ben = sub.add_parser("bench", help="run a timed sweep and write CSV")
    ben.add_argument("--benchmark", choices=BENCHMARKS, required=True)
    ben.add_argument("--sweep", choices=("blocksize", "conflict"), required=True)
    ben.add_argument("--workers", type=int, default=benchmod.DEFAULT_WORKERS)
    ben.add_argument("--reps", type=int, default=benchmod.DEFAULT_REPS)
    ben.add_argument("--warmups", type=int, default=benchmod.DEFAULT_WARMUPS)
    ben.add_argument("--seed", type=int, default=benchmod.DEFAULT_SEED)
    ben.add_argument("--out", required=True, help="CSV path, or - for stdout")
    _engine_option(ben)

    cmp = sub.add_parser("compare-engines", help="run one case on every engine")
    cmp.add_argument("--benchmark", choices=BENCHMARKS, required=True)
    cmp.add_argument("--size", type=int, required=True)
    cmp.add_argument("--conflict", type=int, default=0)
    cmp.add_argument("--workers", type=int, default=benchmod.DEFAULT_WORKERS)
    cmp.add_argument("--reps", type=int, default=benchmod.DEFAULT_REPS)
    cmp.add_argument("--warmups", type=int, default=benchmod.DEFAULT_WARMUPS)
    cmp.add_argument("--seed", type=int, default=benchmod.DEFAULT_SEED)
    cmp.add_argument("--out", required=True, help="CSV path, or - for stdout")
    return parser


def _cmd_gen_block(args) -> int:
    workload = generate(args.benchmark, args.size, args.conflict, args.seed)
    data = serialize_work(WorkFile(workload.state, workload.txs, workload.meta))
    with open(args.out, "wb") as fh:
        fh.write(data)
    print(
        "wrote %s: benchmark=%s size=%d conflict=%d seed=%d conflicting=%d"
        % (args.out, workload.benchmark, workload.block_size, workload.conflict_pct,
           workload.seed, workload.conflicting)
    )
    return 0


def _cmd_mine(args) -> int:
    engine = get_engine(args.engine)
    with open(args.infile, "rb") as fh:
        work = parse_work(fh.read())
    parent = chain_tip_digest(args.chain) if args.chain else None
    outcome = mine_block(
        engine,
        work.state,
        work.txs,
        workers=args.workers,
        parent_digest=parent,
        record_events=bool(args.events),
    )
    block = outcome.block
    if args.chain:
        append_block(args.chain, block)
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(serialize_package(work.state, block))
    if args.events:
        with open(args.events, "w") as fh:
            fh.write(format_events(outcome.events))
    counts = {status: 0 for status in TxStatus}
    for status in block.statuses:
        counts[status] += 1
    print(
        "engine=%s txs=%d workers=%d retries=%d"
        % (engine.name, len(work.txs), args.workers, sum(outcome.retries))
    )
    print(
        "statuses: committed=%d reverted=%d out_of_gas=%d"
        % (counts[TxStatus.COMMITTED], counts[TxStatus.REVERTED], counts[TxStatus.OUT_OF_GAS])
    )
    print("schedule: edges=%d order=%s" % (
        len(block.schedule.graph.edges),
        ",".join(str(t) for t in block.schedule.order) or "-",
    ))
    print("pre_state_digest=%s" % block.pre_state_digest)
    print("post_state_digest=%s" % block.post_state_digest)
    return 0


def _cmd_validate(args) -> int:
    engine = get_engine(args.engine)
    with open(args.block, "rb") as fh:
        state, block = parse_package(fh.read())
    result = replay_block(engine, state, block, workers=args.workers)
    if result.verdict is Verdict.ACCEPT:
        print("Accept")
        return 0
    detail = (": " + result.detail) if result.detail else ""
    print("Reject: %s%s" % (result.reason.value, detail), file=sys.stderr)
    return 1


def _open_out(path: str):
    if path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _cmd_bench(args) -> int:
    engine = get_engine(args.engine)
    sweep = benchmod.sweep_blocksize if args.sweep == "blocksize" else benchmod.sweep_conflict
    rows = sweep(
        engine,
        args.benchmark,
        workers=args.workers,
        reps=args.reps,
        warmups=args.warmups,
        seed=args.seed,
    )
    out, close = _open_out(args.out)
    try:
        benchmod.write_csv(rows, out)
    finally:
        if close:
            out.close()
    if close:
        print("wrote %s: %d rows (engine=%s)" % (args.out, len(rows), engine.name))
    return 0


def _cmd_compare_engines(args) -> int:
    engines = [get_engine(name) for name in available_engines()]
    rows = benchmod.compare_engines(
        engines,
        args.benchmark,
        args.size,
        args.conflict,
        workers=args.workers,
        reps=args.reps,
        warmups=args.warmups,
        seed=args.seed,
    )
    out, close = _open_out(args.out)
    try:
        benchmod.write_csv(rows, out, engine_column="engine")
    finally:
        if close:
            out.close()
    if close:
        print(
            "wrote %s: %d rows (engines=%s)"
            % (args.out, len(rows), ",".join(e.name for e in engines))
        )
    return 0


_COMMANDS = {
    "gen-block": _cmd_gen_block,
    "mine": _cmd_mine,
    "validate": _cmd_validate,
    "bench": _cmd_bench,
    "compare-engines": _cmd_compare_engines,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except SpecmineError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
