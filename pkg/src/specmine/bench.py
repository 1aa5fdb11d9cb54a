"""Timed experiment driver for the three execution roles.

A case runs one workload under three modes and reports wall-clock
statistics per mode:

* serial   -- one-at-a-time execution, the baseline.
* mine     -- speculative concurrent execution that discovers a schedule.
* validate -- deterministic fork-join replay of the mined schedule.

Only the engine execution call sits inside the timer. Workload
generation, store loading, schedule assembly, digesting, and result
checking all happen outside it, so the numbers compare execution
strategies rather than plumbing. Each repetition gets a freshly loaded
store; `warmups` untimed repetitions precede the `reps` timed ones.
"""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Sequence, TextIO

from .mining import mine_block
from .validating import join_sets
from .workloads import Workload, generate

MODES = ("serial", "mine", "validate")
CSV_FIELDS = (
    "benchmark",
    "mode",
    "block_size",
    "conflict_pct",
    "workers",
    "mean_ms",
    "stddev_ms",
    "speedup",
)

DEFAULT_WORKERS = 3
DEFAULT_REPS = 5
DEFAULT_WARMUPS = 3
DEFAULT_SEED = 42

BLOCKSIZE_SWEEP = (10, 25, 50, 100, 200, 300, 400)
BLOCKSIZE_SWEEP_CONFLICT = 15
CONFLICT_SWEEP = tuple(range(0, 101, 10))
CONFLICT_SWEEP_SIZE = 200


@dataclass
class BenchRow:
    benchmark: str
    mode: str
    block_size: int
    conflict_pct: int
    workers: int
    mean_ms: float
    stddev_ms: float
    speedup: float


def summarize(samples: Sequence[float]) -> tuple:
    """Sample mean and sample standard deviation (n-1 denominator)."""
    if not samples:
        raise ValueError("no samples to summarize")
    mean = statistics.mean(samples)
    stddev = statistics.stdev(samples) if len(samples) >= 2 else 0.0
    return mean, stddev


def _time_ms(fn: Callable[[], object]) -> float:
    start = time.perf_counter_ns()
    fn()
    return (time.perf_counter_ns() - start) / 1e6


def _measure(make_run: Callable[[], Callable[[], object]], reps: int, warmups: int) -> List[float]:
    for _ in range(warmups):
        make_run()()
    return [_time_ms(make_run()) for _ in range(reps)]


def run_case(
    engine,
    benchmark: str,
    block_size: int,
    conflict_pct: int,
    workers: int = DEFAULT_WORKERS,
    reps: int = DEFAULT_REPS,
    warmups: int = DEFAULT_WARMUPS,
    seed: int = DEFAULT_SEED,
    workload: Workload = None,
) -> List[BenchRow]:
    """Time the three modes over one workload; rows in MODES order."""
    if workload is None:
        workload = generate(benchmark, block_size, conflict_pct, seed)
    state, txs = workload.state, workload.txs

    # schedule preparation for the validate mode happens off the clock
    mined = mine_block(engine, state, txs, workers=workers).block
    joins = join_sets(mined)
    preds = [joins[i] for i in range(len(txs))]

    def serial_run():
        handle = engine.load(state, workers=1)
        return lambda: handle.run_serial(txs)

    def mine_run():
        handle = engine.load(state, workers=workers)
        return lambda: handle.run_mine(txs)

    def validate_run():
        handle = engine.load(state, workers=workers)
        return lambda: handle.run_replay(txs, preds)

    makers = {"serial": serial_run, "mine": mine_run, "validate": validate_run}
    stats: Dict[str, tuple] = {}
    for mode in MODES:
        stats[mode] = summarize(_measure(makers[mode], reps, warmups))

    serial_mean = stats["serial"][0]
    rows = []
    for mode in MODES:
        mean, stddev = stats[mode]
        speedup = serial_mean / mean if mean > 0 else 0.0
        rows.append(
            BenchRow(
                benchmark=workload.benchmark,
                mode=mode,
                block_size=workload.block_size,
                conflict_pct=workload.conflict_pct,
                workers=workers,
                mean_ms=mean,
                stddev_ms=stddev,
                speedup=speedup,
            )
        )
    return rows


def sweep_blocksize(
    engine,
    benchmark: str,
    workers: int = DEFAULT_WORKERS,
    reps: int = DEFAULT_REPS,
    warmups: int = DEFAULT_WARMUPS,
    seed: int = DEFAULT_SEED,
    sizes: Sequence[int] = BLOCKSIZE_SWEEP,
    conflict_pct: int = BLOCKSIZE_SWEEP_CONFLICT,
) -> List[BenchRow]:
    rows: List[BenchRow] = []
    for size in sizes:
        rows.extend(run_case(engine, benchmark, size, conflict_pct, workers, reps, warmups, seed))
    return rows


def sweep_conflict(
    engine,
    benchmark: str,
    workers: int = DEFAULT_WORKERS,
    reps: int = DEFAULT_REPS,
    warmups: int = DEFAULT_WARMUPS,
    seed: int = DEFAULT_SEED,
    conflicts: Sequence[int] = CONFLICT_SWEEP,
    block_size: int = CONFLICT_SWEEP_SIZE,
) -> List[BenchRow]:
    rows: List[BenchRow] = []
    for conflict_pct in conflicts:
        rows.extend(run_case(engine, benchmark, block_size, conflict_pct, workers, reps, warmups, seed))
    return rows


def write_csv(rows: Iterable[BenchRow], out: TextIO, engine_column: str = None) -> None:
    """Write rows with the fixed header; engine_column prepends a column."""
    fields = (("engine",) if engine_column else ()) + CSV_FIELDS
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        values = [
            row.benchmark,
            row.mode,
            row.block_size,
            row.conflict_pct,
            row.workers,
            "%.6f" % row.mean_ms,
            "%.6f" % row.stddev_ms,
            "%.6f" % row.speedup,
        ]
        if engine_column:
            values.insert(0, getattr(row, "engine", engine_column))
        writer.writerow(values)


@dataclass
class EngineBenchRow(BenchRow):
    engine: str = ""


def compare_engines(
    engines: Sequence,
    benchmark: str,
    block_size: int,
    conflict_pct: int,
    workers: int = DEFAULT_WORKERS,
    reps: int = DEFAULT_REPS,
    warmups: int = DEFAULT_WARMUPS,
    seed: int = DEFAULT_SEED,
) -> List[EngineBenchRow]:
    """Run the same case on several engines; rows gain an engine name."""
    workload = generate(benchmark, block_size, conflict_pct, seed)
    rows: List[EngineBenchRow] = []
    for engine in engines:
        for row in run_case(
            engine, benchmark, block_size, conflict_pct, workers, reps, warmups, seed, workload=workload
        ):
            rows.append(EngineBenchRow(**row.__dict__, engine=engine.name))
    return rows
