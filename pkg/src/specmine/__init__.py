"""Speculative parallel execution of smart-contract blocks.

A miner executes a block's transactions concurrently under abstract
locks with inverse logs, publishes the discovered serializable order as
a happens-before graph, and a validator replays the block as a
deterministic fork-join program and checks what it observed against
what the block claims.
"""

__version__ = "0.1.0"
