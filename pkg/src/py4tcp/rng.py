"""
    Random streams. Every stream is a numpy ``Generator`` over the PCG64 bit generator
    (O'Neill's permuted congruential generator, 128-bit state, 64-bit output), so a given
    seed reproduces the same draws on every platform numpy supports.

    Monte Carlo replicates never share a stream: ``replicate_rng(seed, *index)`` derives an
    independent stream from ``SeedSequence([seed, *index])``. Results therefore do not depend
    on the order in which replicates are executed, nor on the number of worker threads.
"""
from __future__ import annotations
from numpy.random import Generator, PCG64, SeedSequence
from py4tcp.exceptions import DomainError


RngLike = int | Generator


def make_rng(seed: RngLike) -> Generator:
    """
        Returns a PCG64-backed generator. A Generator passed in is returned as is.
    """
    if isinstance(seed, Generator):
        return seed
    if int(seed) < 0:
        raise DomainError(f"Seed has to be a non-negative integer, got {seed}.")
    return Generator(PCG64(SeedSequence(int(seed))))


def replicate_rng(seed: int, *index: int) -> Generator:
    """
        Returns the stream of one replicate identified by a tuple of non-negative integers.
    """
    if int(seed) < 0 or any(int(i) < 0 for i in index):
        raise DomainError(f"Seed and replicate indices have to be non-negative, got {seed}, {index}.")
    return Generator(PCG64(SeedSequence([int(seed), *[int(i) for i in index]])))
