"""Order-preserving process-pool map.

Work is split into contiguous chunks and results are reassembled in input
order, so outputs do not depend on the number of workers as long as each
item is computed from its own random substream.
"""

from __future__ import annotations

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence


def chunked(items: Sequence, parts: int) -> list[Sequence]:
    parts = max(1, min(parts, len(items)))
    size, extra = divmod(len(items), parts)
    out, start = [], 0
    for p in range(parts):
        stop = start + size + (1 if p < extra else 0)
        out.append(items[start:stop])
        start = stop
    return out


def map_chunks(fn: Callable, items: Sequence, workers: int = 1, args: tuple = ()) -> list:
    """Apply ``fn(chunk, *args)`` to contiguous chunks; returns results in order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(items, *args)]
    chunks = chunked(items, workers)
    ctx = mp.get_context("fork")
    with ProcessPoolExecutor(max_workers=len(chunks), mp_context=ctx) as pool:
        futures = [pool.submit(fn, c, *args) for c in chunks]
        return [f.result() for f in futures]
