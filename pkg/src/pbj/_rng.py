"""Deterministic random streams keyed by (seed, stream, index)."""

import numpy as np

STREAM_PBJ = 0
STREAM_PERM = 1
STREAM_SIM = 2

CHUNK = 256


def replicate_rng(seed, stream, index):
    """Generator keyed on ``(seed, stream, index)``; identical for any scheduling order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream, int(index)]))


def chunk_rng(seed, stream, start):
    """Generator for the fixed block of replicates beginning at `start`.

    Replicates are drawn in blocks of :data:`CHUNK`, so replicate ``b``
    depends only on ``(seed, stream, b)`` and not on ``B`` or the worker
    count.
    """
    if start % CHUNK:
        raise ValueError("chunk start must be a multiple of CHUNK")
    return replicate_rng(seed, stream, start // CHUNK)


def fresh_seed():
    """Seed drawn from system entropy (caller should report it)."""
    return int(np.random.SeedSequence().entropy)


def derived_seed(seed, *keys):
    """Integer seed derived from a master seed and integer keys."""
    ss = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
    state = ss.generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def chunks(B, size=CHUNK):
    """Fixed replicate blocks ``[(start, stop), ...]`` covering ``range(B)``."""
    return [(s, min(s + size, B)) for s in range(0, B, size)]


def iter_chunks(fn, blocks, workers=1):
    """Yield ``fn(block)`` in block order, computing up to `workers` at once."""
    if workers is None or workers <= 1 or len(blocks) <= 1:
        for blk in blocks:
            yield fn(blk)
        return
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        for i in range(0, len(blocks), workers):
            yield from pool.map(fn, blocks[i:i + workers])
