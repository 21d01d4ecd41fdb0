import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime

import numpy as np


def make_rng(seed, *key):
    """Counter-based generator for the stream addressed by (seed, *key)."""
    ss = np.random.SeedSequence([int(seed), *(int(k) for k in key)])
    return np.random.Generator(np.random.Philox(ss))


def stamp():
    return datetime.now().strftime("%H:%M:%S")


def report(message):
    # stdout is reserved for JSON output of the subcommands
    print(f"[{stamp()}] {message}", file=sys.stderr)


def parallel_map(fn, items, threads=1):
    """Map in order; results do not depend on the number of threads."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
