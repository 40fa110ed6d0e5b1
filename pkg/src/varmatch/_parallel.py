import os
from concurrent.futures import ThreadPoolExecutor

BLOCK = 256


def thread_count():
    """Worker cap from ``VARMATCH_THREADS`` (default 1)."""
    raw = os.environ.get("VARMATCH_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def ordered_map(fn, items):
    """``list(map(fn, items))``, possibly threaded; output order never changes."""
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def blocks(n, size=BLOCK):
    """Fixed partition of ``range(n)`` into slices, independent of the thread count."""
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]
