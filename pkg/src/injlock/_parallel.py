from concurrent.futures import ThreadPoolExecutor


def pmap(fn, items, threads=1):
    """Ordered map, optionally on a thread pool. Results never depend on ``threads``."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))
