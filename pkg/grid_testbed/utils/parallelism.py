import multiprocessing
import multiprocessing.pool

N_CPUS = multiprocessing.cpu_count()


def map_threads(func, items, n_threads=None, threads_per_cpu=2.0):
    """
    Maps func over items in a thread pool, preserving order.
    Single items (or empty input) are mapped inline without a pool.
    """
    items = list(items)
    if len(items) <= 1:
        return [func(item) for item in items]

    if n_threads is None:
        n_threads = max(1, int(threads_per_cpu * N_CPUS))
    n_threads = min(n_threads, len(items))

    with multiprocessing.pool.ThreadPool(n_threads) as pool:
        return list(pool.imap(func, items))
