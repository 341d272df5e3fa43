"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``.

Inputs are assumed sorted by sync index, exactly as for the compiled path.
"""
import numpy as np


def dead_time_filter(times, dead_time, last_accept):
    """Non-paralyzable dead time: keep events at least ``dead_time`` after the last kept one."""
    times = np.asarray(times, dtype=np.float64)
    keep = np.zeros(times.shape[0], dtype=np.bool_)
    last = float(last_accept)
    for k, t in enumerate(times.tolist()):
        if t - last >= dead_time:
            keep[k] = True
            last = t
    return keep, last


def _groups(sync):
    values, start, counts = np.unique(sync, return_index=True, return_counts=True)
    return values, start, counts


def pulse_coincidences(sync_a, out_a, sync_b, out_b):
    va, sa, ca = _groups(np.asarray(sync_a, dtype=np.int64))
    vb, sb, cb = _groups(np.asarray(sync_b, dtype=np.int64))
    _, ia, ib = np.intersect1d(va, vb, assume_unique=True, return_indices=True)
    single = (ca[ia] == 1) & (cb[ib] == 1)
    table = np.zeros((4, 4), dtype=np.int64)
    a = np.asarray(out_a)[sa[ia[single]]]
    b = np.asarray(out_b)[sb[ib[single]]]
    np.add.at(table, (a.astype(np.intp), b.astype(np.intp)), 1)
    return table, int(np.count_nonzero(~single))


def pulse_histogram2d(sync_a, off_a, sync_b, off_b, nbins):
    va, sa, ca = _groups(np.asarray(sync_a, dtype=np.int64))
    vb, sb, cb = _groups(np.asarray(sync_b, dtype=np.int64))
    _, ia, ib = np.intersect1d(va, vb, assume_unique=True, return_indices=True)
    off_a = np.asarray(off_a, dtype=np.int64)
    off_b = np.asarray(off_b, dtype=np.int64)
    hist = np.zeros((nbins, nbins), dtype=np.int64)
    if ia.size == 0:
        return hist
    na, nb = ca[ia], cb[ib]
    npairs = na * nb
    pulse = np.repeat(np.arange(ia.size), npairs)
    # position of each pair within its pulse's na x nb block
    within = np.arange(pulse.size) - np.repeat(np.cumsum(npairs) - npairs, npairs)
    pa = sa[ia][pulse] + within // nb[pulse]
    pb = sb[ib][pulse] + within % nb[pulse]
    np.add.at(hist, (off_a[pa], off_b[pb]), 1)
    return hist
