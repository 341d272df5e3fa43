# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Signatures mirror ``_kernels_py``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def dead_time_filter(const double[::1] times, double dead_time, double last_accept):
    cdef Py_ssize_t n = times.shape[0]
    cdef Py_ssize_t k
    keep = np.zeros(n, dtype=np.bool_)
    cdef cnp.npy_bool[::1] kv = keep
    cdef double last = last_accept
    for k in range(n):
        if times[k] - last >= dead_time:
            kv[k] = 1
            last = times[k]
    return keep, last


def pulse_coincidences(const cnp.int64_t[::1] sync_a, const cnp.int8_t[::1] out_a,
                       const cnp.int64_t[::1] sync_b, const cnp.int8_t[::1] out_b):
    cdef Py_ssize_t na = sync_a.shape[0], nb = sync_b.shape[0]
    cdef Py_ssize_t i = 0, j = 0, i_end, j_end
    cdef cnp.int64_t s
    table = np.zeros((4, 4), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] t = table
    cdef cnp.int64_t ambiguous = 0
    while i < na and j < nb:
        if sync_a[i] < sync_b[j]:
            i += 1
        elif sync_b[j] < sync_a[i]:
            j += 1
        else:
            s = sync_a[i]
            i_end = i + 1
            while i_end < na and sync_a[i_end] == s:
                i_end += 1
            j_end = j + 1
            while j_end < nb and sync_b[j_end] == s:
                j_end += 1
            if i_end - i == 1 and j_end - j == 1:
                t[out_a[i], out_b[j]] += 1
            else:
                ambiguous += 1
            i = i_end
            j = j_end
    return table, ambiguous


def pulse_histogram2d(const cnp.int64_t[::1] sync_a, const cnp.int64_t[::1] off_a,
                      const cnp.int64_t[::1] sync_b, const cnp.int64_t[::1] off_b,
                      Py_ssize_t nbins):
    cdef Py_ssize_t na = sync_a.shape[0], nb = sync_b.shape[0]
    cdef Py_ssize_t i = 0, j = 0, i_end, j_end, p, q
    cdef cnp.int64_t s
    hist = np.zeros((nbins, nbins), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] h = hist
    while i < na and j < nb:
        if sync_a[i] < sync_b[j]:
            i += 1
        elif sync_b[j] < sync_a[i]:
            j += 1
        else:
            s = sync_a[i]
            i_end = i + 1
            while i_end < na and sync_a[i_end] == s:
                i_end += 1
            j_end = j + 1
            while j_end < nb and sync_b[j_end] == s:
                j_end += 1
            for p in range(i, i_end):
                for q in range(j, j_end):
                    h[off_a[p], off_b[q]] += 1
            i = i_end
            j = j_end
    return hist
