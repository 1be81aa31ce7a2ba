# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled encoding and scan kernels.

Every routine here has a numpy twin in ``_kernels_py`` that performs the same
floating point operations in the same order, so both backends return
identical codes and scores.
"""
import numpy as np

from cython.parallel cimport parallel, prange
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy


cdef inline unsigned long long _splitmix64(unsigned long long z) noexcept nogil:
    z = z + 0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef void _greedy_row(const double* xcj, const double* cross, const double* cnorm,
                      unsigned char* cj, double* acc, int m, int h,
                      int start) noexcept nogil:
    cdef int i, c, p, best
    cdef int mh = m * h
    cdef double val, bestval
    cdef const double* row
    for i in range(start, m):
        for c in range(h):
            acc[c] = xcj[i * h + c]
        for p in range(i):
            row = cross + (p * h + cj[p]) * mh + i * h
            for c in range(h):
                acc[c] = acc[c] - row[c]
        best = 0
        bestval = cnorm[i * h] - 2.0 * acc[0]
        for c in range(1, h):
            val = cnorm[i * h + c] - 2.0 * acc[c]
            if val < bestval:
                bestval = val
                best = c
        cj[i] = <unsigned char>best


def greedy_encode(const double[:, ::1] xc, const double[:, ::1] cross,
                  const double[::1] cnorm, unsigned char[:, ::1] codes,
                  int m, int h, int start, int nthreads=1):
    """Greedy residual encoding from precomputed dot products (in place)."""
    cdef Py_ssize_t n = xc.shape[0]
    cdef Py_ssize_t j
    cdef double* acc
    if n == 0 or start >= m:
        return
    with nogil, parallel(num_threads=nthreads):
        acc = <double*>malloc(h * sizeof(double))
        for j in prange(n, schedule="static"):
            _greedy_row(&xc[j, 0], &cross[0, 0], &cnorm[0], &codes[j, 0], acc, m, h, start)
        free(acc)


cdef inline bint _key_less(double s1, const short* c1, double s2, const short* c2,
                           int m) noexcept nogil:
    cdef int p
    if s1 != s2:
        return s1 < s2
    for p in range(m):
        if c1[p] != c2[p]:
            return c1[p] < c2[p]
    return False


cdef int _insert(double s, const short* child, unsigned long long hsh,
                 double* scores, short* codes, unsigned long long* hashes,
                 int count, int b, int m) noexcept nogil:
    """Insert into a sorted list holding the b best distinct code sets."""
    cdef int r, p, dup = -1, pos
    cdef bint same
    for r in range(count):
        if hashes[r] == hsh:
            same = True
            for p in range(m):
                if codes[r * m + p] != child[p]:
                    same = False
                    break
            if same:
                dup = r
                break
    if dup >= 0:
        if not _key_less(s, child, scores[dup], codes + dup * m, m):
            return count
        for r in range(dup, count - 1):
            scores[r] = scores[r + 1]
            hashes[r] = hashes[r + 1]
            memcpy(codes + r * m, codes + (r + 1) * m, m * sizeof(short))
        count -= 1
    elif count == b:
        if not _key_less(s, child, scores[count - 1], codes + (count - 1) * m, m):
            return count
        count -= 1
    pos = count
    while pos > 0 and _key_less(s, child, scores[pos - 1], codes + (pos - 1) * m, m):
        pos -= 1
    r = count
    while r > pos:
        scores[r] = scores[r - 1]
        hashes[r] = hashes[r - 1]
        memcpy(codes + r * m, codes + (r - 1) * m, m * sizeof(short))
        r -= 1
    scores[pos] = s
    hashes[pos] = hsh
    memcpy(codes + pos * m, child, m * sizeof(short))
    return count + 1


cdef double _beam_row(const double* xcj, double xnorm, const double* cross,
                      const double* cnorm, const unsigned long long* zob,
                      int m, int h, int b, double* cur_s, short* cur_c,
                      unsigned long long* cur_h, double* nxt_s, short* nxt_c,
                      unsigned long long* nxt_h, double* acc, short* child,
                      unsigned char* out) noexcept nogil:
    cdef int t, q, i, c, p, cur_n, nxt_n
    cdef int mh = m * h
    cdef double ps, s
    cdef short* pc
    cdef const double* row
    cdef unsigned long long ph
    cdef double* tmp_s
    cdef short* tmp_c
    cdef unsigned long long* tmp_h

    cur_n = 1
    cur_s[0] = xnorm
    cur_h[0] = 0
    for p in range(m):
        cur_c[p] = -1
    for t in range(m):
        nxt_n = 0
        for q in range(cur_n):
            pc = cur_c + q * m
            ps = cur_s[q]
            ph = cur_h[q]
            for i in range(m):
                if pc[i] >= 0:
                    continue
                for c in range(h):
                    acc[c] = xcj[i * h + c]
                for p in range(m):
                    if pc[p] >= 0:
                        row = cross + (p * h + pc[p]) * mh + i * h
                        for c in range(h):
                            acc[c] = acc[c] - row[c]
                for c in range(h):
                    s = ps + (cnorm[i * h + c] - 2.0 * acc[c])
                    if nxt_n == b and s > nxt_s[b - 1]:
                        continue
                    memcpy(child, pc, m * sizeof(short))
                    child[i] = <short>c
                    nxt_n = _insert(s, child, ph + zob[i * h + c], nxt_s, nxt_c,
                                    nxt_h, nxt_n, b, m)
        tmp_s = cur_s; cur_s = nxt_s; nxt_s = tmp_s
        tmp_c = cur_c; cur_c = nxt_c; nxt_c = tmp_c
        tmp_h = cur_h; cur_h = nxt_h; nxt_h = tmp_h
        cur_n = nxt_n
    for p in range(m):
        out[p] = <unsigned char>cur_c[p]
    return cur_s[0]


def beam_encode(const double[:, ::1] xc, const double[::1] xnorm,
                const double[:, ::1] cross, const double[::1] cnorm,
                unsigned char[:, ::1] codes, double[::1] scores,
                int m, int h, int b, int nthreads=1):
    """Beam search over unused codebooks; fills ``codes`` and ``scores``."""
    cdef Py_ssize_t n = xc.shape[0]
    cdef Py_ssize_t j
    cdef int k
    cdef double* cur_s
    cdef double* nxt_s
    cdef short* cur_c
    cdef short* nxt_c
    cdef unsigned long long* cur_h
    cdef unsigned long long* nxt_h
    cdef double* acc
    cdef short* child
    cdef unsigned long long* zob
    if n == 0:
        return
    zob = <unsigned long long*>malloc(m * h * sizeof(unsigned long long))
    for k in range(m * h):
        zob[k] = _splitmix64(<unsigned long long>(k + 1))
    with nogil, parallel(num_threads=nthreads):
        cur_s = <double*>malloc(b * sizeof(double))
        nxt_s = <double*>malloc(b * sizeof(double))
        cur_c = <short*>malloc(b * m * sizeof(short))
        nxt_c = <short*>malloc(b * m * sizeof(short))
        cur_h = <unsigned long long*>malloc(b * sizeof(unsigned long long))
        nxt_h = <unsigned long long*>malloc(b * sizeof(unsigned long long))
        acc = <double*>malloc(h * sizeof(double))
        child = <short*>malloc(m * sizeof(short))
        for j in prange(n, schedule="dynamic"):
            scores[j] = _beam_row(&xc[j, 0], xnorm[j], &cross[0, 0], &cnorm[0], zob,
                                  m, h, b, cur_s, cur_c, cur_h, nxt_s, nxt_c, nxt_h,
                                  acc, child, &codes[j, 0])
        free(cur_s)
        free(nxt_s)
        free(cur_c)
        free(nxt_c)
        free(cur_h)
        free(nxt_h)
        free(acc)
        free(child)
    free(zob)


def adc_scan(const double[:, ::1] tables, const unsigned char[:, ::1] codes,
             const double[::1] norms=None):
    """Sum of m table lookups per code row, plus the stored norm if given."""
    cdef Py_ssize_t n = codes.shape[0]
    cdef Py_ssize_t m = codes.shape[1]
    cdef Py_ssize_t j, i
    cdef double s
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef bint has_norms = norms is not None
    with nogil:
        for j in range(n):
            s = 0.0
            for i in range(m):
                s = s + tables[i, codes[j, i]]
            if has_norms:
                s = s + norms[j]
            o[j] = s
    return out
