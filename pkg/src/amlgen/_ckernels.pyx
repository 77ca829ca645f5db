# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops.  Each function mirrors one in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt, isfinite
from scipy.special.cython_special cimport ndtr, ndtri

cnp.import_array()


cdef inline long long _tn_cents(double u, double mean, double std,
                                long long lo_c, long long hi_c) nogil:
    cdef double lo, hi, zl, zh, pl, ph, sl, sh, z, x, c
    if hi_c < lo_c:
        return 0
    lo = lo_c / 100.0
    hi = hi_c / 100.0
    if std > 0:
        zl = (lo - mean) / std
        zh = (hi - mean) / std
        if zl >= 0:
            sl = ndtr(-zl)
            sh = ndtr(-zh)
            z = -ndtri(sl - u * (sl - sh))
        else:
            pl = ndtr(zl)
            ph = ndtr(zh)
            z = ndtri(pl + u * (ph - pl))
        x = mean + std * z
        if not isfinite(x):
            x = lo if zl >= 0 else hi
    else:
        x = mean
    c = floor(x * 100.0 + 0.5)
    if c < lo_c:
        return lo_c
    if c > hi_c:
        return hi_c
    return <long long>c


def truncnorm_cents_scalar(double u, double mean, double std, long long lo_c, long long hi_c):
    return _tn_cents(u, mean, std, lo_c, hi_c)


def settle_sampled(const long long[:] src, const long long[:] dst, const double[:, :] u,
                   long long[:] balance, double mean, double std,
                   long long lo_c, long long hi_c):
    """Sequential balance-capped transfers; returns amounts (0 = skipped).

    Row ``i`` of ``u`` holds the uniforms for transfer ``i``: candidate ``j``
    is the statically truncated draw from ``u[i, j]``; the first candidate
    within the balance is kept, otherwise the last one is clamped to it.
    """
    cdef Py_ssize_t i, j, n = src.shape[0], r = u.shape[1]
    cdef long long cap, a, s
    out = np.zeros(n, dtype=np.int64)
    cdef long long[:] amt = out
    with nogil:
        for i in range(n):
            s = src[i]
            cap = balance[s]
            if cap > hi_c:
                cap = hi_c
            if cap < lo_c:
                continue
            for j in range(r):
                a = _tn_cents(u[i, j], mean, std, lo_c, hi_c)
                if a <= cap:
                    break
            if a > cap:
                a = cap
            balance[s] -= a
            balance[dst[i]] += a
            amt[i] = a
    return out


def group_stats(const long long[:] starts, const double[:] values):
    """Per-group sum, mean, median, population std, max, min, count.

    ``values`` is sorted within each group; group ``g`` spans
    ``values[starts[g]:starts[g + 1]]``.
    """
    cdef Py_ssize_t g, i, a, b, k, ng = starts.shape[0] - 1
    cdef double s, m, v, d
    out = np.zeros((ng, 7), dtype=np.float64)
    cdef double[:, :] o = out
    with nogil:
        for g in range(ng):
            a = starts[g]
            b = starts[g + 1]
            k = b - a
            if k == 0:
                continue
            s = 0.0
            for i in range(a, b):
                s = s + values[i]
            m = s / k
            v = 0.0
            for i in range(a, b):
                d = values[i] - m
                v = v + d * d
            o[g, 0] = s
            o[g, 1] = m
            if k % 2 == 1:
                o[g, 2] = values[a + k // 2]
            else:
                o[g, 2] = 0.5 * (values[a + k // 2 - 1] + values[a + k // 2])
            o[g, 3] = sqrt(v / k)
            o[g, 4] = values[b - 1]
            o[g, 5] = values[a]
            o[g, 6] = k
    return out


def best_split(const double[:] x, const long long[:] y, Py_ssize_t min_leaf):
    """Best Gini split of one sorted feature column.

    Returns ``(score, threshold, n_left)``; score is ``l0*l1/nl + r0*r1/nr``
    (lower is better) and ``n_left`` is -1 when no split is admissible.
    Ties keep the lowest threshold.
    """
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double t1 = 0.0, l0 = 0.0, l1 = 0.0, r0, r1, nl, nr, score
    cdef double best = 1e300, thr = 0.0
    cdef Py_ssize_t pos = -1
    for i in range(n):
        t1 += y[i]
    with nogil:
        for i in range(n - 1):
            if y[i]:
                l1 += 1.0
            else:
                l0 += 1.0
            if x[i] == x[i + 1]:
                continue
            nl = i + 1
            nr = n - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            r1 = t1 - l1
            r0 = nr - r1
            score = l0 * l1 / nl + r0 * r1 / nr
            if score < best:
                best = score
                thr = 0.5 * (x[i] + x[i + 1])
                pos = i + 1
    return best, thr, pos


cdef inline Py_ssize_t _put_int(unsigned char* buf, Py_ssize_t pos, long long v) nogil:
    cdef unsigned char tmp[24]
    cdef int k = 0
    cdef unsigned long long w
    if v < 0:
        buf[pos] = 45  # '-'
        pos += 1
        w = <unsigned long long>(-(v + 1)) + 1
    else:
        w = <unsigned long long>v
    if w == 0:
        buf[pos] = 48
        return pos + 1
    while w > 0:
        tmp[k] = 48 + <unsigned char>(w % 10)
        w //= 10
        k += 1
    while k > 0:
        k -= 1
        buf[pos] = tmp[k]
        pos += 1
    return pos


def format_tx_csv(long long first_id, const int[:] step, const int[:] src, const int[:] dst,
                  const long long[:] amount, const signed char[:] channel,
                  const signed char[:] is_sar, const int[:] pattern,
                  const int[:] src_fi, const int[:] dst_fi):
    """Transaction rows as CSV bytes (no header); pattern -1 is written empty."""
    cdef Py_ssize_t i, n = step.shape[0], pos = 0
    out = bytearray(n * 140 + 1)
    cdef unsigned char[:] view = out
    cdef unsigned char* buf = &view[0]
    cdef const char* label
    cdef int j
    with nogil:
        for i in range(n):
            pos = _put_int(buf, pos, first_id + i)
            buf[pos] = 44
            pos = _put_int(buf, pos + 1, step[i])
            buf[pos] = 44
            pos = _put_int(buf, pos + 1, src[i])
            buf[pos] = 44
            pos = _put_int(buf, pos + 1, dst[i])
            buf[pos] = 44
            pos = _put_int(buf, pos + 1, amount[i])
            buf[pos] = 44
            pos += 1
            label = b"CASH" if channel[i] else b"TRANSFER"
            j = 0
            while label[j] != 0:
                buf[pos] = label[j]
                pos += 1
                j += 1
            buf[pos] = 44
            pos = _put_int(buf, pos + 1, is_sar[i])
            buf[pos] = 44
            pos += 1
            if pattern[i] >= 0:
                pos = _put_int(buf, pos, pattern[i])
            buf[pos] = 44
            pos = _put_int(buf, pos + 1, src_fi[i])
            buf[pos] = 44
            pos = _put_int(buf, pos + 1, dst_fi[i])
            buf[pos] = 10
            pos += 1
    return bytes(out[:pos])
