# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: orbit iteration and Ulam matrix assembly.

Must stay arithmetically identical to ``_fallback.py``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fabs

cnp.import_array()


cdef inline Py_ssize_t _branch(const double[::1] lo, Py_ssize_t nb, double x) noexcept nogil:
    # bisect_right(lo, x) - 1, clipped at 0
    cdef Py_ssize_t a = 0, b = nb, m
    while a < b:
        m = (a + b) >> 1
        if x < lo[m]:
            b = m
        else:
            a = m + 1
    a -= 1
    if a < 0:
        a = 0
    return a


def orbit_chunk(const double[::1] lo, const double[::1] ylo, const double[::1] slope,
                double dom_lo, double dom_hi, double x, Py_ssize_t n, bint record,
                cnp.int64_t[::1] hist, double hist_lo, double hist_scale, double boundary,
                cnp.int64_t[::1] runs, int side, long long run_len):
    """Iterate a piecewise-affine map ``n`` steps starting from ``x``.

    Branch ``k`` is ``y = ylo[k] + slope[k] * (x - lo[k])``.

    When ``record`` is set, each iterate is binned into ``hist`` and the
    lengths of completed same-side runs (``x < boundary`` versus the rest)
    are written to ``runs``. Returns ``(x, n_runs, side, run_len, clamps,
    n_a)``.
    """
    cdef Py_ssize_t nb = lo.shape[0], k, t, b
    cdef Py_ssize_t last = hist.shape[0] - 1
    cdef long long clamps = 0, n_a = 0
    cdef Py_ssize_t n_runs = 0
    cdef int s
    with nogil:
        for t in range(n):
            k = _branch(lo, nb, x)
            x = ylo[k] + slope[k] * (x - lo[k])
            if x < dom_lo:
                x = dom_lo
                clamps += 1
            elif x > dom_hi:
                x = dom_hi
                clamps += 1
            if record:
                b = <Py_ssize_t>((x - hist_lo) * hist_scale)
                if b > last:
                    b = last
                elif b < 0:
                    b = 0
                hist[b] += 1
                s = 0 if x < boundary else 1
                if s == 0:
                    n_a += 1
                if side < 0:
                    side = s
                    run_len = 1
                elif s == side:
                    run_len += 1
                else:
                    runs[n_runs] = run_len
                    n_runs += 1
                    side = s
                    run_len = 1
    return x, n_runs, side, run_len, clamps, n_a


cdef inline double _edge(Py_ssize_t i, double d0, double length, Py_ssize_t n) noexcept nogil:
    return d0 + length * <double>i / <double>n


cdef inline Py_ssize_t _index(double x, double d0, double length, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i = <Py_ssize_t>floor((x - d0) * <double>n / length)
    if i < 0:
        return 0
    if i > n - 1:
        return n - 1
    return i


cdef Py_ssize_t _ulam_pass(const double[::1] lo, const double[::1] hi,
                           const double[::1] ylo, const double[::1] slope,
                           double dom_lo, double dom_hi, Py_ssize_t n, bint fill,
                           cnp.int64_t[::1] rows, cnp.int64_t[::1] cols,
                           double[::1] vals) noexcept nogil:
    cdef double length = dom_hi - dom_lo
    cdef Py_ssize_t nb = lo.shape[0], q, i, j, cnt = 0
    cdef double a0, a1, s, c, bl, br, u0, u1, y0, y1, img_lo, img_hi, inv, cl, cr, ov
    for q in range(nb):
        a0 = lo[q]
        a1 = hi[q]
        c = ylo[q]
        s = slope[q]
        i = _index(a0, dom_lo, length, n) - 1
        if i < 0:
            i = 0
        while i < n:
            bl = _edge(i, dom_lo, length, n)
            if bl >= a1:
                break
            br = dom_hi if i == n - 1 else _edge(i + 1, dom_lo, length, n)
            u0 = a0 if a0 > bl else bl
            u1 = a1 if a1 < br else br
            if u1 > u0:
                y0 = c + s * (u0 - a0)
                y1 = c + s * (u1 - a0)
                img_lo = y0 if y0 < y1 else y1
                img_hi = y1 if y0 < y1 else y0
                if img_lo < dom_lo:
                    img_lo = dom_lo
                if img_hi > dom_hi:
                    img_hi = dom_hi
                inv = 1.0 / (fabs(s) * (br - bl))
                j = _index(img_lo, dom_lo, length, n) - 1
                if j < 0:
                    j = 0
                while j < n:
                    cl = _edge(j, dom_lo, length, n)
                    if cl >= img_hi:
                        break
                    cr = dom_hi if j == n - 1 else _edge(j + 1, dom_lo, length, n)
                    ov = (img_hi if img_hi < cr else cr) - (img_lo if img_lo > cl else cl)
                    if ov > 0:
                        if fill:
                            rows[cnt] = i
                            cols[cnt] = j
                            vals[cnt] = ov * inv
                        cnt += 1
                    j += 1
            i += 1
    return cnt


def ulam_entries(const double[::1] lo, const double[::1] hi, const double[::1] ylo,
                 const double[::1] slope, double dom_lo, double dom_hi, Py_ssize_t n):
    """COO triplets ``(rows, cols, vals)`` of the Ulam matrix on ``n`` bins."""
    cdef cnp.int64_t[::1] r0 = np.empty(0, dtype=np.int64)
    cdef double[::1] v0 = np.empty(0, dtype=np.float64)
    cdef Py_ssize_t cnt
    with nogil:
        cnt = _ulam_pass(lo, hi, ylo, slope, dom_lo, dom_hi, n, False, r0, r0, v0)
    rows = np.empty(cnt, dtype=np.int64)
    cols = np.empty(cnt, dtype=np.int64)
    vals = np.empty(cnt, dtype=np.float64)
    cdef cnp.int64_t[::1] rv = rows, cv = cols
    cdef double[::1] vv = vals
    with nogil:
        _ulam_pass(lo, hi, ylo, slope, dom_lo, dom_hi, n, True, rv, cv, vv)
    return rows, cols, vals
