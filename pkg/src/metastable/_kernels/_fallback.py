"""Pure-Python kernels, used when the compiled extension is unavailable.

The arithmetic mirrors ``_core.pyx`` operation for operation, so both
backends produce bit-identical orbits and Ulam entries.
"""

from bisect import bisect_right
import math

import numpy as np


def orbit_chunk(lo, ylo, slope, dom_lo, dom_hi, x, n, record,
                hist, hist_lo, hist_scale, boundary, runs, side, run_len):
    """Iterate ``n`` steps from ``x``; see ``_core.orbit_chunk`` for the contract."""
    lo = lo.tolist()
    ylo = ylo.tolist()
    slope = slope.tolist()
    nbins = len(hist)
    last = nbins - 1
    clamps = 0
    n_a = 0
    n_runs = 0
    counts = [0] * nbins if record else None
    for _ in range(n):
        k = bisect_right(lo, x) - 1
        if k < 0:
            k = 0
        x = ylo[k] + slope[k] * (x - lo[k])
        if x < dom_lo:
            x = dom_lo
            clamps += 1
        elif x > dom_hi:
            x = dom_hi
            clamps += 1
        if record:
            b = int((x - hist_lo) * hist_scale)
            if b > last:
                b = last
            elif b < 0:
                b = 0
            counts[b] += 1
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
    if record:
        hist += np.asarray(counts, dtype=np.int64)
    return x, n_runs, side, run_len, clamps, n_a


def _edge(i, d0, length, n):
    return d0 + length * i / n


def _index(x, d0, length, n):
    i = int(math.floor((x - d0) * n / length))
    return min(max(i, 0), n - 1)


def ulam_entries(lo, hi, ylo, slope, dom_lo, dom_hi, n):
    """COO triplets ``(rows, cols, vals)`` of the Ulam matrix on ``n`` bins."""
    length = dom_hi - dom_lo
    rows, cols, vals = [], [], []
    for a0, a1, c, s in zip(lo.tolist(), hi.tolist(), ylo.tolist(), slope.tolist()):
        i = max(_index(a0, dom_lo, length, n) - 1, 0)
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
                inv = 1.0 / (abs(s) * (br - bl))
                j = max(_index(img_lo, dom_lo, length, n) - 1, 0)
                while j < n:
                    cl = _edge(j, dom_lo, length, n)
                    if cl >= img_hi:
                        break
                    cr = dom_hi if j == n - 1 else _edge(j + 1, dom_lo, length, n)
                    ov = (img_hi if img_hi < cr else cr) - (img_lo if img_lo > cl else cl)
                    if ov > 0:
                        rows.append(i)
                        cols.append(j)
                        vals.append(ov * inv)
                    j += 1
            i += 1
    return (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64),
            np.asarray(vals, dtype=float))
