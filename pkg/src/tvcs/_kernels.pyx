# cython: language_level=3
"""Compiled versions of the sequential kernels in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow, fabs

cnp.import_array()

cdef enum:
    LABEL_L0 = 0
    LABEL_NAT = 1
    LABEL_CIRC = 2


cdef inline Py_ssize_t _lower_bound(const cnp.int64_t[:] a, Py_ssize_t n, long long x) nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline Py_ssize_t _upper_bound(const cnp.int64_t[:] a, Py_ssize_t n, long long x) nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


def build_tree_arrays(sbar, Py_ssize_t n):
    cdef cnp.int64_t[:] sb = np.ascontiguousarray(sbar, dtype=np.int64)
    cdef Py_ssize_t ns = sb.shape[0]
    cdef Py_ssize_t N = n - 1
    out_arr = np.full((11, N), -1, dtype=np.int64)
    cdef cnp.int64_t[:, :] out = out_arr
    # queue rows: level, index, lo, hi, parent
    queue_arr = np.empty((N, 5), dtype=np.int64)
    cdef cnp.int64_t[:, :] q = queue_arr
    insb_arr = np.zeros(n + 1, dtype=np.uint8)
    cdef unsigned char[:] insb = insb_arr
    cdef Py_ssize_t k, head = 0, tail = 1, v = 0, a, b
    cdef long long level, idx, lo, hi, parent, p, left, right, lab
    for k in range(ns):
        insb[sb[k]] = 1
    q[0, 0] = 1; q[0, 1] = 1; q[0, 2] = 1; q[0, 3] = N; q[0, 4] = -1
    with nogil:
        while head < tail:
            level = q[head, 0]; idx = q[head, 1]; lo = q[head, 2]
            hi = q[head, 3]; parent = q[head, 4]
            head += 1
            a = _lower_bound(sb, ns, lo)
            b = _upper_bound(sb, ns, hi)
            if b > a:
                p = sb[a + (b - a + 1) // 2 - 1]
            else:
                p = lo + (hi - lo + 2) // 2 - 1
            left = lo - 1
            right = hi + 1
            if insb[p]:
                lab = LABEL_L0
            elif (left > 0 and insb[left]) or (right < n and insb[right]):
                lab = LABEL_NAT
            else:
                lab = LABEL_CIRC
            out[0, v] = level; out[1, v] = idx; out[2, v] = p
            out[3, v] = left; out[4, v] = right; out[5, v] = lo
            out[6, v] = hi; out[7, v] = parent; out[10, v] = lab
            if parent >= 0:
                out[8 + (idx + 1) % 2, parent] = v
            if p > lo:
                q[tail, 0] = level + 1; q[tail, 1] = 2 * idx - 1
                q[tail, 2] = lo; q[tail, 3] = p - 1; q[tail, 4] = v
                tail += 1
            if p < hi:
                q[tail, 0] = level + 1; q[tail, 1] = 2 * idx
                q[tail, 2] = p + 1; q[tail, 3] = hi; q[tail, 4] = v
                tail += 1
            v += 1
    return tuple(out_arr[k].copy() for k in range(11))


def dual_fill(pivot, left, right, label, level, d, dl, dr, sign_ext, G,
              double tau, long L0, double gamma):
    cdef const cnp.int64_t[:] piv = np.ascontiguousarray(pivot, dtype=np.int64)
    cdef const cnp.int64_t[:] lft = np.ascontiguousarray(left, dtype=np.int64)
    cdef const cnp.int64_t[:] rgt = np.ascontiguousarray(right, dtype=np.int64)
    cdef const cnp.int64_t[:] lab = np.ascontiguousarray(label, dtype=np.int64)
    cdef const cnp.int64_t[:] lev = np.ascontiguousarray(level, dtype=np.int64)
    cdef const double[:] dd = np.ascontiguousarray(d, dtype=np.float64)
    cdef const double[:] ddl = np.ascontiguousarray(dl, dtype=np.float64)
    cdef const double[:] ddr = np.ascontiguousarray(dr, dtype=np.float64)
    cdef const double[:] sg = np.ascontiguousarray(sign_ext, dtype=np.float64)
    cdef const double[:, :] g = np.ascontiguousarray(G, dtype=np.float64)
    cdef Py_ssize_t T = g.shape[0], n = g.shape[1], N = n - 1
    W_arr = np.zeros((T, n + 1))
    R_arr = np.empty((T, N))
    cdef double[:, :] W = W_arr
    cdef double[:, :] R = R_arr
    cdef Py_ssize_t t, v
    cdef long long p
    cdef double m, w, gp, scale, rad, half, lo, hi, td
    with nogil:
        for t in range(T):
            for v in range(N):
                p = piv[v]
                m = ddl[v] * W[t, lft[v]] + ddr[v] * W[t, rgt[v]]
                gp = g[t, p - 1]
                scale = sqrt(pow(2.0, <double>(L0 - lev[v])))
                td = tau * dd[v]
                if lab[v] == LABEL_L0:
                    w = sg[p]
                elif lab[v] == LABEL_NAT:
                    rad = 1.0 - scale
                    if rad < 0.0:
                        rad = 0.0
                    w = m
                    if w > rad:
                        w = rad
                    elif w < -rad:
                        w = -rad
                else:
                    half = gamma * scale
                    w = m - gp / td
                    lo = m - half
                    hi = m + half
                    if w > hi:
                        w = hi
                    elif w < lo:
                        w = lo
                W[t, p] = w
                R[t, v] = gp - td * (m - w)
    return W_arr, R_arr


def project_linf_epigraph(t, U):
    cdef const double[:] tt = np.ascontiguousarray(t, dtype=np.float64)
    U_arr = np.ascontiguousarray(U, dtype=np.float64)
    cdef const double[:, :] u = U_arr
    cdef Py_ssize_t T = u.shape[0], k = u.shape[1]
    # descending magnitudes per row
    A_arr = -np.sort(-np.abs(U_arr), axis=1)
    cdef const double[:, :] a = A_arr
    t_out_arr = np.empty(T)
    U_out_arr = np.empty((T, k))
    cdef double[:] to = t_out_arr
    cdef double[:, :] uo = U_out_arr
    cdef Py_ssize_t i, j
    cdef double s, acc, cand, nxt, x
    with nogil:
        for i in range(T):
            if k == 0 or a[i, 0] <= tt[i]:
                s = tt[i] if tt[i] > 0.0 else 0.0
            else:
                s = 0.0
                acc = tt[i]
                for j in range(1, k + 1):
                    acc = acc + a[i, j - 1]
                    cand = acc / (j + 1)
                    nxt = a[i, j] if j < k else 0.0
                    if cand >= nxt:
                        s = cand if cand > 0.0 else 0.0
                        break
            to[i] = s
            for j in range(k):
                x = u[i, j]
                if x > s:
                    x = s
                elif x < -s:
                    x = -s
                uo[i, j] = x
    return t_out_arr, U_out_arr
