"""Pure-Python reference implementations of the hot kernels.

These mirror ``_kernels.pyx`` one to one and are used whenever the compiled
extension is missing (or ``TVCS_PURE_PYTHON=1`` is set).  Face indices are
1-based; 0 and n act as ghost faces.
"""
from bisect import bisect_left, bisect_right

import numpy as np

LABEL_L0 = 0
LABEL_NAT = 1
LABEL_CIRC = 2


def build_tree_arrays(sbar, n):
    """Median-split tree over the faces 1..n-1 in level order.

    Parameters
    ----------
    sbar : int64 array
        Sorted extended support (1-based faces).
    n : int
        Signal length.

    Returns
    -------
    tuple of int64 arrays
        ``level, index, pivot, left, right, lo, hi, parent, child_l, child_r,
        label``, each of length n-1.
    """
    sbar = [int(v) for v in sbar]
    N = n - 1
    out = np.full((11, N), -1, dtype=np.int64)
    in_sbar = np.zeros(n + 1, dtype=bool)
    in_sbar[sbar] = True
    # queue entries: level, index, lo, hi, parent
    queue = [(1, 1, 1, N, -1)]
    head = 0
    v = 0
    while head < len(queue):
        level, idx, lo, hi, parent = queue[head]
        head += 1
        a = bisect_left(sbar, lo)
        b = bisect_right(sbar, hi)
        if b > a:
            p = sbar[a + (b - a + 1) // 2 - 1]
        else:
            p = lo + (hi - lo + 2) // 2 - 1
        left, right = lo - 1, hi + 1
        if in_sbar[p]:
            lab = LABEL_L0
        elif (left > 0 and in_sbar[left]) or (right < n and in_sbar[right]):
            lab = LABEL_NAT
        else:
            lab = LABEL_CIRC
        out[:, v] = (level, idx, p, left, right, lo, hi, parent, -1, -1, lab)
        if parent >= 0:
            out[8 + (idx + 1) % 2, parent] = v  # odd index -> left child
        if p > lo:
            queue.append((level + 1, 2 * idx - 1, lo, p - 1, v))
        if p < hi:
            queue.append((level + 1, 2 * idx, p + 1, hi, v))
        v += 1
    return tuple(out[k].copy() for k in range(11))


def dual_fill(pivot, left, right, label, level, d, dl, dr, sign_ext, G, tau, L0, gamma):
    """Fill the level-wise dual vector for a batch of Gaussian draws.

    Parameters
    ----------
    pivot, left, right, label, level : int64 arrays
        Level-ordered tree arrays.
    d, dl, dr : float64 arrays
        Haar constants per vertex.
    sign_ext : float64 array, length n+1
        Sign pattern on the faces (zeros at ghosts and off the support).
    G : float64 array, shape (T, n)
        Gaussian draws; column n-1 belongs to the constant row.
    tau : float
        Scaling of the dual vector.
    L0 : int
        Depth of the perfect top tree.
    gamma : float
        Box half-width factor for the free vertices.

    Returns
    -------
    W : ndarray, shape (T, n+1)
        Dual vectors with ghost entries 0 and n set to zero.
    R : ndarray, shape (T, n-1)
        Residual ``g_p - tau d (m - w_p)`` per vertex.
    """
    T, n = G.shape
    N = n - 1
    W = np.zeros((T, n + 1))
    R = np.empty((T, N))
    for v in range(N):
        p = pivot[v]
        m = dl[v] * W[:, left[v]] + dr[v] * W[:, right[v]]
        g = G[:, p - 1]
        scale = np.sqrt(2.0 ** (L0 - level[v]))
        if label[v] == LABEL_L0:
            w = np.full(T, sign_ext[p])
        elif label[v] == LABEL_NAT:
            rad = max(0.0, 1.0 - scale)
            w = np.clip(m, -rad, rad)
        else:
            half = gamma * scale
            w = np.clip(m - g / (tau * d[v]), m - half, m + half)
        W[:, p] = w
        R[:, v] = g - tau * d[v] * (m - w)
    return W, R


def project_linf_epigraph(t, U):
    """Project rows ``(t_i, U_i)`` onto ``{(t, u) : max|u| <= t}``.

    Parameters
    ----------
    t : float64 array, shape (T,)
    U : float64 array, shape (T, k)

    Returns
    -------
    (t_proj, U_proj)
    """
    t = np.asarray(t, dtype=float)
    U = np.asarray(U, dtype=float)
    T, k = U.shape
    t_out = np.empty(T)
    U_out = np.empty_like(U)
    for i in range(T):
        a = np.sort(np.abs(U[i]))[::-1]
        s = 0.0
        acc = t[i]
        if k == 0 or a[0] <= t[i]:
            s = max(t[i], 0.0)
        else:
            s = 0.0
            for j in range(1, k + 1):
                acc += a[j - 1]
                cand = acc / (j + 1)
                nxt = a[j] if j < k else 0.0
                if cand >= nxt:
                    s = max(cand, 0.0)
                    break
        t_out[i] = s
        U_out[i] = np.clip(U[i], -s, s)
    return t_out, U_out
