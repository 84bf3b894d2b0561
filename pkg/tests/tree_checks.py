"""Structural checks of a median-split tree, written against the raw arrays."""
import math

import numpy as np


def isometry_pairs(sbar, n):
    """Violations of h|i-j|/4 <= |z_i - z_j| <= 2h|i-j| including the boundary faces."""
    z = [0] + [int(v) for v in sbar] + [n]
    h = n / (len(z) - 1)
    bad = 0
    for i in range(len(z)):
        for j in range(i + 1, len(z)):
            gap = z[j] - z[i]
            if not (h * (j - i) / 4 - 1e-9 <= gap <= 2 * h * (j - i) + 1e-9):
                bad += 1
    return bad


def tree_violations(tree, faces=None, delta=None):
    """Return a list of human-readable invariant violations (empty when all hold)."""
    out = []
    n, N = tree.n, tree.n - 1
    sbar = set(int(v) for v in tree.support_bar)
    s_bar = len(sbar)
    L0 = int(s_bar).bit_length()
    piv = tree.pivot
    lev = tree.level
    top = tree.label == 0

    # pivot map is a bijection onto the faces, and onto the extended support on the top class
    if sorted(piv.tolist()) != list(range(1, N + 1)):
        out.append("pivot map is not a bijection onto 1..N")
    if sorted(piv[top].tolist()) != sorted(sbar):
        out.append("top pivots differ from the extended support")

    in_sbar = np.zeros(n + 1, dtype=np.int64)
    in_sbar[list(sbar)] = 1
    csum = np.concatenate(([0], np.cumsum(in_sbar)))  # csum[k] = #sbar faces < k
    hits = csum[tree.hi + 1] - csum[tree.lo]
    sizes = tree.hi - tree.lo + 1
    # halving of the extended support along the levels
    if np.any(hits > s_bar // 2 ** (lev - 1)):
        out.append("extended-support count exceeds floor(s_bar / 2^(level-1))")
    if s_bar:
        if not np.any(hits[lev == L0] > 0):
            out.append("no level-L0 vertex meets the extended support")
    if np.any(hits[lev == L0 + 1] > 0):
        out.append("a level-(L0+1) vertex meets the extended support")
    if np.any(sizes[lev == L0 + 1] > N - s_bar):
        out.append("level-(L0+1) range larger than N - s_bar")
    depth_bound = math.ceil(math.log2(s_bar + 1)) + (math.ceil(math.log2(n - s_bar)) if n - s_bar > 1 else 0)
    if tree.depth > depth_bound:
        out.append(f"depth {tree.depth} exceeds {depth_bound}")

    # ranges are the faces strictly between the neighbouring faces
    if np.any(tree.lo != tree.left + 1) or np.any(tree.hi != tree.right - 1):
        out.append("face range differs from the neighbour interval")
    nl = piv - tree.left
    nr = tree.right - piv
    if np.any(nl < 1) or np.any(nr < 1) or np.any(nl + nr != sizes + 1):
        out.append("half sizes inconsistent with the range size")
    for side, child, half in ((0, tree.child_left, nl), (1, tree.child_right, nr)):
        has = child >= 0
        c = child[has]
        if np.any(sizes[c] + 1 != half[has]):
            out.append("child range size does not match the parent half")
        # near halving when the child misses the extended support
        miss = hits[c] == 0
        parent_half = half[has][miss]
        cc = c[miss]
        for arr in (nl[cc], nr[cc]):
            if np.any(arr < (parent_half - 1) / 2) or np.any(arr > (parent_half + 1) / 2):
                out.append("near-halving bound violated")
                break
        if np.any((half[has] == 1)):
            out.append("child present under a half of size one")

    # node sets of any two vertices are disjoint or nested inside one half
    qa, qb = tree.left + 1, tree.right  # Q = qa..qb (nodes)
    order = np.argsort(lev, kind="stable")
    for k in range(N):
        j = order[k]
        later = order[k + 1:]
        disjoint = (qb[later] < qa[j]) | (qa[later] > qb[j])
        in_left = (qa[later] >= qa[j]) & (qb[later] <= piv[j])
        in_right = (qa[later] >= piv[j] + 1) & (qb[later] <= qb[j])
        if np.any((disjoint.astype(int) + in_left + in_right) != 1):
            out.append("node sets overlap without nesting")
            break

    # class sizes
    topset = set(piv[top].tolist())
    adj_expected = np.array([(not t) and (l in topset or r in topset)
                             for t, l, r in zip(top, tree.left.tolist(), tree.right.tolist())])
    if np.any(adj_expected != (tree.label == 1)):
        out.append("adjacent labels disagree with the neighbour rule")
    k_top, k_adj, k_free = (int(np.count_nonzero(tree.label == c)) for c in (0, 1, 2))
    if k_top != s_bar:
        out.append("top class size differs from s_bar")
    if k_free > n - s_bar:
        out.append("free class larger than n - s_bar")
    if n - s_bar > 1 and k_adj > 4 * s_bar * math.log2(n - s_bar) + 1e-9:
        out.append("adjacent class larger than 4 s_bar log2(n - s_bar)")

    # balancing ratios, computed from the half sizes
    beta = np.sqrt(1 / nl + 1 / nr) / np.sqrt(2.0 ** (lev + 1) / n)
    if faces is not None and delta is not None and delta >= 8 * len(faces) / n:
        if np.any(beta[tree.label == 0] > 2 + 1e-12):
            out.append("top balancing ratio above 2")
        if np.any(beta[tree.label == 1] > math.sqrt(8) + 1e-12):
            out.append("adjacent balancing ratio above sqrt(8)")
        if np.any(beta[tree.label == 2] < 0.5 - 1e-12):
            out.append("free balancing ratio below 1/2")
        if isometry_pairs(sorted(sbar), n):
            out.append("approximate isometry violated")
        s = len(faces)
        if not ((s + 1) / delta - 1e-9 <= s_bar + 1 <= 4 * s / delta + 1e-9):
            out.append("s_bar outside [(s+1)/delta - 1, 4s/delta - 1]")
        if not set(int(f) for f in faces) <= sbar:
            out.append("support not contained in the extended support")
    return out


def dual_violations(tree, sign_pattern, W):
    """Count rows of ``W`` (shape (T, n+1)) outside the feasible box structure.

    A row must vanish at the ghost faces, equal the sign pattern on the
    support, stay in [-1, 1] elsewhere and, at every non-top vertex of level
    ``l``, lie in ``[-1 + sqrt(2^(L0-l)), 1 - sqrt(2^(L0-l))]``.
    """
    W = np.atleast_2d(W)
    n = tree.n
    L0 = int(tree.s_bar).bit_length()
    sgn = np.asarray(sign_pattern, dtype=float)
    supp = np.flatnonzero(sgn != 0) + 1
    bad = np.zeros(W.shape[0], dtype=bool)
    bad |= (W[:, 0] != 0) | (W[:, n] != 0)
    bad |= np.any(W[:, supp] != sgn[supp - 1], axis=1)
    bad |= np.any(np.abs(W[:, 1:n]) > 1 + 1e-12, axis=1)
    rest = tree.label != 0
    faces = tree.pivot[rest]
    lev = tree.level[rest]
    if np.any(lev < L0):
        return W.shape[0]
    rad = 1 - np.sqrt(2.0 ** (L0 - lev))
    bad |= np.any(np.abs(W[:, faces]) > rad + 1e-12, axis=1)
    return int(np.count_nonzero(bad))
